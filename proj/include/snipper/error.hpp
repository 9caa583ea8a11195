#pragma once

#include <stdexcept>
#include <string>

namespace snipper {

// Error kinds map onto CLI exit codes: config -> 2, data -> 3, numeric -> 4.
enum class ErrorKind {
  kDimension,
  kContract,
  kConfig,
  kDomain,
  kDegenerate,
  kCapacity,
  kProtocol,
  kParse,
  kVersion,
  kNumeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SNIPPER_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(Kind, what) {}     \
  };

SNIPPER_DEFINE_ERROR(DimensionError, ErrorKind::kDimension)
SNIPPER_DEFINE_ERROR(ContractError, ErrorKind::kContract)
SNIPPER_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
SNIPPER_DEFINE_ERROR(DomainError, ErrorKind::kDomain)
SNIPPER_DEFINE_ERROR(DegenerateError, ErrorKind::kDegenerate)
SNIPPER_DEFINE_ERROR(CapacityError, ErrorKind::kCapacity)
SNIPPER_DEFINE_ERROR(ProtocolError, ErrorKind::kProtocol)
SNIPPER_DEFINE_ERROR(ParseError, ErrorKind::kParse)
SNIPPER_DEFINE_ERROR(VersionError, ErrorKind::kVersion)
SNIPPER_DEFINE_ERROR(NumericError, ErrorKind::kNumeric)

#undef SNIPPER_DEFINE_ERROR

}  // namespace snipper
