#include "snipper/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "snipper/error.hpp"
#include "snipper/metrics.hpp"

namespace snipper::cli {

namespace {

constexpr std::size_t kMaxRank = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(double v) { le(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : buf_(std::move(data)) {}

  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint truncated reading ") + what + " at offset " +
                       std::to_string(pos_));
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t offset() const { return pos_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

struct RawTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

void write_tensor(Writer& w, const std::string& name, const Shape& shape,
                  std::span<const double> values) {
  if (name.size() > 0xffff) throw ContractError("tensor name too long: " + name);
  w.le(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.le(static_cast<std::uint8_t>(shape.size()));
  for (auto e : shape) w.le(static_cast<std::uint64_t>(e));
  for (double v : values) w.f32(v);
}

RawTensor read_tensor(Reader& r) {
  RawTensor t;
  const auto len = r.le<std::uint16_t>("name length");
  t.name = r.str(len, "tensor name");
  const auto rank = r.le<std::uint8_t>("rank");
  if (rank > kMaxRank) {
    throw ParseError("tensor '" + t.name + "' has implausible rank " + std::to_string(rank));
  }
  std::uint64_t numel = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const auto e = r.le<std::uint64_t>("extent");
    if (e != 0 && numel > r.remaining() / e) {
      throw ParseError("tensor '" + t.name + "' extents exceed the file size");
    }
    numel *= e;
    t.shape.push_back(static_cast<std::size_t>(e));
  }
  if (numel > r.remaining() / 4) {
    throw ParseError("checkpoint truncated in tensor '" + t.name + "' at offset " +
                     std::to_string(r.offset()));
  }
  t.values.resize(numel);
  for (auto& v : t.values) v = std::bit_cast<float>(r.le<std::uint32_t>("tensor data"));
  return t;
}

std::string rng_string(const Rng::State& s) {
  std::ostringstream out;
  out << s[0] << ' ' << s[1] << ' ' << s[2] << ' ' << s[3];
  return out.str();
}

}  // namespace

std::map<std::string, std::string> config_to_map(const model::ModelConfig& c) {
  return {
      {"channels", std::to_string(c.channels)},
      {"frames", std::to_string(c.frames)},
      {"future_frames", std::to_string(c.future_frames)},
      {"max_people", std::to_string(c.max_people)},
      {"joints", std::to_string(c.joints)},
      {"encoder_layers", std::to_string(c.encoder_layers)},
      {"decoder_layers", std::to_string(c.decoder_layers)},
      {"scales", std::to_string(c.scales)},
      {"image_height", std::to_string(c.image_height)},
      {"image_width", std::to_string(c.image_width)},
      {"base_heads", std::to_string(c.base_heads)},
      {"points", std::to_string(c.points)},
      {"ffn_hidden", std::to_string(c.ffn_hidden)},
      {"variant", attention::variant_name(c.variant)},
      {"temporal_encoding", c.temporal_encoding ? "true" : "false"},
      {"initial_depth", metrics::format_real(c.initial_depth)},
  };
}

model::ModelConfig config_from_map(const std::map<std::string, std::string>& v) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = v.find(key);
    if (it == v.end()) throw ParseError("checkpoint metadata lacks model." + key);
    return it->second;
  };
  auto size = [&](const std::string& key) {
    try {
      return static_cast<std::size_t>(std::stoull(get(key)));
    } catch (const std::logic_error&) {
      throw ParseError("checkpoint metadata has a bad value for model." + key);
    }
  };
  model::ModelConfig c;
  c.channels = size("channels");
  c.frames = size("frames");
  c.future_frames = size("future_frames");
  c.max_people = size("max_people");
  c.joints = size("joints");
  c.encoder_layers = size("encoder_layers");
  c.decoder_layers = size("decoder_layers");
  c.scales = size("scales");
  c.image_height = size("image_height");
  c.image_width = size("image_width");
  c.base_heads = size("base_heads");
  c.points = size("points");
  c.ffn_hidden = size("ffn_hidden");
  c.variant = attention::parse_variant(get("variant"));
  c.temporal_encoding = get("temporal_encoding") == "true";
  c.initial_depth = std::stod(get("initial_depth"));
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const model::ModelParams& params,
                     const OptimizerState& optimizer, const Checkpoint& info) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.le(kCheckpointVersion);
  const auto named = params.named();
  w.le(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) write_tensor(w, name, t.shape(), t.values());

  std::uint32_t count = 0;
  for (const auto& slot : optimizer.slots) count += (slot.first.empty() ? 0 : 1) + (slot.second.empty() ? 0 : 1);
  if (!optimizer.slots.empty() && optimizer.slots.size() != named.size()) {
    throw ContractError("optimizer state does not match the parameter list");
  }
  w.le(count);
  for (std::size_t i = 0; i < optimizer.slots.size(); ++i) {
    const auto& [name, t] = named[i];
    const auto& slot = optimizer.slots[i];
    if (!slot.first.empty()) write_tensor(w, "first." + name, t.shape(), slot.first);
    if (!slot.second.empty()) write_tensor(w, "second." + name, t.shape(), slot.second);
  }

  std::string meta;
  for (const auto& [k, v] : config_to_map(info.config)) meta += "model." + k + "=" + v + "\n";
  meta += "step=" + std::to_string(info.step) + "\n";
  meta += "optimizer_steps=" + std::to_string(optimizer.steps) + "\n";
  meta += "rng=" + rng_string(info.rng) + "\n";
  for (const auto& [k, v] : info.metadata) meta += "extra." + k + "=" + v + "\n";
  w.le(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());

  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ParseError("cannot write checkpoint " + tmp);
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw ParseError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const model::ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  if (r.str(sizeof kCheckpointMagic, "magic") != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw ParseError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  std::vector<RawTensor> tensors, opt;
  const auto n = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < n; ++i) tensors.push_back(read_tensor(r));
  const auto m = r.le<std::uint32_t>("optimizer count");
  for (std::uint32_t i = 0; i < m; ++i) opt.push_back(read_tensor(r));
  const auto meta_len = r.le<std::uint32_t>("metadata length");
  const std::string meta = r.str(meta_len, "metadata");
  if (r.remaining() != 0) throw ParseError("trailing bytes after checkpoint metadata");

  std::map<std::string, std::string> kv, model_kv;
  std::istringstream ms(meta);
  std::string line;
  while (std::getline(ms, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("malformed checkpoint metadata line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  LoadedCheckpoint out;
  for (const auto& [k, v] : kv) {
    if (k.rfind("model.", 0) == 0) model_kv[k.substr(6)] = v;
    if (k.rfind("extra.", 0) == 0) out.info.metadata[k.substr(6)] = v;
  }
  try {
    out.info.config = config_from_map(model_kv);
    out.info.step = std::stoull(kv.at("step"));
    out.optimizer.steps = std::stoull(kv.at("optimizer_steps"));
    std::istringstream rs(kv.at("rng"));
    for (auto& s : out.info.rng)
      if (!(rs >> s)) throw ParseError("bad rng state in checkpoint");
  } catch (const std::out_of_range&) {
    throw ParseError("checkpoint metadata is incomplete");
  } catch (const std::invalid_argument&) {
    throw ParseError("checkpoint metadata has a malformed number");
  }

  const model::ModelConfig& target = expected ? *expected : out.info.config;
  out.params = model::ModelParams::init(target, 0);
  const auto named = out.params.named();
  if (named.size() != tensors.size()) {
    throw DimensionError("checkpoint holds " + std::to_string(tensors.size()) +
                         " tensors, model expects " + std::to_string(named.size()));
  }
  std::map<std::string, const RawTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (const auto& [name, t] : named) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DimensionError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape != t.shape()) {
      throw DimensionError("tensor '" + name + "' has shape " + shape_string(it->second->shape) +
                           " in the checkpoint, model expects " + shape_string(t.shape()));
    }
    auto dst = Tensor(t).mutable_values();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
  if (!opt.empty()) {
    std::map<std::string, const RawTensor*> opt_by_name;
    for (const auto& t : opt) opt_by_name[t.name] = &t;
    out.optimizer.slots.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& [name, t] = named[i];
      for (auto [prefix, dst] : {std::pair{"first.", &out.optimizer.slots[i].first},
                                 std::pair{"second.", &out.optimizer.slots[i].second}}) {
        auto it = opt_by_name.find(prefix + name);
        if (it == opt_by_name.end()) continue;
        if (it->second->shape != t.shape()) {
          throw DimensionError("optimizer tensor '" + it->first + "' has the wrong shape");
        }
        *dst = it->second->values;
      }
    }
  }
  return out;
}

}  // namespace snipper::cli
