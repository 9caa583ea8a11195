#include "snipper/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "snipper/error.hpp"
#include "snipper/metrics.hpp"

namespace snipper::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("not a number: '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("not a non-negative integer: '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field size_field(std::size_t& ref) {
  return {[&ref](const std::string& v) { ref = static_cast<std::size_t>(to_u64(v)); },
          [&ref] { return std::to_string(ref); }};
}
Field u64_field(std::uint64_t& ref) {
  return {[&ref](const std::string& v) { ref = to_u64(v); }, [&ref] { return std::to_string(ref); }};
}
Field real_field(double& ref) {
  return {[&ref](const std::string& v) { ref = to_real(v); },
          [&ref] { return metrics::format_real(ref); }};
}
Field bool_field(bool& ref) {
  return {[&ref](const std::string& v) { ref = to_bool(v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}
Field string_field(std::string& ref) {
  return {[&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

std::map<std::string, Field> registry(RunConfig& c) {
  std::map<std::string, Field> f;
  auto& m = c.model;
  f["model.channels"] = size_field(m.channels);
  f["model.frames"] = size_field(m.frames);
  f["model.future_frames"] = size_field(m.future_frames);
  f["model.max_people"] = size_field(m.max_people);
  f["model.joints"] = size_field(m.joints);
  f["model.encoder_layers"] = size_field(m.encoder_layers);
  f["model.decoder_layers"] = size_field(m.decoder_layers);
  f["model.scales"] = size_field(m.scales);
  f["model.image_height"] = size_field(m.image_height);
  f["model.image_width"] = size_field(m.image_width);
  f["model.base_heads"] = size_field(m.base_heads);
  f["model.points"] = size_field(m.points);
  f["model.ffn_hidden"] = size_field(m.ffn_hidden);
  f["model.temporal_encoding"] = bool_field(m.temporal_encoding);
  f["model.initial_depth"] = real_field(m.initial_depth);
  f["model.variant"] = {[&m](const std::string& v) { m.variant = attention::parse_variant(v); },
                        [&m] { return attention::variant_name(m.variant); }};

  auto& d = c.data;
  f["data.dataset"] = string_field(d.dataset);
  f["data.scenes"] = size_field(d.scenes);
  f["data.scene_frames"] = size_field(d.scene_frames);
  f["data.people_min"] = size_field(d.people_min);
  f["data.people_max"] = size_field(d.people_max);
  f["data.linear_speed"] = real_field(d.linear_speed);
  f["data.angular_speed"] = real_field(d.angular_speed);
  f["data.occlusion_rate"] = real_field(d.occlusion_rate);
  f["data.held_out_fraction"] = real_field(d.held_out_fraction);
  f["data.eval_window"] = size_field(d.eval_window);

  auto& t = c.train;
  f["train.steps"] = size_field(t.steps);
  f["train.batch"] = size_field(t.batch);
  f["train.checkpoint_every"] = size_field(t.checkpoint_every);
  f["train.resume"] = string_field(t.resume);
  f["train.lr"] = real_field(t.optimizer.lr);
  f["train.momentum"] = real_field(t.optimizer.momentum);
  f["train.beta1"] = real_field(t.optimizer.beta1);
  f["train.beta2"] = real_field(t.optimizer.beta2);
  f["train.eps"] = real_field(t.optimizer.eps);
  f["train.clip_norm"] = real_field(t.optimizer.clip_norm);
  f["train.optimizer"] = {
      [&t](const std::string& v) { t.optimizer.kind = parse_optimizer_kind(v); },
      [&t] { return std::string(t.optimizer.kind == OptimizerKind::kAdam ? "adam" : "momentum"); }};
  f["train.heatmap_sigma"] = real_field(t.heatmap_sigma);
  f["train.supervise_absent"] = bool_field(t.loss.supervise_absent);
  f["train.weight_occ"] = real_field(t.loss.weights.occ);
  f["train.weight_traj"] = real_field(t.loss.weights.traj);
  f["train.weight_vis"] = real_field(t.loss.weights.vis);
  f["train.weight_offset"] = real_field(t.loss.weights.offset);
  f["train.weight_smooth"] = real_field(t.loss.weights.smooth);
  f["train.weight_heatmap"] = real_field(t.loss.weights.heatmap);

  auto& e = c.eval;
  f["eval.checkpoint"] = string_field(e.checkpoint);
  f["eval.splits"] = {[&e](const std::string& v) { e.splits = split_list(v); },
                      [&e] { return join(e.splits); }};
  f["eval.presence"] = real_field(e.tracking.presence);
  f["eval.association_threshold"] = real_field(e.tracking.threshold);
  f["eval.hungarian_association"] = bool_field(e.tracking.hungarian);
  f["eval.metric_gate"] = real_field(e.metric_gate);
  f["eval.pck_threshold_mm"] = real_field(e.pck_threshold_mm);
  f["eval.f1_thresholds"] = {
      [&e](const std::string& v) {
        e.f1_thresholds.clear();
        for (const auto& s : split_list(v)) e.f1_thresholds.push_back(to_real(s));
      },
      [&e] {
        std::vector<std::string> parts;
        for (double x : e.f1_thresholds) parts.push_back(metrics::format_real(x));
        return join(parts);
      }};

  auto& a = c.ablate;
  f["ablate.variants"] = {[&a](const std::string& v) { a.variants = split_list(v); },
                          [&a] { return join(a.variants); }};
  f["ablate.seeds"] = {
      [&a](const std::string& v) {
        a.seeds.clear();
        for (const auto& s : split_list(v)) a.seeds.push_back(to_u64(s));
      },
      [&a] {
        std::vector<std::string> parts;
        for (auto s : a.seeds) parts.push_back(std::to_string(s));
        return join(parts);
      }};
  f["ablate.split"] = string_field(a.split);

  f["run.seed"] = u64_field(c.seed);
  f["run.out"] = string_field(c.out);
  return f;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile file;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(at + "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (file.values.count(full)) throw ConfigError(at + "duplicate key '" + full + "'");
    file.values[full] = trim(line.substr(eq + 1));
    file.lines[full] = line_no;
  }
  return file;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::apply(const ConfigFile& file) {
  auto fields = registry(*this);
  for (const auto& [key, value] : file.values) {
    const auto line = file.lines.count(key) ? file.lines.at(key) : 0;
    auto it = fields.find(key);
    if (it == fields.end()) {
      throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line) + ")");
    }
    try {
      it->second.set(value);
    } catch (const Error& e) {
      throw ConfigError("config key '" + key + "' (line " + std::to_string(line) + "): " + e.what());
    }
  }
}

void RunConfig::validate() const {
  model.validate();
  if (model.joints != geometry::kDefaultJoints) {
    throw ConfigError("synthetic data provides 15 joints; model.joints must be 15");
  }
  if (data.people_min > data.people_max) throw ConfigError("people_min exceeds people_max");
  if (data.people_max > model.max_people) {
    throw ConfigError("scenes may hold more people than model.max_people");
  }
  if (train.batch == 0) throw ConfigError("train.batch must be positive");
  if (!(train.optimizer.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (data.held_out_fraction <= 0.0 || data.held_out_fraction >= 1.0) {
    throw ConfigError("data.held_out_fraction must be in (0, 1)");
  }
  for (const auto& s : eval.splits)
    if (s != "val" && s != "occlusion" && s != "train") throw ConfigError("unknown split '" + s + "'");
}

std::string RunConfig::echo() const {
  auto fields = registry(const_cast<RunConfig&>(*this));
  std::string out;
  for (const auto& [key, field] : fields) out += key + "=" + field.get() + "\n";
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  c.apply(ConfigFile::load(path));
  return c;
}

}  // namespace snipper::cli
