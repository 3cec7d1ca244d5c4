#include "fedinv/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "fedinv/errors.hpp"

namespace fedinv {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("config key " + key + ": '" + v +
                      "' is not a nonnegative integer");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + v + "' is out of range");
  }
}

std::size_t parse_positive(const std::string& key, const std::string& v) {
  const std::uint64_t n = parse_u64(key, v);
  if (n == 0) throw ConfigError("config key " + key + " must be positive");
  return static_cast<std::size_t>(n);
}

double parse_f64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != v.size())
    throw ConfigError("config key " + key + ": '" + v + "' is not a number");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key " + key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ','))
    out.push_back(parse_positive(key, trim(cell)));
  return out;
}

std::vector<std::string> parse_method_list(const std::string& key,
                                           const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const std::string m = trim(cell);
    if (m != "ig" && m != "sme" && m != "sim")
      throw ConfigError("config key " + key + ": unknown method '" + m +
                        "' (expected ig, sme, or sim)");
    out.push_back(m);
  }
  if (out.empty()) throw ConfigError("config key " + key + " must list a method");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_names(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value) {
  if (key == "data.source") {
    if (value != "synthetic" && value != "idx")
      throw ConfigError("config key data.source: expected synthetic or idx, got '" +
                        value + "'");
    cfg.data.source = value;
  } else if (key == "data.kind") {
    if (value == "gaussian-blobs")
      cfg.data.kind = SynthKind::GaussianBlobs;
    else if (value == "striped-patterns")
      cfg.data.kind = SynthKind::StripedPatterns;
    else
      throw ConfigError(
          "config key data.kind: expected gaussian-blobs or striped-patterns, got '" +
          value + "'");
  } else if (key == "data.n") {
    cfg.data.n = parse_positive(key, value);
  } else if (key == "data.h") {
    cfg.data.h = parse_positive(key, value);
  } else if (key == "data.w") {
    cfg.data.w = parse_positive(key, value);
  } else if (key == "data.classes") {
    cfg.data.classes = parse_positive(key, value);
  } else if (key == "data.images_path") {
    cfg.data.images_path = value;
  } else if (key == "data.labels_path") {
    cfg.data.labels_path = value;
  } else if (key == "data.take") {
    cfg.data.take = parse_positive(key, value);
  } else if (key == "model.arch") {
    if (value == "mlp")
      cfg.model.arch = Arch::MLP;
    else if (value == "cnn2")
      cfg.model.arch = Arch::CNN2;
    else
      throw ConfigError("config key model.arch: expected mlp or cnn2, got '" +
                        value + "'");
  } else if (key == "model.hidden") {
    cfg.model.hidden = parse_size_list(key, value);
  } else if (key == "model.conv_channels") {
    cfg.model.conv_channels = parse_size_list(key, value);
  } else if (key == "model.kernel") {
    cfg.model.kernel = parse_positive(key, value);
  } else if (key == "model.fc_hidden") {
    cfg.model.fc_hidden = parse_size_list(key, value);
  } else if (key == "client.epochs") {
    cfg.client.epochs = parse_positive(key, value);
  } else if (key == "client.batch") {
    cfg.client.batch = parse_positive(key, value);
  } else if (key == "client.eta") {
    cfg.client.eta = parse_f64(key, value);
    if (cfg.client.eta < 0.0)
      throw ConfigError("config key client.eta must be nonnegative");
  } else if (key == "client.shuffle") {
    cfg.client.shuffle = parse_bool(key, value);
  } else if (key == "attack.iterations") {
    cfg.attack.iterations = parse_positive(key, value);
  } else if (key == "attack.eta_data") {
    cfg.attack.eta_data = parse_f64(key, value);
    if (cfg.attack.eta_data <= 0.0)
      throw ConfigError("config key attack.eta_data must be positive");
  } else if (key == "attack.eta_alpha") {
    cfg.attack.eta_alpha = parse_f64(key, value);
    if (cfg.attack.eta_alpha < 0.0)
      throw ConfigError("config key attack.eta_alpha must be nonnegative");
  } else if (key == "attack.tv_lambda") {
    cfg.attack.tv_lambda = parse_f64(key, value);
    if (cfg.attack.tv_lambda < 0.0)
      throw ConfigError("config key attack.tv_lambda must be nonnegative");
  } else if (key == "attack.alpha0") {
    cfg.attack.alpha0 = parse_f64(key, value);
    if (cfg.attack.alpha0 < 0.0 || cfg.attack.alpha0 > 1.0)
      throw ConfigError("config key attack.alpha0 must lie in [0, 1]");
  } else if (key == "attack.pixel_lo") {
    cfg.attack.pixel_lo = parse_f64(key, value);
  } else if (key == "attack.pixel_hi") {
    cfg.attack.pixel_hi = parse_f64(key, value);
  } else if (key == "attack.sim_variant") {
    if (value == "euclid")
      cfg.attack.sim_variant = SimVariant::Euclid;
    else if (value == "cosine")
      cfg.attack.sim_variant = SimVariant::Cosine;
    else
      throw ConfigError("config key attack.sim_variant: expected euclid or cosine, got '" +
                        value + "'");
  } else if (key == "attack.sim_unroll_cap") {
    cfg.attack.sim_unroll_cap = parse_positive(key, value);
  } else if (key == "diagnose.grid") {
    cfg.diagnose.grid = parse_positive(key, value);
    if (cfg.diagnose.grid < 2)
      throw ConfigError("config key diagnose.grid must be at least 2");
  } else if (key == "diagnose.flow_duration") {
    cfg.diagnose.flow_duration = parse_f64(key, value);
    if (cfg.diagnose.flow_duration <= 0.0)
      throw ConfigError("config key diagnose.flow_duration must be positive");
  } else if (key == "diagnose.flow_resolution") {
    cfg.diagnose.flow_resolution = parse_f64(key, value);
    if (cfg.diagnose.flow_resolution <= 0.0)
      throw ConfigError("config key diagnose.flow_resolution must be positive");
  } else if (key == "diagnose.loss_floor") {
    cfg.diagnose.loss_floor = parse_f64(key, value);
  } else if (key == "run.methods") {
    cfg.methods = parse_method_list(key, value);
  } else if (key == "run.repeats") {
    cfg.repeats = parse_positive(key, value);
  } else if (key == "run.master_seed") {
    cfg.master_seed = parse_u64(key, value);
  } else if (key == "run.out_dir") {
    if (value.empty()) throw ConfigError("config key run.out_dir must not be empty");
    cfg.out_dir = value;
  } else if (key == "run.workers") {
    cfg.workers = parse_positive(key, value);
  } else if (key == "run.record_steps") {
    cfg.record_steps = parse_bool(key, value);
  } else if (key == "run.share_protocol") {
    cfg.share_protocol = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.model.in_channels = 1;  // resolved from the data at run time
  cfg.model.in_h = cfg.data.h;
  cfg.model.in_w = cfg.data.w;
  cfg.model.classes = cfg.data.classes;
  cfg.model.hidden = {16};
  cfg.model.conv_channels = {4, 8};
  cfg.model.kernel = 3;
  cfg.model.fc_hidden = {32};
  cfg.client.epochs = 2;
  cfg.client.batch = 4;
  cfg.client.eta = 0.05;
  return cfg;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section] header");
    kv[section + "." + key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

ExperimentConfig make_config(const std::map<std::string, std::string>& kv,
                             const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = default_config();
  for (const auto& [key, value] : kv) apply_key(cfg, key, value);
  for (const std::string& entry : overrides) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + entry + "' is not of the form section.key=value");
    const std::string key = trim(entry.substr(0, eq));
    if (key.find('.') == std::string::npos)
      throw ConfigError("override '" + entry + "' is not of the form section.key=value");
    apply_key(cfg, key, trim(entry.substr(eq + 1)));
  }
  if (cfg.data.source == "idx" &&
      (cfg.data.images_path.empty() || cfg.data.labels_path.empty()))
    throw ConfigError(
        "data.source = idx requires data.images_path and data.labels_path");
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  out += "[data]\n";
  out += "source = " + cfg.data.source + "\n";
  out += std::string("kind = ") + (cfg.data.kind == SynthKind::GaussianBlobs
                                       ? "gaussian-blobs"
                                       : "striped-patterns") + "\n";
  out += "n = " + std::to_string(cfg.data.n) + "\n";
  out += "h = " + std::to_string(cfg.data.h) + "\n";
  out += "w = " + std::to_string(cfg.data.w) + "\n";
  out += "classes = " + std::to_string(cfg.data.classes) + "\n";
  out += "images_path = " + cfg.data.images_path + "\n";
  out += "labels_path = " + cfg.data.labels_path + "\n";
  out += "take = " + std::to_string(cfg.data.take) + "\n";
  out += "\n[model]\n";
  out += std::string("arch = ") + (cfg.model.arch == Arch::MLP ? "mlp" : "cnn2") + "\n";
  out += "hidden = " + join_sizes(cfg.model.hidden) + "\n";
  out += "conv_channels = " + join_sizes(cfg.model.conv_channels) + "\n";
  out += "kernel = " + std::to_string(cfg.model.kernel) + "\n";
  out += "fc_hidden = " + join_sizes(cfg.model.fc_hidden) + "\n";
  out += "\n[client]\n";
  out += "epochs = " + std::to_string(cfg.client.epochs) + "\n";
  out += "batch = " + std::to_string(cfg.client.batch) + "\n";
  out += "eta = " + fmt_double(cfg.client.eta) + "\n";
  out += std::string("shuffle = ") + (cfg.client.shuffle ? "true" : "false") + "\n";
  out += "\n[attack]\n";
  out += "iterations = " + std::to_string(cfg.attack.iterations) + "\n";
  out += "eta_data = " + fmt_double(cfg.attack.eta_data) + "\n";
  out += "eta_alpha = " + fmt_double(cfg.attack.eta_alpha) + "\n";
  out += "tv_lambda = " + fmt_double(cfg.attack.tv_lambda) + "\n";
  out += "alpha0 = " + fmt_double(cfg.attack.alpha0) + "\n";
  out += "pixel_lo = " + fmt_double(cfg.attack.pixel_lo) + "\n";
  out += "pixel_hi = " + fmt_double(cfg.attack.pixel_hi) + "\n";
  out += std::string("sim_variant = ") +
         (cfg.attack.sim_variant == SimVariant::Euclid ? "euclid" : "cosine") + "\n";
  out += "sim_unroll_cap = " + std::to_string(cfg.attack.sim_unroll_cap) + "\n";
  out += "\n[diagnose]\n";
  out += "grid = " + std::to_string(cfg.diagnose.grid) + "\n";
  out += "flow_duration = " + fmt_double(cfg.diagnose.flow_duration) + "\n";
  out += "flow_resolution = " + fmt_double(cfg.diagnose.flow_resolution) + "\n";
  out += "loss_floor = " + fmt_double(cfg.diagnose.loss_floor) + "\n";
  out += "\n[run]\n";
  out += "methods = " + join_names(cfg.methods) + "\n";
  out += "repeats = " + std::to_string(cfg.repeats) + "\n";
  out += "master_seed = " + std::to_string(cfg.master_seed) + "\n";
  out += "out_dir = " + cfg.out_dir + "\n";
  out += "workers = " + std::to_string(cfg.workers) + "\n";
  out += std::string("record_steps = ") + (cfg.record_steps ? "true" : "false") + "\n";
  out += std::string("share_protocol = ") + (cfg.share_protocol ? "true" : "false") + "\n";
  return out;
}

}  // namespace fedinv
