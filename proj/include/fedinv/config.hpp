#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedinv/attacks.hpp"
#include "fedinv/data_io.hpp"
#include "fedinv/fedavg.hpp"
#include "fedinv/models.hpp"

namespace fedinv {

// Where a client's training data comes from.
struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "idx"
  SynthKind kind = SynthKind::GaussianBlobs;
  std::size_t n = 8;  // synthetic sample count
  std::size_t h = 8;
  std::size_t w = 8;
  std::size_t classes = 4;
  std::string images_path;  // idx source only
  std::string labels_path;
  std::size_t take = 64;  // idx source: rows to read
};

// Knobs for the diagnose command.
struct DiagnoseConfig {
  std::size_t grid = 101;         // interpolation sweep resolution
  double flow_duration = 1.0;     // 2-d gradient flow horizon
  double flow_resolution = 1e-4;  // flow integrator step (and grid spacing)
  double loss_floor = 0.0;        // optimum-loss lower bound for bounds mode
};

// One experiment: data, victim model, client protocol, attack settings, and
// run orchestration. The model's input dims and class count are resolved
// from the data at run time, so the [model] section only picks architecture
// and widths. Every field has a default, and the fully-defaulted
// configuration finishes a compare run in well under five minutes on one
// core.
struct ExperimentConfig {
  DataConfig data;
  ModelSpec model;
  ClientConfig client;
  AttackConfig attack;
  DiagnoseConfig diagnose;
  std::vector<std::string> methods = {"ig", "sme"};
  std::size_t repeats = 3;
  std::uint64_t master_seed = 1;
  std::string out_dir = "out";
  std::size_t workers = 1;
  bool record_steps = true;    // keep per-step gradients in the artifact
  bool share_protocol = true;  // off: persist the update without E/B/eta
};

ExperimentConfig default_config();

// `key = value` lines grouped under [section] headers. Lines whose first
// non-space character is '#' or ';' are comments. Returns "section.key" ->
// raw value; a key listed twice keeps the later value. Malformed lines
// throw ConfigError naming the line number.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// parse_config_text over a file's contents; unreadable file -> ConfigError.
std::map<std::string, std::string> read_config_file(const std::string& path);

// Applies `kv` and then `overrides` ("section.key=value", e.g. from command
// line flags) on top of the defaults. Unknown keys and unparsable values
// throw ConfigError naming the key.
ExperimentConfig make_config(const std::map<std::string, std::string>& kv,
                             const std::vector<std::string>& overrides = {});

// Renders cfg as config text that parses back to the same configuration;
// written next to experiment outputs as provenance.
std::string render_config(const ExperimentConfig& cfg);

}  // namespace fedinv
