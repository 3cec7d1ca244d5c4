#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedinv/config.hpp"
#include "fedinv/serialize.hpp"

namespace fedinv {

// Per-repeat seed block fanned out from the master seed with a counter-based
// split, so adding repeats never changes the seeds of earlier ones. `base`
// identifies the repeat in file names and CSV seed columns; the rest seed
// the independent random streams of one repeat.
struct RepeatSeeds {
  std::uint64_t base = 0;
  std::uint64_t data = 0;    // synthetic dataset generation
  std::uint64_t init = 0;    // model weight init
  std::uint64_t client = 0;  // batch shuffling
  std::uint64_t attack = 0;  // dummy-data init
};
RepeatSeeds repeat_seeds(std::uint64_t master, std::size_t repeat);

// The model, data, and observed update one repeat works on, derived purely
// from the config and the repeat's seed block. Honors record_steps and
// share_protocol.
ClientArtifact build_round(const ExperimentConfig& cfg, const RepeatSeeds& seeds);

// Trains one client per repeat and persists each round under
// <out_dir>/client_<base seed, hex>.bin. Returns the paths in repeat order.
// Re-running the same config rewrites identical bytes.
std::vector<std::string> cmd_train_client(const ExperimentConfig& cfg);

// Attacks one persisted round with `method` ("ig", "sme", or "sim") across
// cfg.repeats attack seeds. Writes one CSV row per seed to
// <out_dir>/attack_<method>.csv, dumps reconstructions and originals under
// <out_dir>/images/, and returns the CSV path. The simulation method
// requires the client protocol (E, B, eta) recorded in the artifact.
std::string cmd_attack(const std::string& artifact_path, const std::string& method,
                       const ExperimentConfig& cfg);

// Analysis series for a persisted round; mode is one of:
//   ratio  - per-step top-2 subspace projection ratios (needs recorded steps)
//   sweep  - cosine similarity across the interpolation line
//   bounds - estimated constants and reconstruction-error bounds
//   flow2d - residual series of the 2-d gradient-flow collinearity check
//            on built-in isotropic and anisotropic quadratic fields (the
//            artifact is not consulted)
// Writes <out_dir>/diagnose_<mode>.csv and returns its path.
std::string cmd_diagnose(const std::string& artifact_path, const std::string& mode,
                         const ExperimentConfig& cfg);

// Runs every configured method against matched per-repeat rounds (same data,
// init, and dummy seeds for each method), writes the per-run rows to
// <out_dir>/attack.csv and a per-method summary with a PSNR gap column to
// <out_dir>/compare.csv, and returns the summary path. Needs at least two
// configured methods.
std::string cmd_compare(const ExperimentConfig& cfg);

}  // namespace fedinv
