#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedinv/dataset.hpp"
#include "fedinv/models.hpp"

namespace fedinv {

struct ClientConfig {
  std::size_t epochs = 1;   // E
  std::size_t batch = 64;   // B
  double eta = 0.004;
  std::uint64_t seed = 0;
  bool shuffle = true;      // off: epoch order is the dataset order
};

// E * ceil(N/B): the number of local SGD steps a client performs.
std::size_t local_steps(std::size_t n, const ClientConfig& cfg);

// What the server (and hence the attacker) observes from one client round.
struct LocalUpdate {
  ParamVector w0;
  ParamVector wT;
  std::size_t n = 0;
  std::optional<ClientConfig> meta;
  std::vector<ParamVector> step_gradients;  // filled only when recorded
};

// Rows of d selected by idx, in the given order.
Dataset take_rows(const Dataset& d, const std::vector<std::size_t>& idx);

// The exact per-step batch index lists client_update works through: E epochs,
// each shuffled by the seeded RNG (or left in order), split into ceil(N/B)
// batches with indices sorted inside each batch. Anyone replaying a client
// (the simulation attack) must use this schedule to match it bit for bit.
std::vector<std::vector<std::size_t>> batch_schedule(std::size_t n,
                                                     const ClientConfig& cfg);

// E epochs of sequential mini-batch SGD from w0. Each epoch the data order
// is drawn from the seeded RNG (unless shuffle is off) and split into
// ceil(N/B) batches, the last possibly smaller. Row order inside a batch is
// normalized to ascending dataset index, so a full batch is unaffected by
// the shuffle seed.
LocalUpdate client_update(const ModelSpec& spec, const ParamVector& w0,
                          const Dataset& d, const ClientConfig& cfg,
                          bool record_steps = false);

// Data-size-weighted average of the clients' end weights.
ParamVector server_round(const ParamVector& global_w,
                         const std::vector<LocalUpdate>& updates);

struct FlClient {
  ClientConfig cfg;
  Dataset data;
};

// Multi-round FedAvg with Bernoulli(participation) client sampling; returns
// the global weights after each round. Rounds with no participants carry the
// previous weights forward.
std::vector<ParamVector> run_fl(const ModelSpec& spec, const ParamVector& init,
                                const std::vector<FlClient>& clients,
                                std::size_t rounds, double participation,
                                std::uint64_t seed);

}  // namespace fedinv
