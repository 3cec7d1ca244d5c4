#include "fedinv/fedavg.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "fedinv/errors.hpp"
#include "fedinv/rng.hpp"

namespace fedinv {

std::size_t local_steps(std::size_t n, const ClientConfig& cfg) {
  if (cfg.batch == 0) throw ConfigError("client: batch size must be positive");
  return cfg.epochs * ((n + cfg.batch - 1) / cfg.batch);
}

Dataset take_rows(const Dataset& d, const std::vector<std::size_t>& idx) {
  const std::size_t row = d.images.numel() / (d.size() == 0 ? 1 : d.size());
  std::vector<std::size_t> shape = d.images.shape();
  shape[0] = idx.size();
  Dataset out;
  out.images = Tensor(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= d.size()) throw ShapeError("take_rows: index out of range");
    const double* src = d.images.data() + idx[i] * row;
    double* dst = out.images.data() + i * row;
    for (std::size_t r = 0; r < row; ++r) dst[r] = src[r];
    out.labels.push_back(d.labels[idx[i]]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_schedule(std::size_t n,
                                                     const ClientConfig& cfg) {
  if (n == 0) throw ShapeError("batch_schedule: empty dataset");
  if (cfg.epochs == 0) throw ConfigError("client: epochs must be positive");
  if (cfg.batch == 0) throw ConfigError("client: batch size must be positive");
  Rng rng(cfg.seed);
  std::vector<std::vector<std::size_t>> steps;
  steps.reserve(local_steps(n, cfg));
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::vector<std::size_t> order;
    if (cfg.shuffle) {
      order = rng.permutation(n);
    } else {
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
    }
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t stop = std::min(start + cfg.batch, n);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      std::sort(idx.begin(), idx.end());
      steps.push_back(std::move(idx));
    }
  }
  return steps;
}

LocalUpdate client_update(const ModelSpec& spec, const ParamVector& w0,
                          const Dataset& d, const ClientConfig& cfg,
                          bool record_steps) {
  const std::size_t n = d.size();
  if (cfg.eta < 0.0) throw ConfigError("client: negative learning rate");

  LocalUpdate out;
  out.w0 = w0;
  out.n = n;
  out.meta = cfg;

  ParamVector w = w0;
  for (const auto& idx : batch_schedule(n, cfg)) {
    ParamVector g = grad_weights(spec, w, take_rows(d, idx));
    if (record_steps) out.step_gradients.push_back(g);
    w = sub(w, scale(g, cfg.eta));
  }
  out.wT = std::move(w);
  return out;
}

ParamVector server_round(const ParamVector& global_w,
                         const std::vector<LocalUpdate>& updates) {
  if (updates.empty())
    throw std::invalid_argument("server_round: no client updates");
  double total = 0.0;
  for (const LocalUpdate& u : updates) {
    if (!u.wT.same_layout(global_w))
      throw ShapeError("server_round: client layout differs from global");
    if (u.n == 0) throw ShapeError("server_round: client reports zero data");
    total += static_cast<double>(u.n);
  }
  std::vector<double> v(global_w.numel(), 0.0);
  for (const LocalUpdate& u : updates) {
    const double wgt = static_cast<double>(u.n) / total;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += wgt * u.wT.values()[i];
  }
  return ParamVector(global_w.layout(), std::move(v));
}

std::vector<ParamVector> run_fl(const ModelSpec& spec, const ParamVector& init,
                                const std::vector<FlClient>& clients,
                                std::size_t rounds, double participation,
                                std::uint64_t seed) {
  if (rounds == 0) throw ConfigError("run_fl: need at least one round");
  Rng rng(seed);
  std::vector<ParamVector> checkpoints;
  ParamVector global = init;
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<LocalUpdate> updates;
    for (const FlClient& c : clients) {
      const bool in = rng.uniform() < participation;
      if (in) updates.push_back(client_update(spec, global, c.data, c.cfg));
    }
    if (!updates.empty()) global = server_round(global, updates);
    checkpoints.push_back(global);
  }
  return checkpoints;
}

}  // namespace fedinv
