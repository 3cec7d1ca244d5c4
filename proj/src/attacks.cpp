#include "fedinv/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <utility>

#include "fedinv/errors.hpp"
#include "fedinv/rng.hpp"

namespace fedinv {

namespace {

void check_config(const AttackConfig& cfg) {
  if (cfg.iterations < 1) throw ConfigError("attack: iterations must be at least 1");
  if (cfg.alpha0 < 0.0 || cfg.alpha0 > 1.0)
    throw ConfigError("attack: alpha0 must lie in [0,1], got " + std::to_string(cfg.alpha0));
  if (cfg.tv_lambda < 0.0)
    throw ConfigError("attack: tv_lambda must be nonnegative, got " + std::to_string(cfg.tv_lambda));
  if (cfg.eta_data < 0.0 || cfg.eta_alpha < 0.0)
    throw ConfigError("attack: learning rates must be nonnegative");
  if (!(cfg.pixel_lo < cfg.pixel_hi))
    throw ConfigError("attack: pixel bounds must satisfy lo < hi");
}

struct Prepared {
  Tensor u;                      // w0 - wT, flat
  std::vector<Tensor> w0_parts;  // per-entry views of the endpoints
  std::vector<Tensor> wT_parts;
};

Prepared prepare(const ModelSpec& spec, const LocalUpdate& update,
                 const std::vector<std::size_t>& labels, const AttackConfig& cfg) {
  check_config(cfg);
  validate_spec(spec);
  if (!update.w0.same_layout(update.wT))
    throw ShapeError("attack: update endpoints disagree on the weight layout");
  if (model_layout(spec) != update.w0.layout())
    throw ShapeError("attack: update layout does not match the model");
  if (update.n == 0) throw ShapeError("attack: update reports zero client samples");
  if (labels.size() != update.n)
    throw ShapeError("attack: got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(update.n) + " client samples");
  for (std::size_t y : labels)
    if (y >= spec.classes)
      throw ShapeError("attack: label " + std::to_string(y) + " out of range for " +
                       std::to_string(spec.classes) + " classes");

  ParamVector diff = sub(update.w0, update.wT);
  if (norm(diff) == 0.0)
    throw DegenerateUpdateError("attack: w0 equals wT, the update carries no signal");

  Prepared p;
  p.u = Tensor({diff.numel()}, diff.values());
  const std::size_t entries = update.w0.layout().size();
  p.w0_parts.reserve(entries);
  p.wT_parts.reserve(entries);
  for (std::size_t i = 0; i < entries; ++i) {
    p.w0_parts.push_back(update.w0.entry_tensor(i));
    p.wT_parts.push_back(update.wT.entry_tensor(i));
  }
  return p;
}

Tensor init_dummy(std::size_t n, const ModelSpec& spec, const AttackConfig& cfg) {
  Rng rng(cfg.seed);
  Tensor d({n, spec.in_channels, spec.in_h, spec.in_w});
  for (double& v : d.values()) v = rng.uniform(cfg.pixel_lo, cfg.pixel_hi);
  return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Similarity term alone, evaluated at fixed weights and fixed data.
double lsim_at(const ModelSpec& spec, const ParamVector& w_at, const Tensor& d,
               const std::vector<std::size_t>& labels, const Tensor& u) {
  std::vector<Var> params = to_vars(w_at, true);
  std::vector<Var> g = grad_weights_vars(spec, params, Var(d), labels, false);
  return cosine_similarity_loss(Var(u), concat(g)).item();
}

}  // namespace

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(Tensor& x, const Tensor& g) {
  if (x.numel() != m_.size() || g.numel() != m_.size())
    throw ShapeError("Adam::step: expected " + std::to_string(m_.size()) + " values, got x " +
                     Tensor::shape_string(x.shape()) + ", g " + Tensor::shape_string(g.shape()));
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    x[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

Var cosine_similarity_loss(const Var& u, const Var& v) { return cosine_loss(u, v); }

Var total_variation(const Var& images) {
  if (images.shape().size() != 4)
    throw ShapeError("total_variation: expected (N,C,H,W), got " +
                     Tensor::shape_string(images.shape()));
  const std::size_t n = images.shape()[0];
  const std::size_t h = images.shape()[2];
  const std::size_t w = images.shape()[3];
  Var tv(Tensor::scalar(0.0));
  if (h > 1) tv = add(tv, sum(vabs(shift_diff_h(images))));
  if (w > 1) tv = add(tv, sum(vabs(shift_diff_w(images))));
  return scale(tv, 1.0 / static_cast<double>(n));
}

Tensor clamp_pixels(Tensor x, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("clamp_pixels: lo must be below hi");
  for (double& v : x.values()) v = std::min(hi, std::max(lo, v));
  return x;
}

AttackResult attack_ig(const ModelSpec& spec, const LocalUpdate& update,
                       const std::vector<std::size_t>& labels, const AttackConfig& cfg) {
  Prepared p = prepare(spec, update, labels, cfg);
  const auto t0 = std::chrono::steady_clock::now();

  Tensor d = init_dummy(update.n, spec, cfg);
  Adam opt(d.numel(), cfg.eta_data);
  const Var u(p.u);

  AttackResult out;
  out.labels = labels;
  out.loss_trace.reserve(cfg.iterations);
  out.lsim_trace.reserve(cfg.iterations);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    Var dv(d, true);
    std::vector<Var> params = to_vars(update.w0, true);
    std::vector<Var> g = grad_weights_vars(spec, params, dv, labels, true);
    Var lsim = cosine_similarity_loss(u, concat(g));
    Var obj = cfg.tv_lambda > 0.0 ? add(lsim, scale(total_variation(dv), cfg.tv_lambda)) : lsim;
    out.lsim_trace.push_back(lsim.item());
    out.loss_trace.push_back(obj.item());
    Tensor gd = grad(obj, {dv})[0].value();
    opt.step(d, gd);
    d = clamp_pixels(std::move(d), cfg.pixel_lo, cfg.pixel_hi);
  }

  out.final_lsim = lsim_at(spec, update.w0, d, labels, p.u);
  out.final_alpha = 1.0;
  out.reconstructed = std::move(d);
  out.wallclock_s = seconds_since(t0);
  return out;
}

AttackResult attack_sme(const ModelSpec& spec, const LocalUpdate& update,
                        const std::vector<std::size_t>& labels, const AttackConfig& cfg) {
  Prepared p = prepare(spec, update, labels, cfg);
  const auto t0 = std::chrono::steady_clock::now();

  Tensor d = init_dummy(update.n, spec, cfg);
  double alpha = cfg.alpha0;
  Adam opt_d(d.numel(), cfg.eta_data);
  Adam opt_a(1, cfg.eta_alpha);
  const Var u(p.u);
  const std::size_t entries = p.w0_parts.size();

  AttackResult out;
  out.labels = labels;
  out.loss_trace.reserve(cfg.iterations);
  out.lsim_trace.reserve(cfg.iterations);
  out.alpha_trace.reserve(cfg.iterations);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    Var dv(d, true);
    Var av(Tensor::scalar(alpha), true);
    Var om = one_minus(av);
    std::vector<Var> surrogate;
    surrogate.reserve(entries);
    for (std::size_t i = 0; i < entries; ++i)
      surrogate.push_back(add(smul(Var(p.w0_parts[i]), av), smul(Var(p.wT_parts[i]), om)));
    std::vector<Var> g = grad_weights_vars(spec, surrogate, dv, labels, true);
    Var lsim = cosine_similarity_loss(u, concat(g));
    Var obj = cfg.tv_lambda > 0.0 ? add(lsim, scale(total_variation(dv), cfg.tv_lambda)) : lsim;
    out.lsim_trace.push_back(lsim.item());
    out.loss_trace.push_back(obj.item());
    out.alpha_trace.push_back(alpha);
    std::vector<Var> gs = grad(obj, {dv, av});
    opt_d.step(d, gs[0].value());
    d = clamp_pixels(std::move(d), cfg.pixel_lo, cfg.pixel_hi);
    Tensor at = Tensor::scalar(alpha);
    opt_a.step(at, gs[1].value());
    alpha = std::min(1.0, std::max(0.0, at[0]));
  }

  out.final_alpha = alpha;
  out.final_lsim =
      lsim_at(spec, interpolate(update.w0, update.wT, alpha), d, labels, p.u);
  out.reconstructed = std::move(d);
  out.wallclock_s = seconds_since(t0);
  return out;
}

Var sim_loss(const ModelSpec& spec, const LocalUpdate& update,
             const std::vector<std::size_t>& labels, const Var& d,
             const ClientConfig& protocol, SimVariant variant) {
  const std::size_t n = labels.size();
  if (n == 0 || update.n != n)
    throw ShapeError("sim_loss: got " + std::to_string(n) + " labels for " +
                     std::to_string(update.n) + " client samples");
  if (d.shape().size() != 4 || d.shape()[0] != n)
    throw ShapeError("sim_loss: dummy batch must be (N,C,H,W) with one row per label, got " +
                     Tensor::shape_string(d.shape()));
  if (!update.w0.same_layout(update.wT))
    throw ShapeError("sim_loss: update endpoints disagree on the weight layout");

  const bool track = d.requires_grad();
  std::vector<Var> w = to_vars(update.w0, true);
  for (const std::vector<std::size_t>& idx : batch_schedule(n, protocol)) {
    Var bx = gather_rows(d, idx);
    std::vector<std::size_t> by;
    by.reserve(idx.size());
    for (std::size_t i : idx) by.push_back(labels[i]);
    std::vector<Var> g = grad_weights_vars(spec, w, bx, by, track);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = sub(w[i], scale(g[i], protocol.eta));
  }

  std::vector<Var> parts;
  parts.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    parts.push_back(sub(w[i], Var(update.w0.entry_tensor(i))));
  Var delta = concat(parts);

  ParamVector observed = sub(update.wT, update.w0);
  Var target(Tensor({observed.numel()}, observed.values()));
  if (variant == SimVariant::Euclid) return l2norm(sub(delta, target));
  return cosine_similarity_loss(delta, target);
}

AttackResult attack_sim(const ModelSpec& spec, const LocalUpdate& update,
                        const std::vector<std::size_t>& labels, const AttackConfig& cfg,
                        const ClientConfig& protocol) {
  prepare(spec, update, labels, cfg);
  const std::size_t steps = local_steps(update.n, protocol);
  if (steps > cfg.sim_unroll_cap)
    throw ResourceError("simulation attack: unrolling " + std::to_string(steps) +
                        " local steps exceeds the cap of " + std::to_string(cfg.sim_unroll_cap) +
                        "; the differentiable replay grows with every step");
  const auto t0 = std::chrono::steady_clock::now();

  Tensor d = init_dummy(update.n, spec, cfg);
  Adam opt(d.numel(), cfg.eta_data);

  AttackResult out;
  out.labels = labels;
  out.loss_trace.reserve(cfg.iterations);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    Var dv(d, true);
    Var loss = sim_loss(spec, update, labels, dv, protocol, cfg.sim_variant);
    out.loss_trace.push_back(loss.item());
    Tensor gd = grad(loss, {dv})[0].value();
    opt.step(d, gd);
    d = clamp_pixels(std::move(d), cfg.pixel_lo, cfg.pixel_hi);
  }
  out.lsim_trace = out.loss_trace;

  out.final_lsim = sim_loss(spec, update, labels, Var(d), protocol, cfg.sim_variant).item();
  out.final_alpha = 1.0;
  out.reconstructed = std::move(d);
  out.wallclock_s = seconds_since(t0);
  return out;
}

std::vector<std::size_t> recover_labels(const LocalUpdate& update, std::size_t class_count) {
  if (!update.w0.same_layout(update.wT))
    throw ShapeError("recover_labels: update endpoints disagree on the weight layout");
  const std::vector<LayoutEntry>& layout = update.w0.layout();
  if (layout.size() < 2)
    throw ShapeError("recover_labels: weight layout has no final linear layer");
  const std::size_t wi = layout.size() - 2;
  const LayoutEntry& entry = layout[wi];
  if (entry.shape.size() != 2 || entry.shape[0] != class_count)
    throw ShapeError("recover_labels: final layer weight is " +
                     Tensor::shape_string(entry.shape) + ", expected " +
                     std::to_string(class_count) + " class rows");

  const std::size_t off = update.w0.offset(wi);
  const std::size_t cols = entry.shape[1];
  const std::vector<double>& a = update.w0.values();
  const std::vector<double>& b = update.wT.values();
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < class_count; ++c) {
    double row = 0.0;
    for (std::size_t j = 0; j < cols; ++j) row += a[off + c * cols + j] - b[off + c * cols + j];
    if (row < 0.0) present.push_back(c);
  }
  return present;
}

}  // namespace fedinv
