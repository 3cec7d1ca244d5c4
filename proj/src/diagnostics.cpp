#include "fedinv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedinv/errors.hpp"

namespace fedinv {

namespace {

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double vnorm(const std::vector<double>& a) { return std::sqrt(vdot(a, a)); }

Tensor flat_grad(const FlatLoss& loss, const Tensor& w) {
  Var wv(w, true);
  return grad(loss(wv), {wv})[0].value();
}

double loss_at(const FlatLoss& loss, const Tensor& w) {
  NoGradGuard off;
  return loss(Var(w)).item();
}

// 1 - cos(u, g) with the degenerate directions rejected.
double cosine_gap(const std::vector<double>& u, const std::vector<double>& g) {
  const double nu = vnorm(u);
  const double ng = vnorm(g);
  if (nu == 0.0)
    throw DegenerateUpdateError("cosine gap: the weight update has zero norm");
  if (ng == 0.0)
    throw DegenerateUpdateError("cosine gap: the gradient has zero norm");
  return 1.0 - vdot(u, g) / (nu * ng);
}

void check_model_update(const ModelSpec& spec, const LocalUpdate& update) {
  validate_spec(spec);
  const std::vector<LayoutEntry> layout = model_layout(spec);
  if (!(update.w0.layout() == layout))
    throw ShapeError("update weights do not match the model layout");
  if (!update.w0.same_layout(update.wT))
    throw ShapeError("update endpoints have different layouts");
}

double safe_div(double num, double den) {
  if (num == 0.0) return 0.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

void check_bound_inputs(const BoundInputs& b, const std::string& fn) {
  auto reject = [&](const std::string& what) {
    throw std::invalid_argument(fn + ": " + what);
  };
  if (!(b.G2 >= 0.0) || !(b.L >= 0.0) || !(b.beta >= 0.0) || !(b.gamma >= 0.0) ||
      !(b.E_max >= 0.0))
    reject("constants must be nonnegative");
  if (!(b.eta > 0.0)) reject("step size must be positive");
  if (!(b.eta < 1.0)) reject("requires eta < 1");
  if (!(b.eta * b.beta < 1.0)) reject("requires eta*beta < 1");
  if (b.T == 0) reject("needs at least one local step");
  if (!(b.loss_w0 > b.loss_wT))
    reject("needs loss_w0 > loss_wT (the local run must descend)");
}

// sqrt(T * G2^2 eta / (1 - eta beta / 2) * L^2 / loss drop): the root term
// shared by both bounds.
double gd_root(const BoundInputs& b) {
  const double gsq = b.G2 * b.G2 * b.eta / (1.0 - b.eta * b.beta / 2.0);
  const double drop = b.loss_w0 - b.loss_wT;
  return std::sqrt(static_cast<double>(b.T) * gsq * b.L * b.L / drop);
}

}  // namespace

FlatLoss model_flat_loss(const ModelSpec& spec, const Dataset& d) {
  validate_spec(spec);
  const std::vector<LayoutEntry> layout = model_layout(spec);
  const std::size_t total = ParamVector::layout_numel(layout);
  return [spec, d, layout, total](const Var& w) {
    if (w.value().numel() != total)
      throw ShapeError("model_flat_loss: weight vector has " +
                       std::to_string(w.value().numel()) + " entries, expected " +
                       std::to_string(total));
    std::vector<Var> params;
    params.reserve(layout.size());
    std::size_t off = 0;
    for (const LayoutEntry& e : layout) {
      params.push_back(reshape(slice1d(w, off, e.numel()), e.shape));
      off += e.numel();
    }
    return forward_loss(spec, params, Var(d.images), d.labels);
  };
}

FlatLoss quadratic_loss(const Tensor& a, const Tensor& center) {
  const std::size_t p = center.numel();
  if (a.shape().size() != 2 || a.shape()[0] != p || a.shape()[1] != p)
    throw ShapeError("quadratic_loss: matrix must be " + std::to_string(p) + "x" +
                     std::to_string(p) + ", got " +
                     Tensor::shape_string(a.shape()));
  double scale_ref = 0.0;
  for (double v : a.values()) scale_ref = std::max(scale_ref, std::abs(v));
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      if (std::abs(a.values()[i * p + j] - a.values()[j * p + i]) >
          1e-12 * (1.0 + scale_ref))
        throw std::invalid_argument("quadratic_loss: matrix must be symmetric");
  const Tensor arow = a;
  const Tensor crow = center.reshaped({1, p});
  return [arow, crow, p](const Var& w) {
    if (w.value().numel() != p)
      throw ShapeError("quadratic_loss: weight vector has " +
                       std::to_string(w.value().numel()) + " entries, expected " +
                       std::to_string(p));
    Var d = sub(reshape(w, {1, p}), Var(crow));
    Var q = matmul(matmul(d, Var(arow)), transpose(d));
    return scale(sum(q), 0.5);
  };
}

FlatTrajectory run_gd(const FlatLoss& loss, const Tensor& w0, double eta,
                      std::size_t steps) {
  if (!(eta > 0.0)) throw std::invalid_argument("run_gd: step size must be positive");
  if (steps == 0) throw std::invalid_argument("run_gd: needs at least one step");
  FlatTrajectory traj;
  traj.iterates.reserve(steps + 1);
  traj.gradients.reserve(steps);
  Tensor w = w0;
  traj.iterates.push_back(w);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor g = flat_grad(loss, w);
    traj.gradients.push_back(g);
    for (std::size_t i = 0; i < w.numel(); ++i) w.values()[i] -= eta * g.values()[i];
    traj.iterates.push_back(w);
  }
  return traj;
}

void sym_eig(const Tensor& a, std::vector<double>& values, Tensor& vectors) {
  if (a.shape().size() != 2 || a.shape()[0] != a.shape()[1])
    throw ShapeError("sym_eig: matrix must be square, got " +
                     Tensor::shape_string(a.shape()));
  const std::size_t n = a.shape()[0];
  // Work on the symmetrized copy so tiny asymmetries cannot destabilize the
  // rotations.
  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m[i * n + j] = 0.5 * (a.values()[i * n + j] + a.values()[j * n + i]);

  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  double scale_ref = 0.0;
  for (double x : m) scale_ref = std::max(scale_ref, std::abs(x));
  const double stop = 1e-14 * (1.0 + scale_ref);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off = std::max(off, std::abs(m[i * n + j]));
    if (off <= stop) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (std::abs(apq) <= stop * 1e-2) continue;
        const double tau = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m[k * n + p];
          const double mkq = m[k * n + q];
          m[k * n + p] = c * mkp - s * mkq;
          m[k * n + q] = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m[p * n + k];
          const double mqk = m[q * n + k];
          m[p * n + k] = c * mpk - s * mqk;
          m[q * n + k] = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return m[i * n + i] > m[j * n + j];
  });

  values.assign(n, 0.0);
  Tensor out({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    values[j] = m[order[j] * n + order[j]];
    for (std::size_t i = 0; i < n; ++i) out.values()[i * n + j] = v[i * n + order[j]];
  }
  vectors = out;
}

namespace {

// Deterministic completion of a rank-1 span: take the coordinate axis with
// the least overlap with b1, remove the overlap, normalize.
std::vector<double> complete_rank1(const std::vector<double>& b1) {
  std::size_t pick = 0;
  for (std::size_t j = 1; j < b1.size(); ++j)
    if (std::abs(b1[j]) < std::abs(b1[pick])) pick = j;
  std::vector<double> b2(b1.size(), 0.0);
  b2[pick] = 1.0;
  const double c = b1[pick];
  for (std::size_t j = 0; j < b1.size(); ++j) b2[j] -= c * b1[j];
  const double nn = vnorm(b2);
  for (double& x : b2) x /= nn;
  return b2;
}

}  // namespace

SubspaceProjector fit_top2_subspace(const std::vector<Tensor>& gradients) {
  if (gradients.size() < 2)
    throw std::invalid_argument("fit_top2_subspace: need at least two step gradients");
  const std::size_t p = gradients[0].numel();
  if (p < 2)
    throw std::invalid_argument(
        "fit_top2_subspace: a rank-2 subspace needs at least two parameters");
  for (const Tensor& g : gradients)
    if (g.numel() != p)
      throw ShapeError("fit_top2_subspace: gradients have mixed sizes");

  const std::size_t T = gradients.size();
  Tensor gram({T, T});
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = i; j < T; ++j) {
      const double s = vdot(gradients[i].values(), gradients[j].values());
      gram.values()[i * T + j] = s;
      gram.values()[j * T + i] = s;
    }

  std::vector<double> vals;
  Tensor vecs;
  sym_eig(gram, vals, vecs);
  if (!(vals[0] > 0.0))
    throw DegenerateUpdateError("fit_top2_subspace: every step gradient is zero");

  auto right_vector = [&](std::size_t k) {
    std::vector<double> b(p, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double u = vecs.values()[t * T + k];
      const std::vector<double>& g = gradients[t].values();
      for (std::size_t j = 0; j < p; ++j) b[j] += u * g[j];
    }
    const double nn = vnorm(b);
    for (double& x : b) x /= nn;
    return b;
  };

  std::vector<double> b1 = right_vector(0);
  std::vector<double> b2;
  // Eigenvalues of the Gram matrix are squared singular values, so this
  // cutoff treats singular-value ratios below ~1e-9 as numerically rank 1.
  if (T >= 2 && vals[1] > vals[0] * 1e-18) {
    b2 = right_vector(1);
    const double overlap = vdot(b2, b1);
    for (std::size_t j = 0; j < p; ++j) b2[j] -= overlap * b1[j];
    const double nn = vnorm(b2);
    if (nn > 1e-9) {
      for (double& x : b2) x /= nn;
    } else {
      b2 = complete_rank1(b1);
    }
  } else {
    b2 = complete_rank1(b1);
  }

  SubspaceProjector proj;
  proj.b1 = Tensor({p}, std::move(b1));
  proj.b2 = Tensor({p}, std::move(b2));
  return proj;
}

SubspaceProjector fit_top2_subspace(const std::vector<ParamVector>& gradients) {
  std::vector<Tensor> flats;
  flats.reserve(gradients.size());
  for (const ParamVector& g : gradients) {
    if (!gradients.empty() && !g.same_layout(gradients[0]))
      throw ShapeError("fit_top2_subspace: gradients have mixed layouts");
    flats.emplace_back(std::vector<std::size_t>{g.numel()}, g.values());
  }
  return fit_top2_subspace(flats);
}

double SubspaceProjector::projected_norm(const Tensor& v) const {
  if (v.numel() != b1.numel())
    throw ShapeError("projector: vector has " + std::to_string(v.numel()) +
                     " entries, basis has " + std::to_string(b1.numel()));
  const double c1 = vdot(v.values(), b1.values());
  const double c2 = vdot(v.values(), b2.values());
  return std::sqrt(c1 * c1 + c2 * c2);
}

double SubspaceProjector::residual_norm(const Tensor& v) const {
  if (v.numel() != b1.numel())
    throw ShapeError("projector: vector has " + std::to_string(v.numel()) +
                     " entries, basis has " + std::to_string(b1.numel()));
  const double c1 = vdot(v.values(), b1.values());
  const double c2 = vdot(v.values(), b2.values());
  std::vector<double> r = v.values();
  for (std::size_t j = 0; j < r.size(); ++j)
    r[j] -= c1 * b1.values()[j] + c2 * b2.values()[j];
  return vnorm(r);
}

double SubspaceProjector::ratio(const Tensor& v) const {
  if (v.numel() != b1.numel())
    throw ShapeError("projector: vector has " + std::to_string(v.numel()) +
                     " entries, basis has " + std::to_string(b1.numel()));
  const double nv = vnorm(v.values());
  if (nv == 0.0) return 0.0;
  return std::min(1.0, projected_norm(v) / nv);
}

double delta_error(const ModelSpec& spec, const LocalUpdate& update, const Dataset& d) {
  check_model_update(spec, update);
  const ParamVector u = sub(update.w0, update.wT);
  if (norm(u) == 0.0)
    throw DegenerateUpdateError("delta_error: w0 equals wT, nothing to reverse");
  const ParamVector g = grad_weights(spec, update.w0, d);
  return cosine_gap(u.values(), g.values());
}

double delta_error_flat(const Tensor& w0, const Tensor& wT, const FlatLoss& loss) {
  if (w0.numel() != wT.numel())
    throw ShapeError("delta_error_flat: endpoint sizes differ");
  std::vector<double> u = w0.values();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] -= wT.values()[i];
  if (vnorm(u) == 0.0)
    throw DegenerateUpdateError("delta_error_flat: w0 equals wT, nothing to reverse");
  const Tensor g = flat_grad(loss, w0);
  return cosine_gap(u, g.values());
}

std::vector<AlphaPoint> alpha_sweep(const ModelSpec& spec, const LocalUpdate& update,
                                    const Dataset& d, std::size_t grid) {
  if (grid < 2)
    throw std::invalid_argument("alpha_sweep: grid needs at least the two endpoints");
  check_model_update(spec, update);
  const ParamVector u = sub(update.w0, update.wT);
  if (norm(u) == 0.0)
    throw DegenerateUpdateError("alpha_sweep: w0 equals wT, nothing to reverse");
  std::vector<AlphaPoint> out;
  out.reserve(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    const double alpha = static_cast<double>(i) / static_cast<double>(grid - 1);
    const ParamVector w = interpolate(update.w0, update.wT, alpha);
    const ParamVector g = grad_weights(spec, w, d);
    out.push_back({alpha, 1.0 - cosine_gap(u.values(), g.values())});
  }
  return out;
}

std::vector<AlphaPoint> alpha_sweep_flat(const Tensor& w0, const Tensor& wT,
                                         const FlatLoss& loss, std::size_t grid) {
  if (grid < 2)
    throw std::invalid_argument("alpha_sweep: grid needs at least the two endpoints");
  if (w0.numel() != wT.numel())
    throw ShapeError("alpha_sweep: endpoint sizes differ");
  std::vector<double> u = w0.values();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] -= wT.values()[i];
  if (vnorm(u) == 0.0)
    throw DegenerateUpdateError("alpha_sweep: w0 equals wT, nothing to reverse");
  std::vector<AlphaPoint> out;
  out.reserve(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    const double alpha = static_cast<double>(i) / static_cast<double>(grid - 1);
    Tensor w = w0;
    for (std::size_t j = 0; j < w.numel(); ++j)
      w.values()[j] = alpha * w0.values()[j] + (1.0 - alpha) * wT.values()[j];
    const Tensor g = flat_grad(loss, w);
    out.push_back({alpha, 1.0 - cosine_gap(u, g.values())});
  }
  return out;
}

std::vector<double> projection_ratio_series(const LocalUpdate& update) {
  if (update.step_gradients.empty())
    throw std::invalid_argument(
        "projection_ratio_series: the update has no recorded step gradients; rerun "
        "the client with step recording on");
  const SubspaceProjector proj = fit_top2_subspace(update.step_gradients);
  std::vector<double> out;
  out.reserve(update.step_gradients.size());
  for (const ParamVector& g : update.step_gradients) {
    Tensor flat({g.numel()}, g.values());
    out.push_back(proj.ratio(flat));
  }
  return out;
}

Table1Stats table1_stats(const std::vector<Table1Row>& runs) {
  if (runs.size() < 2)
    throw std::invalid_argument("table1_stats: sample statistics need at least two runs");
  auto stats = [&](auto field) {
    MeanStd ms;
    for (const Table1Row& r : runs) ms.mean += field(r);
    ms.mean /= static_cast<double>(runs.size());
    double ss = 0.0;
    for (const Table1Row& r : runs) {
      const double dev = field(r) - ms.mean;
      ss += dev * dev;
    }
    ms.std = std::sqrt(ss / static_cast<double>(runs.size() - 1));
    return ms;
  };
  Table1Stats out;
  out.min_ratio = stats([](const Table1Row& r) { return r.min_ratio; });
  out.endpoint_cosim = stats([](const Table1Row& r) { return r.endpoint_cosim; });
  out.max_cosim = stats([](const Table1Row& r) { return r.max_cosim; });
  return out;
}

double eval_bound_gd(const BoundInputs& b) {
  check_bound_inputs(b, "eval_bound_gd");
  const double root = b.G2 + gd_root(b);
  return root * root;
}

SgdBound eval_bound_sgd(const BoundInputs& b) {
  check_bound_inputs(b, "eval_bound_sgd");
  if (!(b.G2 < 1.0))
    throw std::invalid_argument("eval_bound_sgd: requires G2 < 1");
  if (!(b.loss_floor <= b.loss_wT))
    throw std::invalid_argument("eval_bound_sgd: loss_floor must not exceed loss_wT");

  const double drop = b.loss_w0 - b.loss_wT;
  const double c_gd = gd_root(b);
  if (!(c_gd < 1.0))
    throw std::invalid_argument(
        "eval_bound_sgd: requires the plain-GD root term below 1; the noiseless "
        "deviation already overwhelms the bound");

  const double growth = std::pow(1.0 + b.eta * b.beta, static_cast<double>(b.T) - 1.0);
  if (!std::isfinite(growth))
    throw std::overflow_error(
        "eval_bound_sgd: (1 + eta*beta)^(T-1) overflows double precision; the "
        "bound saturates for this step count");

  double r;
  if (b.E_max == 0.0) {
    r = std::numeric_limits<double>::infinity();
  } else {
    const double c = 1.0 / (std::sqrt(b.eta) * growth);
    const double r1 =
        c * drop * drop /
        (4.0 * b.L * b.L * static_cast<double>(b.T) * b.E_max * b.E_max);
    const double r2 = c * drop / (4.0 * b.L * b.E_max);
    r = std::min(r1, r2);
  }

  const double c_eta = 1.0 / (1.0 - std::sqrt(b.eta));
  const double term2 =
      safe_div(2.0 * b.eta * b.eta * b.beta * b.beta * static_cast<double>(b.T) * drop,
               b.gamma * (1.0 - b.G2 * b.G2) * (b.loss_wT - b.loss_floor));
  const double term3 =
      c_eta * (1.0 + b.G2) / (1.0 - c_gd) *
      (c_gd + b.L * static_cast<double>(b.T) * b.E_max * b.eta * growth / drop);

  SgdBound out;
  out.bound = 2.0 * b.eta + term2 + term3 + b.G2 * b.G2;
  out.probability = 1.0 - 3.0 * static_cast<double>(b.T) * std::exp(-r);
  return out;
}

BoundInputs estimate_bound_inputs(const FlatTrajectory& traj, const FlatLoss& loss,
                                  double eta, double loss_floor) {
  const auto& its = traj.iterates;
  const auto& gs = traj.gradients;
  if (gs.size() < 2 || its.size() != gs.size() + 1)
    throw std::invalid_argument(
        "estimate_bound_inputs: need a trajectory with at least two recorded steps");
  if (!(eta > 0.0))
    throw std::invalid_argument("estimate_bound_inputs: step size must be positive");

  const SubspaceProjector proj = fit_top2_subspace(gs);

  BoundInputs b;
  b.eta = eta;
  b.T = gs.size();
  b.E_max = 0.0;
  b.loss_floor = loss_floor;

  for (const Tensor& g : gs) {
    const double n = vnorm(g.values());
    b.L = std::max(b.L, n);
    if (n > 0.0) b.G2 = std::max(b.G2, proj.residual_norm(g) / n);
  }

  double gamma = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < gs.size(); ++t) {
    std::vector<double> dg = gs[t + 1].values();
    std::vector<double> dw = its[t + 1].values();
    for (std::size_t j = 0; j < dg.size(); ++j) {
      dg[j] -= gs[t].values()[j];
      dw[j] -= its[t].values()[j];
    }
    const double ndw = vnorm(dw);
    if (ndw == 0.0) continue;
    b.beta = std::max(b.beta, vnorm(dg) / ndw);
    gamma = std::min(gamma, vdot(dg, dw) / (ndw * ndw));
  }
  if (!std::isfinite(gamma)) gamma = 0.0;
  b.gamma = std::max(gamma, 0.0);

  b.loss_w0 = loss_at(loss, its.front());
  b.loss_wT = loss_at(loss, its.back());
  return b;
}

Flow2dResult flow2d_check(const FlatLoss& loss, const Tensor& w0, double duration,
                          double resolution) {
  if (w0.numel() != 2)
    throw ShapeError("flow2d_check: start point must have exactly two components, got " +
                     Tensor::shape_string(w0.shape()));
  if (!(duration > 0.0))
    throw std::invalid_argument("flow2d_check: duration must be positive");
  if (!(resolution > 0.0) || !(resolution <= duration))
    throw std::invalid_argument("flow2d_check: resolution must lie in (0, duration]");

  const auto steps = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(duration / resolution)));
  if (steps > 10'000'000)
    throw ResourceError("flow2d_check: " + std::to_string(steps) +
                        " integration steps exceed the 1e7 cap; coarsen the resolution");
  const std::size_t grid = steps + 1;

  Tensor w = w0;
  {
    const Tensor g0 = flat_grad(loss, w);
    if (vnorm(g0.values()) == 0.0)
      throw DegenerateUpdateError("flow2d_check: the start point is stationary");
  }
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor g = flat_grad(loss, w);
    for (std::size_t j = 0; j < 2; ++j) w.values()[j] -= resolution * g.values()[j];
  }

  const double u0 = w0.values()[0] - w.values()[0];
  const double u1 = w0.values()[1] - w.values()[1];
  const double un = std::sqrt(u0 * u0 + u1 * u1);
  if (un == 0.0)
    throw DegenerateUpdateError("flow2d_check: the flow did not move from the start");

  Flow2dResult best;
  bool found = false;
  for (std::size_t i = 0; i < grid; ++i) {
    const double alpha = static_cast<double>(i) / static_cast<double>(grid - 1);
    Tensor mid({2});
    for (std::size_t j = 0; j < 2; ++j)
      mid.values()[j] = alpha * w0.values()[j] + (1.0 - alpha) * w.values()[j];
    const Tensor g = flat_grad(loss, mid);
    const double gn = vnorm(g.values());
    if (gn == 0.0) continue;
    const double cross =
        std::abs(g.values()[0] * u1 - g.values()[1] * u0) / (gn * un);
    if (!found || cross < best.residual) {
      best.alpha_star = alpha;
      best.residual = cross;
      found = true;
    }
  }
  if (!found)
    throw DegenerateUpdateError("flow2d_check: every grid point is stationary");
  return best;
}

}  // namespace fedinv
