#include "fedinv/evaluation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fedinv/errors.hpp"

namespace fedinv {

double psnr(const Tensor& a, const Tensor& b, double peak, double cap) {
  if (!a.same_shape(b))
    throw ShapeError("psnr: shape mismatch, " + Tensor::shape_string(a.shape()) + " vs " +
                     Tensor::shape_string(b.shape()));
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  if (a.numel() == 0) throw ShapeError("psnr: empty image");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return cap;
  return 10.0 * std::log10(peak * peak / mse);
}

Assignment linear_sum_assignment(const Tensor& cost) {
  if (cost.ndim() != 2 || cost.dim(0) != cost.dim(1))
    throw ShapeError("linear_sum_assignment: cost must be square, got " +
                     Tensor::shape_string(cost.shape()));
  const std::size_t n = cost.dim(0);
  if (n == 0) throw ShapeError("linear_sum_assignment: empty cost matrix");
  for (std::size_t i = 0; i < cost.numel(); ++i)
    if (!std::isfinite(cost[i]))
      throw std::invalid_argument("linear_sum_assignment: non-finite cost entry");

  // Potentials-and-augmenting-paths Hungarian; p[j] is the row matched to
  // column j, index 0 is the virtual unmatched slot.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      std::size_t j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.permutation.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.permutation[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) out.total_cost += cost[i * n + out.permutation[i]];
  return out;
}

namespace {

Tensor batch_row(const Tensor& batch, std::size_t i) {
  std::vector<std::size_t> shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t stride = Tensor::count(shape);
  Tensor out(shape);
  for (std::size_t k = 0; k < stride; ++k) out[k] = batch[i * stride + k];
  return out;
}

}  // namespace

PairingReport pair_and_score(const Tensor& reconstructed, const Tensor& original,
                             double peak, double cap) {
  if (reconstructed.ndim() < 2 || !reconstructed.same_shape(original))
    throw ShapeError("pair_and_score: batches must share shape (N,...), got " +
                     Tensor::shape_string(reconstructed.shape()) + " vs " +
                     Tensor::shape_string(original.shape()));
  const std::size_t n = reconstructed.dim(0);
  if (n == 0) throw ShapeError("pair_and_score: empty batch");

  std::vector<Tensor> rec(n), org(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec[i] = batch_row(reconstructed, i);
    org[i] = batch_row(original, i);
  }
  Tensor cost({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = -psnr(rec[i], org[j], peak, cap);

  Assignment a = linear_sum_assignment(cost);
  PairingReport report;
  report.permutation = a.permutation;
  report.pair_psnr.reserve(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = -cost[i * n + a.permutation[i]];
    report.pair_psnr.push_back(p);
    total += p;
  }
  report.mean_psnr = total / static_cast<double>(n);
  return report;
}

}  // namespace fedinv
