#pragma once

#include <cstddef>
#include <vector>

#include "fedinv/tensor.hpp"

namespace fedinv {

// Peak signal-to-noise ratio in dB: 10*log10(peak^2 / MSE). Identical inputs
// (MSE == 0) return `cap` instead of infinity.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0, double cap = 100.0);

struct Assignment {
  std::vector<std::size_t> permutation;  // row i -> column permutation[i]
  double total_cost = 0.0;
};

// Minimum-total-cost bijection rows -> columns of a square cost matrix
// (Hungarian method, O(n^3)).
Assignment linear_sum_assignment(const Tensor& cost);

struct PairingReport {
  std::vector<std::size_t> permutation;  // reconstructed index -> original index
  std::vector<double> pair_psnr;         // per reconstructed image, paired
  double mean_psnr = 0.0;
  double final_lsim = 0.0;  // filled by the caller that ran the attack
};

// Pairs reconstructed images with originals by minimizing total (-PSNR), the
// assignment objective matching the reported metric, then scores the pairs.
PairingReport pair_and_score(const Tensor& reconstructed, const Tensor& original,
                             double peak = 1.0, double cap = 100.0);

}  // namespace fedinv
