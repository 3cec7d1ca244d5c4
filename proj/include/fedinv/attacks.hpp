#pragma once

#include <cstdint>
#include <vector>

#include "fedinv/autodiff.hpp"
#include "fedinv/fedavg.hpp"
#include "fedinv/models.hpp"
#include "fedinv/tensor.hpp"

namespace fedinv {

enum class SimVariant { Euclid, Cosine };

struct AttackConfig {
  std::size_t iterations = 1000;  // K
  double eta_data = 1.0;
  double eta_alpha = 0.001;
  double tv_lambda = 0.01;
  double alpha0 = 0.5;
  double pixel_lo = 0.0;
  double pixel_hi = 1.0;
  std::uint64_t seed = 0;
  // Simulation baseline only.
  SimVariant sim_variant = SimVariant::Euclid;
  std::size_t sim_unroll_cap = 64;
};

struct AttackResult {
  Tensor reconstructed;               // (N,C,H,W), inside pixel bounds
  std::vector<std::size_t> labels;
  std::vector<double> loss_trace;     // objective at each iterate, pre-step
  std::vector<double> lsim_trace;     // similarity term alone, pre-step
  std::vector<double> alpha_trace;    // surrogate attack only
  double final_lsim = 0.0;            // similarity term at the returned data
  double final_alpha = 1.0;
  double wallclock_s = 0.0;
};

// Standard Adam on a flat tensor; one instance per optimized quantity.
class Adam {
 public:
  explicit Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(Tensor& x, const Tensor& g);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// 1 - <u,v>/(|u||v|); throws DegenerateUpdateError on a zero-norm operand.
Var cosine_similarity_loss(const Var& u, const Var& v);

// Anisotropic total variation of an image batch, normalized by batch size.
Var total_variation(const Var& images);

Tensor clamp_pixels(Tensor x, double lo, double hi);

// Gradient-inversion baseline: Adam on dummy data against
// cosine_similarity_loss(w0 - wT, grad at w0) + tv_lambda * TV.
AttackResult attack_ig(const ModelSpec& spec, const LocalUpdate& update,
                       const std::vector<std::size_t>& labels,
                       const AttackConfig& cfg);

// Surrogate-model attack: like attack_ig but the gradient is taken at the
// interpolation alpha*w0 + (1-alpha)*wT, and alpha is optimized jointly with
// its own Adam state (learning rate eta_alpha), clamped to [0,1] each step.
AttackResult attack_sme(const ModelSpec& spec, const LocalUpdate& update,
                        const std::vector<std::size_t>& labels,
                        const AttackConfig& cfg);

// The unrolled-simulation loss at dummy data `d`: run local_steps(n, protocol)
// SGD steps from w0 on d (batched exactly like the client), then compare the
// simulated weight change against (wT - w0). Exposed for oracle tests.
Var sim_loss(const ModelSpec& spec, const LocalUpdate& update,
             const std::vector<std::size_t>& labels, const Var& d,
             const ClientConfig& protocol, SimVariant variant);

// Simulation baseline: Adam on dummy data against sim_loss. No TV prior.
// Throws ResourceError when the protocol implies more unrolled steps than
// cfg.sim_unroll_cap.
AttackResult attack_sim(const ModelSpec& spec, const LocalUpdate& update,
                        const std::vector<std::size_t>& labels,
                        const AttackConfig& cfg, const ClientConfig& protocol);

// Classes whose final-classifier row of (w0 - wT) has a negative row sum.
// Exact for one local step when every sample shares one class (softmax-CE
// row sums cancel across classes, so mixed batches are best-effort).
std::vector<std::size_t> recover_labels(const LocalUpdate& update,
                                        std::size_t class_count);

}  // namespace fedinv
