#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fedinv/autodiff.hpp"
#include "fedinv/dataset.hpp"
#include "fedinv/fedavg.hpp"
#include "fedinv/models.hpp"
#include "fedinv/tensor.hpp"

namespace fedinv {

// Scalar loss over a flat weight vector; any data is closed over. The common
// currency of the analysis instruments, so they work unchanged on neural
// models and on the small closed-form fields used to cross-check them.
using FlatLoss = std::function<Var(const Var& w)>;

// Mean cross-entropy of the model on d, as a function of flattened weights.
FlatLoss model_flat_loss(const ModelSpec& spec, const Dataset& d);

// 1/2 (w - center)^T a (w - center); a must be symmetric p x p.
FlatLoss quadratic_loss(const Tensor& a, const Tensor& center);

// Plain gradient descent on a flat loss, keeping every iterate and gradient.
struct FlatTrajectory {
  std::vector<Tensor> iterates;   // steps + 1 entries
  std::vector<Tensor> gradients;  // one per step, at the step's start point
};
FlatTrajectory run_gd(const FlatLoss& loss, const Tensor& w0, double eta,
                      std::size_t steps);

// Top-2 right singular directions of the stacked step-gradient matrix.
struct SubspaceProjector {
  Tensor b1, b2;  // flat, unit norm, mutually orthogonal

  double projected_norm(const Tensor& v) const;  // |P2 v|
  double residual_norm(const Tensor& v) const;   // |v - P2 v|, explicit
  double ratio(const Tensor& v) const;           // |P2 v| / |v|, 0 for v = 0
};

SubspaceProjector fit_top2_subspace(const std::vector<Tensor>& gradients);
SubspaceProjector fit_top2_subspace(const std::vector<ParamVector>& gradients);

// Symmetric eigendecomposition by cyclic Jacobi sweeps; eigenvalues sorted
// descending, eigenvectors in the matching columns.
void sym_eig(const Tensor& a, std::vector<double>& values, Tensor& vectors);

// Cosine loss between the reversed update and the true gradient at w0: the
// intrinsic error a vanilla inversion cannot go below on multi-step updates.
double delta_error(const ModelSpec& spec, const LocalUpdate& update, const Dataset& d);
double delta_error_flat(const Tensor& w0, const Tensor& wT, const FlatLoss& loss);

struct AlphaPoint {
  double alpha;
  double cosim;  // cosine similarity, 1 - L_sim
};

// Cosine similarity between (w0 - wT) and the gradient at the interpolated
// weights, over a uniform alpha grid on [0,1] (alpha = 1 sits at w0).
std::vector<AlphaPoint> alpha_sweep(const ModelSpec& spec, const LocalUpdate& update,
                                    const Dataset& d, std::size_t grid);
std::vector<AlphaPoint> alpha_sweep_flat(const Tensor& w0, const Tensor& wT,
                                         const FlatLoss& loss, std::size_t grid);

// Per-step |P2 grad| / |grad| against the update's recorded step gradients.
std::vector<double> projection_ratio_series(const LocalUpdate& update);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};
struct Table1Row {
  double min_ratio = 0.0;       // min over steps of the projection ratio
  double endpoint_cosim = 0.0;  // cosine similarity at alpha = 1
  double max_cosim = 0.0;       // best over the alpha grid
};
struct Table1Stats {
  MeanStd min_ratio, endpoint_cosim, max_cosim;
};
Table1Stats table1_stats(const std::vector<Table1Row>& runs);

// Inputs of the similarity bounds. All estimates, not certified constants.
struct BoundInputs {
  double G2 = 0.0;          // orthogonal-leak fraction of step gradients
  double L = 0.0;           // loss Lipschitz estimate
  double beta = 0.0;        // gradient Lipschitz estimate
  double gamma = 0.0;       // strong-convexity estimate
  double eta = 0.0;         // step size
  std::size_t T = 0;        // local steps
  double loss_w0 = 0.0;     // loss at the round start
  double loss_wT = 0.0;     // loss at the (GD-path) round end
  double E_max = 0.0;       // max gradient-noise norm; 0 for plain GD
  double loss_floor = 0.0;  // global-minimum loss; 0 is the crude CE choice
};

// Similarity bound for plain GD:
// (G2 + sqrt(T G^2(eta,beta) L^2 / (loss_w0 - loss_wT)))^2 with
// G^2(eta,beta) = G2^2 eta / (1 - eta beta / 2).
double eval_bound_gd(const BoundInputs& b);

struct SgdBound {
  double bound = 0.0;
  double probability = 0.0;  // holds with at least this probability
};

// Similarity bound for SGD plus the probability it carries. E_max = 0 gives
// probability exactly 1 (noiseless limit).
SgdBound eval_bound_sgd(const BoundInputs& b);

// Conservative empirical constants measured from a recorded trajectory:
// G2 as the worst orthogonal ratio, L as the largest gradient norm, beta as
// the largest gradient-difference/step-distance ratio, gamma as the smallest
// secant curvature.
BoundInputs estimate_bound_inputs(const FlatTrajectory& traj, const FlatLoss& loss,
                                  double eta, double loss_floor = 0.0);

struct Flow2dResult {
  double alpha_star = 0.0;
  double residual = 0.0;  // |sin angle(grad at best interpolate, w0 - w(T))|
};

// Integrates 2D gradient flow by small-step descent for `duration`, then
// scans the w0..w(T) segment for the point whose gradient is most parallel
// to the flow displacement. One resolution knob sets both the integrator
// step and the alpha-grid spacing (steps + 1 points), so shrinking it
// tightens the whole measurement.
Flow2dResult flow2d_check(const FlatLoss& loss, const Tensor& w0, double duration,
                          double resolution);

}  // namespace fedinv
