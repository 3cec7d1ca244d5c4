#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedinv/autodiff.hpp"
#include "fedinv/dataset.hpp"
#include "fedinv/tensor.hpp"

namespace fedinv {

struct LayoutEntry {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t numel() const { return Tensor::count(shape); }
  bool operator==(const LayoutEntry& o) const = default;
};

// Flattened model weights: an ordered layout plus one contiguous value array.
// Immutable after construction; safe to share across threads.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::vector<LayoutEntry> layout, std::vector<double> values);

  const std::vector<LayoutEntry>& layout() const { return layout_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t numel() const { return values_.size(); }
  bool same_layout(const ParamVector& o) const { return layout_ == o.layout_; }

  // Offset of entry i in the flat array.
  std::size_t offset(std::size_t i) const;
  Tensor entry_tensor(std::size_t i) const;

  static std::size_t layout_numel(const std::vector<LayoutEntry>& layout);

 private:
  std::vector<LayoutEntry> layout_;
  std::vector<double> values_;
};

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scale(const ParamVector& a, double c);
double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& a);
ParamVector zeros_like(const ParamVector& a);

// Elementwise alpha*w0 + (1-alpha)*wT; alpha = 1 gives the round-start
// weights, alpha = 0 the round-end weights.
ParamVector interpolate(const ParamVector& w0, const ParamVector& wT, double alpha);

enum class Arch { MLP, CNN2 };

// Victim architectures. MLP: flatten, dense hidden layers with relu, linear
// classifier. CNN2: two same-size conv layers (stride 1, pad (k-1)/2), each
// followed by relu and 2x2 mean pooling, then one hidden dense layer with
// relu and a linear classifier.
struct ModelSpec {
  Arch arch = Arch::MLP;
  std::size_t in_channels = 1;
  std::size_t in_h = 28;
  std::size_t in_w = 28;
  std::size_t classes = 10;
  std::vector<std::size_t> hidden;         // MLP hidden widths (may be empty)
  std::vector<std::size_t> conv_channels;  // CNN2: exactly two entries
  std::size_t kernel = 3;                  // CNN2: odd
  std::vector<std::size_t> fc_hidden;      // CNN2: exactly one entry
};

void validate_spec(const ModelSpec& spec);
std::vector<LayoutEntry> model_layout(const ModelSpec& spec);

ParamVector init_weights(const ModelSpec& spec, std::uint64_t seed);

// One Var per layout entry, in layout order.
std::vector<Var> to_vars(const ParamVector& w, bool requires_grad);
// Flatten per-entry tensors (e.g. gradients) back into the given layout.
ParamVector from_tensors(const std::vector<LayoutEntry>& layout,
                         const std::vector<Tensor>& tensors);

// Class logits for a batch; x is (N,C,H,W) (MLP also accepts (N,features)).
Var model_logits(const ModelSpec& spec, const std::vector<Var>& params, const Var& x);

// Mean cross-entropy over the batch, differentiable w.r.t. params and x.
Var forward_loss(const ModelSpec& spec, const std::vector<Var>& params, const Var& x,
                 const std::vector<std::size_t>& labels);
Var forward_loss(const ModelSpec& spec, const ParamVector& w, const Var& x,
                 const std::vector<std::size_t>& labels);
double loss_value(const ModelSpec& spec, const ParamVector& w, const Dataset& d);

// Per-entry gradients of forward_loss w.r.t. params; with create_graph the
// results stay differentiable (w.r.t. x in particular).
std::vector<Var> grad_weights_vars(const ModelSpec& spec, const std::vector<Var>& params,
                                   const Var& x, const std::vector<std::size_t>& labels,
                                   bool create_graph);

// Flattened gradient of the mean loss on dataset d at weights w.
ParamVector grad_weights(const ModelSpec& spec, const ParamVector& w, const Dataset& d);

}  // namespace fedinv
