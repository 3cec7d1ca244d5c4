#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fedinv/tensor.hpp"

namespace fedinv {

struct Node;

// Handle to a node in the computation graph. Cheap to copy, value lives on
// the shared node. Graphs are confined to the thread that built them.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

  // Leaf copy of the current value, cut off from the graph.
  Var detach() const;

  // Gradient accumulated by backward(). Throws if none has been stored.
  const Tensor& grad() const;
  bool has_grad() const;
  void clear_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Edge {
  std::shared_ptr<Node> parent;
  std::function<Var(const Var&)> vjp;
};

struct Node {
  std::uint64_t id = 0;
  Tensor value;
  std::vector<Edge> edges;
  bool requires_grad = false;
  std::unique_ptr<Tensor> grad_accum;

  // Iterative teardown; deep graphs must not recurse through shared_ptr
  // chains in the destructor.
  ~Node();
};

// While alive, newly created ops record no edges, so results are constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Reverse-mode engine. `output` must be a scalar. Returns one gradient per
// entry of `inputs` (zeros when disconnected). With create_graph the returned
// gradients carry their own graph and can be differentiated again.
std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs,
                      bool create_graph = false);

// Accumulates plain-tensor gradients into the requires-grad leaves reachable
// from `output` (adds to any existing .grad()).
void backward(const Var& output);

// Elementwise and scalar ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var neg(const Var& a);
Var addc(const Var& a, const Tensor& c);
Var mulc(const Var& a, const Tensor& c);
Var smul(const Var& x, const Var& s);  // tensor times scalar variable
Var relu(const Var& a);
Var vtanh(const Var& a);
Var vexp(const Var& a);
Var vlog(const Var& a);
Var vabs(const Var& a);
Var vpow(const Var& a, double e);

// Reductions and broadcasts.
Var sum(const Var& a);
Var bcast_all(const Var& s, std::vector<std::size_t> shape);
Var rowsum(const Var& a);                         // (N,K) -> (N)
Var bcast_cols(const Var& v, std::size_t k);      // (N) -> (N,K)
Var colsum(const Var& a);                         // (N,K) -> (K)
Var bcast_rows(const Var& v, std::size_t n);      // (K) -> (N,K)
Var channel_sum(const Var& a);                    // (N,C,H,W) -> (C)
Var bcast_channel(const Var& v, std::vector<std::size_t> shape);
Var inner(const Var& a, const Var& b);            // scalar

// Linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Convolution, stride 1, symmetric zero padding. Padding must be less than
// the kernel extent on each axis (enough for same- and valid-style layers).
Var conv2d(const Var& x, const Var& k, std::size_t pad);
Var conv2d(const Var& x, const Var& k, std::size_t pad_h, std::size_t pad_w);
Var flip_hw(const Var& k);
Var swap01(const Var& x);

// 2x2 pooling with stride 2 on (N,C,H,W); H and W must be even.
Var sumpool2(const Var& x);
Var upsample2(const Var& x);
Var meanpool2(const Var& x);
Var maxpool2(const Var& x);

// Shape and indexing.
Var reshape(const Var& x, std::vector<std::size_t> shape);
Var gather_labels(const Var& x, std::vector<std::size_t> labels);
Var scatter_labels(const Var& v, std::vector<std::size_t> labels, std::size_t k);
Var gather_rows(const Var& x, std::vector<std::size_t> indices);
Var scatter_rows(const Var& v, std::vector<std::size_t> indices, std::size_t n);
Var concat(const std::vector<Var>& parts);        // flattened 1-D concat
Var slice1d(const Var& x, std::size_t offset, std::size_t len);
Var embed1d(const Var& v, std::size_t offset, std::size_t len);

// Forward differences along height/width of (N,C,H,W).
Var shift_diff_h(const Var& x);
Var shift_diff_w(const Var& x);

// Composites.
Var one_minus(const Var& s);
Var l2norm(const Var& x);
Var cosine_sim(const Var& u, const Var& v);
Var cosine_loss(const Var& u, const Var& v);  // 1 - cos
Var log_softmax(const Var& x);                // rows of (N,K)
Var cross_entropy_mean(const Var& logits, const std::vector<std::size_t>& labels);

// Central-difference gradient of a scalar function, the test oracle for the
// engine above.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double eps = 1e-5);

}  // namespace fedinv
