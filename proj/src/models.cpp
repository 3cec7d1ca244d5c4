#include "fedinv/models.hpp"

#include <cmath>
#include <utility>

#include "fedinv/errors.hpp"
#include "fedinv/rng.hpp"

namespace fedinv {

ParamVector::ParamVector(std::vector<LayoutEntry> layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (layout_numel(layout_) != values_.size())
    throw ShapeError("ParamVector: layout wants " +
                     std::to_string(layout_numel(layout_)) + " values, got " +
                     std::to_string(values_.size()));
}

std::size_t ParamVector::layout_numel(const std::vector<LayoutEntry>& layout) {
  std::size_t n = 0;
  for (const auto& e : layout) n += e.numel();
  return n;
}

std::size_t ParamVector::offset(std::size_t i) const {
  std::size_t off = 0;
  for (std::size_t j = 0; j < i; ++j) off += layout_[j].numel();
  return off;
}

Tensor ParamVector::entry_tensor(std::size_t i) const {
  const std::size_t off = offset(i);
  const std::size_t n = layout_[i].numel();
  std::vector<double> vals(values_.begin() + off, values_.begin() + off + n);
  return Tensor(layout_[i].shape, std::move(vals));
}

namespace {

void check_combinable(const char* op, const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b))
    throw ShapeError(std::string(op) + ": parameter layouts differ");
}

}  // namespace

ParamVector add(const ParamVector& a, const ParamVector& b) {
  check_combinable("add", a, b);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  return ParamVector(a.layout(), std::move(v));
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  check_combinable("sub", a, b);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
  return ParamVector(a.layout(), std::move(v));
}

ParamVector scale(const ParamVector& a, double c) {
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
  return ParamVector(a.layout(), std::move(v));
}

double dot(const ParamVector& a, const ParamVector& b) {
  check_combinable("dot", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

double norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

ParamVector zeros_like(const ParamVector& a) {
  return ParamVector(a.layout(), std::vector<double>(a.numel(), 0.0));
}

ParamVector interpolate(const ParamVector& w0, const ParamVector& wT, double alpha) {
  check_combinable("interpolate", w0, wT);
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("interpolate: alpha must lie in [0,1], got " +
                                std::to_string(alpha));
  std::vector<double> v(w0.numel());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = alpha * w0.values()[i] + (1.0 - alpha) * wT.values()[i];
  return ParamVector(w0.layout(), std::move(v));
}

void validate_spec(const ModelSpec& spec) {
  if (spec.in_channels == 0 || spec.in_h == 0 || spec.in_w == 0)
    throw ConfigError("model: input shape must be positive");
  if (spec.classes < 2) throw ConfigError("model: need at least two classes");
  if (spec.arch == Arch::MLP) {
    for (std::size_t h : spec.hidden)
      if (h == 0) throw ConfigError("model: zero-width hidden layer");
    return;
  }
  if (spec.conv_channels.size() != 2)
    throw ConfigError("model: CNN2 needs exactly two conv channel counts");
  if (spec.fc_hidden.size() != 1)
    throw ConfigError("model: CNN2 needs exactly one hidden dense width");
  if (spec.conv_channels[0] == 0 || spec.conv_channels[1] == 0 || spec.fc_hidden[0] == 0)
    throw ConfigError("model: zero-width layer");
  if (spec.kernel % 2 == 0 || spec.kernel == 0)
    throw ConfigError("model: CNN2 kernel must be odd");
  if (spec.in_h % 4 != 0 || spec.in_w % 4 != 0)
    throw ConfigError("model: CNN2 input height/width must be divisible by 4");
}

std::vector<LayoutEntry> model_layout(const ModelSpec& spec) {
  validate_spec(spec);
  std::vector<LayoutEntry> layout;
  if (spec.arch == Arch::MLP) {
    std::size_t in = spec.in_channels * spec.in_h * spec.in_w;
    std::size_t idx = 1;
    for (std::size_t h : spec.hidden) {
      layout.push_back({"fc" + std::to_string(idx) + ".weight", {h, in}});
      layout.push_back({"fc" + std::to_string(idx) + ".bias", {h}});
      in = h;
      ++idx;
    }
    layout.push_back({"fc" + std::to_string(idx) + ".weight", {spec.classes, in}});
    layout.push_back({"fc" + std::to_string(idx) + ".bias", {spec.classes}});
    return layout;
  }
  const std::size_t c1 = spec.conv_channels[0], c2 = spec.conv_channels[1];
  const std::size_t k = spec.kernel;
  layout.push_back({"conv1.weight", {c1, spec.in_channels, k, k}});
  layout.push_back({"conv1.bias", {c1}});
  layout.push_back({"conv2.weight", {c2, c1, k, k}});
  layout.push_back({"conv2.bias", {c2}});
  const std::size_t flat = c2 * (spec.in_h / 4) * (spec.in_w / 4);
  layout.push_back({"fc1.weight", {spec.fc_hidden[0], flat}});
  layout.push_back({"fc1.bias", {spec.fc_hidden[0]}});
  layout.push_back({"fc2.weight", {spec.classes, spec.fc_hidden[0]}});
  layout.push_back({"fc2.bias", {spec.classes}});
  return layout;
}

ParamVector init_weights(const ModelSpec& spec, std::uint64_t seed) {
  const auto layout = model_layout(spec);
  Rng rng(seed);
  std::vector<double> values;
  values.reserve(ParamVector::layout_numel(layout));
  // Pairs of (weight, bias); the bound comes from the weight's fan-in.
  for (std::size_t i = 0; i < layout.size(); i += 2) {
    const auto& wshape = layout[i].shape;
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < wshape.size(); ++d) fan_in *= wshape[d];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const std::size_t n = layout[i].numel() + layout[i + 1].numel();
    for (std::size_t j = 0; j < n; ++j) values.push_back(rng.uniform(-bound, bound));
  }
  return ParamVector(layout, std::move(values));
}

std::vector<Var> to_vars(const ParamVector& w, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(w.layout().size());
  for (std::size_t i = 0; i < w.layout().size(); ++i)
    vars.emplace_back(w.entry_tensor(i), requires_grad);
  return vars;
}

ParamVector from_tensors(const std::vector<LayoutEntry>& layout,
                         const std::vector<Tensor>& tensors) {
  if (layout.size() != tensors.size())
    throw ShapeError("from_tensors: " + std::to_string(tensors.size()) +
                     " tensors for " + std::to_string(layout.size()) + " entries");
  std::vector<double> values;
  values.reserve(ParamVector::layout_numel(layout));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors[i].shape() != layout[i].shape)
      throw ShapeError("from_tensors: entry " + layout[i].name + " expects " +
                       Tensor::shape_string(layout[i].shape) + ", got " +
                       Tensor::shape_string(tensors[i].shape()));
    values.insert(values.end(), tensors[i].values().begin(), tensors[i].values().end());
  }
  return ParamVector(layout, std::move(values));
}

namespace {

Var dense(const Var& x, const Var& w, const Var& b) {
  Var z = matmul(x, transpose(w));
  return add(z, bcast_rows(b, z.shape()[0]));
}

Var conv_layer(const Var& x, const Var& w, const Var& b, std::size_t pad) {
  Var z = conv2d(x, w, pad);
  return add(z, bcast_channel(b, z.shape()));
}

Var check_input(const ModelSpec& spec, const Var& x) {
  const std::size_t feat = spec.in_channels * spec.in_h * spec.in_w;
  if (x.shape().size() == 4) {
    if (x.shape()[1] != spec.in_channels || x.shape()[2] != spec.in_h ||
        x.shape()[3] != spec.in_w)
      throw ShapeError("model: input " + Tensor::shape_string(x.shape()) +
                       " does not match spec (" + std::to_string(spec.in_channels) +
                       "," + std::to_string(spec.in_h) + "," +
                       std::to_string(spec.in_w) + ")");
    return x;
  }
  if (spec.arch == Arch::MLP && x.shape().size() == 2) {
    if (x.shape()[1] != feat)
      throw ShapeError("model: input " + Tensor::shape_string(x.shape()) +
                       " does not match " + std::to_string(feat) + " features");
    return x;
  }
  throw ShapeError("model: unsupported input shape " + Tensor::shape_string(x.shape()));
}

}  // namespace

Var model_logits(const ModelSpec& spec, const std::vector<Var>& params, const Var& x) {
  const auto layout = model_layout(spec);
  if (params.size() != layout.size())
    throw ShapeError("model: expected " + std::to_string(layout.size()) +
                     " parameter tensors, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (params[i].shape() != layout[i].shape)
      throw ShapeError("model: parameter " + layout[i].name + " expects " +
                       Tensor::shape_string(layout[i].shape) + ", got " +
                       Tensor::shape_string(params[i].shape()));

  Var in = check_input(spec, x);
  if (spec.arch == Arch::MLP) {
    const std::size_t n = in.shape()[0];
    Var h = in.shape().size() == 4
                ? reshape(in, {n, spec.in_channels * spec.in_h * spec.in_w})
                : in;
    const std::size_t layers = params.size() / 2;
    for (std::size_t l = 0; l < layers; ++l) {
      h = dense(h, params[2 * l], params[2 * l + 1]);
      if (l + 1 < layers) h = relu(h);
    }
    return h;
  }
  if (in.shape().size() != 4)
    throw ShapeError("model: CNN2 needs (N,C,H,W) input");
  const std::size_t pad = (spec.kernel - 1) / 2;
  Var h = meanpool2(relu(conv_layer(in, params[0], params[1], pad)));
  h = meanpool2(relu(conv_layer(h, params[2], params[3], pad)));
  const std::size_t n = h.shape()[0];
  h = reshape(h, {n, h.numel() / n});
  h = relu(dense(h, params[4], params[5]));
  return dense(h, params[6], params[7]);
}

Var forward_loss(const ModelSpec& spec, const std::vector<Var>& params, const Var& x,
                 const std::vector<std::size_t>& labels) {
  for (std::size_t y : labels)
    if (y >= spec.classes)
      throw ShapeError("model: label " + std::to_string(y) + " out of range for " +
                       std::to_string(spec.classes) + " classes");
  return cross_entropy_mean(model_logits(spec, params, x), labels);
}

Var forward_loss(const ModelSpec& spec, const ParamVector& w, const Var& x,
                 const std::vector<std::size_t>& labels) {
  return forward_loss(spec, to_vars(w, false), x, labels);
}

double loss_value(const ModelSpec& spec, const ParamVector& w, const Dataset& d) {
  NoGradGuard guard;
  return forward_loss(spec, w, Var(d.images), d.labels).item();
}

std::vector<Var> grad_weights_vars(const ModelSpec& spec, const std::vector<Var>& params,
                                   const Var& x, const std::vector<std::size_t>& labels,
                                   bool create_graph) {
  Var loss = forward_loss(spec, params, x, labels);
  return grad(loss, params, create_graph);
}

ParamVector grad_weights(const ModelSpec& spec, const ParamVector& w, const Dataset& d) {
  if (d.size() == 0) throw ShapeError("grad_weights: empty dataset");
  auto params = to_vars(w, true);
  auto grads = grad_weights_vars(spec, params, Var(d.images), d.labels, false);
  std::vector<Tensor> tensors;
  tensors.reserve(grads.size());
  for (const Var& g : grads) tensors.push_back(g.value());
  return from_tensors(w.layout(), tensors);
}

}  // namespace fedinv
