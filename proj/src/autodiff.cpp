#include "fedinv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "fedinv/errors.hpp"

namespace fedinv {

namespace {

thread_local std::uint64_t g_next_id = 1;
thread_local bool g_grad_enabled = true;

std::uint64_t next_id() { return g_next_id++; }

Var make_var(Tensor value, std::vector<Edge> edges) {
  auto n = std::make_shared<Node>();
  n->id = next_id();
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (auto& e : edges) {
      if (e.parent && e.parent->requires_grad) n->edges.push_back(std::move(e));
    }
    n->requires_grad = !n->edges.empty();
  }
  return Var(std::move(n));
}

void check_defined(const char* op, const Var& v) {
  if (!v.defined()) throw std::invalid_argument(std::string(op) + ": undefined operand");
}

void check_same_shape(const char* op, const Var& a, const Var& b) {
  check_defined(op, a);
  check_defined(op, b);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     Tensor::shape_string(a.shape()) + " vs " +
                     Tensor::shape_string(b.shape()));
}

void check_ndim(const char* op, const Var& a, std::size_t nd) {
  check_defined(op, a);
  if (a.shape().size() != nd)
    throw ShapeError(std::string(op) + ": expected " + std::to_string(nd) +
                     "-d input, got " + Tensor::shape_string(a.shape()));
}

void check_scalar(const char* op, const Var& a) {
  check_defined(op, a);
  if (a.numel() != 1)
    throw ShapeError(std::string(op) + ": expected scalar, got " +
                     Tensor::shape_string(a.shape()));
}

}  // namespace

Node::~Node() {
  if (edges.empty()) return;
  thread_local std::vector<std::vector<Edge>> graveyard;
  thread_local bool draining = false;
  graveyard.push_back(std::move(edges));
  if (draining) return;
  draining = true;
  while (!graveyard.empty()) {
    std::vector<Edge> batch = std::move(graveyard.back());
    graveyard.pop_back();
    batch.clear();
  }
  draining = false;
}

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->id = next_id();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("Var::value: undefined variable");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var Var::detach() const { return Var(value(), false); }

const Tensor& Var::grad() const {
  if (!node_ || !node_->grad_accum)
    throw std::logic_error("Var::grad: no gradient stored; call backward first");
  return *node_->grad_accum;
}

bool Var::has_grad() const { return node_ && node_->grad_accum != nullptr; }

void Var::clear_grad() {
  if (node_) node_->grad_accum.reset();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape("add", a, b);
  Tensor out(a.shape());
  const Tensor &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  return make_var(std::move(out),
                  {{a.node(), [](const Var& g) { return g; }},
                   {b.node(), [](const Var& g) { return g; }}});
}

Var sub(const Var& a, const Var& b) {
  check_same_shape("sub", a, b);
  Tensor out(a.shape());
  const Tensor &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  return make_var(std::move(out),
                  {{a.node(), [](const Var& g) { return g; }},
                   {b.node(), [](const Var& g) { return scale(g, -1.0); }}});
}

Var mul(const Var& a, const Var& b) {
  check_same_shape("mul", a, b);
  Tensor out(a.shape());
  const Tensor &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return make_var(std::move(out),
                  {{a.node(), [b](const Var& g) { return mul(g, b); }},
                   {b.node(), [a](const Var& g) { return mul(g, a); }}});
}

Var scale(const Var& a, double c) {
  check_defined("scale", a);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
  return make_var(std::move(out),
                  {{a.node(), [c](const Var& g) { return scale(g, c); }}});
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var addc(const Var& a, const Tensor& c) {
  check_defined("addc", a);
  if (a.shape() != c.shape())
    throw ShapeError("addc: shape mismatch " + Tensor::shape_string(a.shape()) +
                     " vs " + Tensor::shape_string(c.shape()));
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c[i];
  return make_var(std::move(out), {{a.node(), [](const Var& g) { return g; }}});
}

Var mulc(const Var& a, const Tensor& c) {
  check_defined("mulc", a);
  if (a.shape() != c.shape())
    throw ShapeError("mulc: shape mismatch " + Tensor::shape_string(a.shape()) +
                     " vs " + Tensor::shape_string(c.shape()));
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c[i];
  return make_var(std::move(out),
                  {{a.node(), [c](const Var& g) { return mulc(g, c); }}});
}

Var smul(const Var& x, const Var& s) {
  check_defined("smul", x);
  check_scalar("smul", s);
  const double sv = s.item();
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * sv;
  return make_var(std::move(out),
                  {{x.node(), [s](const Var& g) { return smul(g, s); }},
                   {s.node(), [x](const Var& g) { return inner(g, x); }}});
}

Var relu(const Var& a) {
  check_defined("relu", a);
  Tensor out(a.shape());
  Tensor mask(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const bool on = av[i] > 0.0;
    out[i] = on ? av[i] : 0.0;
    mask[i] = on ? 1.0 : 0.0;
  }
  return make_var(std::move(out),
                  {{a.node(), [mask](const Var& g) { return mulc(g, mask); }}});
}

Var vtanh(const Var& a) {
  check_defined("vtanh", a);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(av[i]);
  return make_var(std::move(out), {{a.node(), [a](const Var& g) {
                                      Var t = vtanh(a);
                                      return mul(g, one_minus(mul(t, t)));
                                    }}});
}

Var vexp(const Var& a) {
  check_defined("vexp", a);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(av[i]);
  return make_var(std::move(out),
                  {{a.node(), [a](const Var& g) { return mul(g, vexp(a)); }}});
}

Var vlog(const Var& a) {
  check_defined("vlog", a);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(av[i]);
  return make_var(std::move(out), {{a.node(), [a](const Var& g) {
                                      return mul(g, vpow(a, -1.0));
                                    }}});
}

Var vabs(const Var& a) {
  check_defined("vabs", a);
  Tensor out(a.shape());
  Tensor sign(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = std::fabs(av[i]);
    sign[i] = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
  }
  return make_var(std::move(out),
                  {{a.node(), [sign](const Var& g) { return mulc(g, sign); }}});
}

Var vpow(const Var& a, double e) {
  check_defined("vpow", a);
  Tensor out(a.shape());
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::pow(av[i], e);
  return make_var(std::move(out), {{a.node(), [a, e](const Var& g) {
                                      return mul(g, scale(vpow(a, e - 1.0), e));
                                    }}});
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts
// ---------------------------------------------------------------------------

Var sum(const Var& a) {
  check_defined("sum", a);
  double s = 0.0;
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i];
  std::vector<std::size_t> shape = a.shape();
  return make_var(Tensor::scalar(s), {{a.node(), [shape](const Var& g) {
                                         return bcast_all(g, shape);
                                       }}});
}

Var bcast_all(const Var& s, std::vector<std::size_t> shape) {
  check_scalar("bcast_all", s);
  Tensor out = Tensor::full(shape, s.item());
  return make_var(std::move(out),
                  {{s.node(), [](const Var& g) { return sum(g); }}});
}

Var rowsum(const Var& a) {
  check_ndim("rowsum", a, 2);
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  Tensor out({n});
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += av[i * k + j];
    out[i] = s;
  }
  return make_var(std::move(out), {{a.node(), [k](const Var& g) {
                                      return bcast_cols(g, k);
                                    }}});
}

Var bcast_cols(const Var& v, std::size_t k) {
  check_ndim("bcast_cols", v, 1);
  const std::size_t n = v.shape()[0];
  Tensor out({n, k});
  const Tensor& vv = v.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = vv[i];
  return make_var(std::move(out),
                  {{v.node(), [](const Var& g) { return rowsum(g); }}});
}

Var colsum(const Var& a) {
  check_ndim("colsum", a, 2);
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  Tensor out({k});
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += av[i * k + j];
  return make_var(std::move(out), {{a.node(), [n](const Var& g) {
                                      return bcast_rows(g, n);
                                    }}});
}

Var bcast_rows(const Var& v, std::size_t n) {
  check_ndim("bcast_rows", v, 1);
  const std::size_t k = v.shape()[0];
  Tensor out({n, k});
  const Tensor& vv = v.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = vv[j];
  return make_var(std::move(out),
                  {{v.node(), [](const Var& g) { return colsum(g); }}});
}

Var channel_sum(const Var& a) {
  check_ndim("channel_sum", a, 4);
  const auto& s = a.shape();
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  Tensor out({c});
  const Tensor& av = a.value();
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t ic = 0; ic < c; ++ic) {
      const double* p = av.data() + (in * c + ic) * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      out[ic] += acc;
    }
  std::vector<std::size_t> shape = s;
  return make_var(std::move(out), {{a.node(), [shape](const Var& g) {
                                      return bcast_channel(g, shape);
                                    }}});
}

Var bcast_channel(const Var& v, std::vector<std::size_t> shape) {
  check_ndim("bcast_channel", v, 1);
  if (shape.size() != 4 || shape[1] != v.shape()[0])
    throw ShapeError("bcast_channel: target " + Tensor::shape_string(shape) +
                     " does not match channels " + Tensor::shape_string(v.shape()));
  const std::size_t n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  Tensor out(shape);
  const Tensor& vv = v.value();
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t ic = 0; ic < c; ++ic) {
      double* p = out.data() + (in * c + ic) * hw;
      for (std::size_t i = 0; i < hw; ++i) p[i] = vv[ic];
    }
  return make_var(std::move(out),
                  {{v.node(), [](const Var& g) { return channel_sum(g); }}});
}

Var inner(const Var& a, const Var& b) {
  check_same_shape("inner", a, b);
  const Tensor &av = a.value(), &bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i] * bv[i];
  return make_var(Tensor::scalar(s),
                  {{a.node(), [b](const Var& g) { return smul(b, g); }},
                   {b.node(), [a](const Var& g) { return smul(a, g); }}});
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  check_ndim("matmul", a, 2);
  check_ndim("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw ShapeError("matmul: inner dims differ, " + Tensor::shape_string(a.shape()) +
                     " vs " + Tensor::shape_string(b.shape()));
  Tensor out({m, n});
  const Tensor &av = a.value(), &bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = av.data() + i * k;
    double* orow = out.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = bv.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return make_var(std::move(out),
                  {{a.node(), [b](const Var& g) { return matmul(g, transpose(b)); }},
                   {b.node(), [a](const Var& g) { return matmul(transpose(a), g); }}});
}

Var transpose(const Var& a) {
  check_ndim("transpose", a, 2);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_var(std::move(out),
                  {{a.node(), [](const Var& g) { return transpose(g); }}});
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& k, std::size_t pad) {
  return conv2d(x, k, pad, pad);
}

Var conv2d(const Var& x, const Var& k, std::size_t pad_h, std::size_t pad_w) {
  check_ndim("conv2d", x, 4);
  check_ndim("conv2d", k, 4);
  const auto& xs = x.shape();
  const auto& ks = k.shape();
  const std::size_t n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
  const std::size_t co = ks[0], kci = ks[1], kh = ks[2], kw = ks[3];
  if (ci != kci)
    throw ShapeError("conv2d: channel mismatch " + Tensor::shape_string(xs) +
                     " vs " + Tensor::shape_string(ks));
  if (pad_h >= kh || pad_w >= kw)
    throw ShapeError("conv2d: padding must be smaller than the kernel, got pad (" +
                     std::to_string(pad_h) + "," + std::to_string(pad_w) +
                     ") for kernel " + Tensor::shape_string(ks));
  if (h + pad_h < kh || w + pad_w < kw)
    throw ShapeError("conv2d: input " + Tensor::shape_string(xs) +
                     " too small for kernel " + Tensor::shape_string(ks) +
                     " with pad (" + std::to_string(pad_h) + "," +
                     std::to_string(pad_w) + ")");
  const std::size_t ho = h + 2 * pad_h - kh + 1;
  const std::size_t wo = w + 2 * pad_w - kw + 1;

  Tensor out({n, co, ho, wo});
  const Tensor &xv = x.value(), &kv = k.value();
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(pad_h);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(pad_w);
  for (std::size_t in = 0; in < n; ++in) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      double* oplane = out.data() + (in * co + oc) * ho * wo;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const double* xplane = xv.data() + (in * ci + ic) * h * w;
        const double* kplane = kv.data() + (oc * ci + ic) * kh * kw;
        for (std::size_t i = 0; i < ho; ++i) {
          for (std::size_t a = 0; a < kh; ++a) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + a) - ph;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* xrow = xplane + ii * static_cast<std::ptrdiff_t>(w);
            const double* krow = kplane + a * kw;
            double* orow = oplane + i * wo;
            for (std::size_t j = 0; j < wo; ++j) {
              double acc = 0.0;
              for (std::size_t b = 0; b < kw; ++b) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + b) - pw;
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += xrow[jj] * krow[b];
              }
              orow[j] += acc;
            }
          }
        }
      }
    }
  }

  const std::size_t qh = kh - 1 - pad_h, qw = kw - 1 - pad_w;
  return make_var(
      std::move(out),
      {{x.node(),
        [k, qh, qw](const Var& g) {
          return conv2d(g, swap01(flip_hw(k)), qh, qw);
        }},
       {k.node(), [x, pad_h, pad_w](const Var& g) {
          return swap01(conv2d(swap01(x), swap01(g), pad_h, pad_w));
        }}});
}

Var flip_hw(const Var& k) {
  check_ndim("flip_hw", k, 4);
  const auto& s = k.shape();
  const std::size_t oc = s[0], ic = s[1], kh = s[2], kw = s[3];
  Tensor out(s);
  const Tensor& kv = k.value();
  for (std::size_t p = 0; p < oc * ic; ++p) {
    const double* src = kv.data() + p * kh * kw;
    double* dst = out.data() + p * kh * kw;
    for (std::size_t a = 0; a < kh; ++a)
      for (std::size_t b = 0; b < kw; ++b)
        dst[a * kw + b] = src[(kh - 1 - a) * kw + (kw - 1 - b)];
  }
  return make_var(std::move(out),
                  {{k.node(), [](const Var& g) { return flip_hw(g); }}});
}

Var swap01(const Var& x) {
  check_ndim("swap01", x, 4);
  const auto& s = x.shape();
  const std::size_t d0 = s[0], d1 = s[1], rest = s[2] * s[3];
  Tensor out({s[1], s[0], s[2], s[3]});
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < d0; ++i)
    for (std::size_t j = 0; j < d1; ++j) {
      const double* src = xv.data() + (i * d1 + j) * rest;
      double* dst = out.data() + (j * d0 + i) * rest;
      for (std::size_t r = 0; r < rest; ++r) dst[r] = src[r];
    }
  return make_var(std::move(out),
                  {{x.node(), [](const Var& g) { return swap01(g); }}});
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

namespace {

void check_pool_shape(const char* op, const Var& x) {
  check_ndim(op, x, 4);
  const auto& s = x.shape();
  if (s[2] % 2 != 0 || s[3] % 2 != 0)
    throw ShapeError(std::string(op) + ": spatial dims must be even, got " +
                     Tensor::shape_string(s));
}

}  // namespace

Var sumpool2(const Var& x) {
  check_pool_shape("sumpool2", x);
  const auto& s = x.shape();
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out({s[0], s[1], ho, wo});
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        const double* q = src + 2 * i * w + 2 * j;
        dst[i * wo + j] = q[0] + q[1] + q[w] + q[w + 1];
      }
  }
  return make_var(std::move(out),
                  {{x.node(), [](const Var& g) { return upsample2(g); }}});
}

Var upsample2(const Var& x) {
  check_ndim("upsample2", x, 4);
  const auto& s = x.shape();
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  Tensor out({s[0], s[1], 2 * h, 2 * w});
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * 4 * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = src[i * w + j];
        double* q = dst + 2 * i * 2 * w + 2 * j;
        q[0] = v;
        q[1] = v;
        q[2 * w] = v;
        q[2 * w + 1] = v;
      }
  }
  return make_var(std::move(out),
                  {{x.node(), [](const Var& g) { return sumpool2(g); }}});
}

Var meanpool2(const Var& x) { return scale(sumpool2(x), 0.25); }

namespace {

Var gather_pool(const Var& h, std::shared_ptr<std::vector<std::size_t>> idx,
                std::vector<std::size_t> out_shape);

Var scatter_pool(const Var& g, std::shared_ptr<std::vector<std::size_t>> idx,
                 std::vector<std::size_t> in_shape) {
  check_defined("scatter_pool", g);
  if (g.numel() != idx->size())
    throw ShapeError("scatter_pool: index count mismatch");
  Tensor out(in_shape);
  const Tensor& gv = g.value();
  for (std::size_t e = 0; e < idx->size(); ++e) out[(*idx)[e]] += gv[e];
  std::vector<std::size_t> gshape = g.shape();
  return make_var(std::move(out), {{g.node(), [idx, gshape](const Var& h) {
                                      return gather_pool(h, idx, gshape);
                                    }}});
}

Var gather_pool(const Var& h, std::shared_ptr<std::vector<std::size_t>> idx,
                std::vector<std::size_t> out_shape) {
  check_defined("gather_pool", h);
  Tensor out(out_shape);
  const Tensor& hv = h.value();
  for (std::size_t e = 0; e < idx->size(); ++e) out[e] = hv[(*idx)[e]];
  std::vector<std::size_t> hshape = h.shape();
  return make_var(std::move(out), {{h.node(), [idx, hshape](const Var& g) {
                                      return scatter_pool(g, idx, hshape);
                                    }}});
}

}  // namespace

Var maxpool2(const Var& x) {
  check_pool_shape("maxpool2", x);
  const auto& s = x.shape();
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out({s[0], s[1], ho, wo});
  auto idx = std::make_shared<std::vector<std::size_t>>(out.numel());
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    std::size_t* id = idx->data() + p * ho * wo;
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        const std::size_t base = 2 * i * w + 2 * j;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t c = 1; c < 4; ++c)
          if (src[cand[c]] > src[best]) best = cand[c];
        dst[i * wo + j] = src[best];
        id[i * wo + j] = p * h * w + best;
      }
  }
  std::vector<std::size_t> in_shape = s;
  return make_var(std::move(out), {{x.node(), [idx, in_shape](const Var& g) {
                                      return scatter_pool(g, idx, in_shape);
                                    }}});
}

// ---------------------------------------------------------------------------
// Shape and indexing
// ---------------------------------------------------------------------------

Var reshape(const Var& x, std::vector<std::size_t> shape) {
  check_defined("reshape", x);
  Tensor out = x.value().reshaped(shape);
  std::vector<std::size_t> orig = x.shape();
  return make_var(std::move(out), {{x.node(), [orig](const Var& g) {
                                      return reshape(g, orig);
                                    }}});
}

Var gather_labels(const Var& x, std::vector<std::size_t> labels) {
  check_ndim("gather_labels", x, 2);
  const std::size_t n = x.shape()[0], k = x.shape()[1];
  if (labels.size() != n)
    throw ShapeError("gather_labels: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  auto lab = std::make_shared<std::vector<std::size_t>>(std::move(labels));
  Tensor out({n});
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < n; ++i) {
    if ((*lab)[i] >= k)
      throw ShapeError("gather_labels: label " + std::to_string((*lab)[i]) +
                       " out of range for " + std::to_string(k) + " classes");
    out[i] = xv[i * k + (*lab)[i]];
  }
  return make_var(std::move(out), {{x.node(), [lab, k](const Var& g) {
                                      return scatter_labels(g, *lab, k);
                                    }}});
}

Var scatter_labels(const Var& v, std::vector<std::size_t> labels, std::size_t k) {
  check_ndim("scatter_labels", v, 1);
  const std::size_t n = v.shape()[0];
  if (labels.size() != n)
    throw ShapeError("scatter_labels: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " values");
  auto lab = std::make_shared<std::vector<std::size_t>>(std::move(labels));
  Tensor out({n, k});
  const Tensor& vv = v.value();
  for (std::size_t i = 0; i < n; ++i) {
    if ((*lab)[i] >= k)
      throw ShapeError("scatter_labels: label out of range");
    out[i * k + (*lab)[i]] = vv[i];
  }
  return make_var(std::move(out), {{v.node(), [lab](const Var& g) {
                                      return gather_labels(g, *lab);
                                    }}});
}

Var gather_rows(const Var& x, std::vector<std::size_t> indices) {
  check_defined("gather_rows", x);
  if (x.shape().empty()) throw ShapeError("gather_rows: rank-0 input");
  const std::size_t n = x.shape()[0];
  const std::size_t row = x.numel() / (n == 0 ? 1 : n);
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  std::vector<std::size_t> out_shape = x.shape();
  out_shape[0] = idx->size();
  Tensor out(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < idx->size(); ++i) {
    if ((*idx)[i] >= n)
      throw ShapeError("gather_rows: index " + std::to_string((*idx)[i]) +
                       " out of range for " + std::to_string(n) + " rows");
    const double* src = xv.data() + (*idx)[i] * row;
    double* dst = out.data() + i * row;
    for (std::size_t r = 0; r < row; ++r) dst[r] = src[r];
  }
  return make_var(std::move(out), {{x.node(), [idx, n](const Var& g) {
                                      return scatter_rows(g, *idx, n);
                                    }}});
}

Var scatter_rows(const Var& v, std::vector<std::size_t> indices, std::size_t n) {
  check_defined("scatter_rows", v);
  if (v.shape().empty()) throw ShapeError("scatter_rows: rank-0 input");
  const std::size_t m = v.shape()[0];
  if (indices.size() != m)
    throw ShapeError("scatter_rows: " + std::to_string(indices.size()) +
                     " indices for " + std::to_string(m) + " rows");
  const std::size_t row = v.numel() / (m == 0 ? 1 : m);
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  std::vector<std::size_t> out_shape = v.shape();
  out_shape[0] = n;
  Tensor out(out_shape);
  const Tensor& vv = v.value();
  for (std::size_t i = 0; i < m; ++i) {
    if ((*idx)[i] >= n) throw ShapeError("scatter_rows: index out of range");
    const double* src = vv.data() + i * row;
    double* dst = out.data() + (*idx)[i] * row;
    for (std::size_t r = 0; r < row; ++r) dst[r] += src[r];
  }
  return make_var(std::move(out), {{v.node(), [idx](const Var& g) {
                                      return gather_rows(g, *idx);
                                    }}});
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::size_t total = 0;
  for (const Var& p : parts) {
    check_defined("concat", p);
    total += p.numel();
  }
  Tensor out({total});
  std::vector<Edge> edges;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t len = pv.numel();
    for (std::size_t i = 0; i < len; ++i) out[off + i] = pv[i];
    std::vector<std::size_t> pshape = p.shape();
    const std::size_t o = off;
    edges.push_back({p.node(), [o, len, pshape](const Var& g) {
                       return reshape(slice1d(g, o, len), pshape);
                     }});
    off += len;
  }
  return make_var(std::move(out), std::move(edges));
}

Var slice1d(const Var& x, std::size_t offset, std::size_t len) {
  check_ndim("slice1d", x, 1);
  const std::size_t n = x.shape()[0];
  if (offset + len > n)
    throw ShapeError("slice1d: [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") out of range for " +
                     std::to_string(n));
  Tensor out({len});
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < len; ++i) out[i] = xv[offset + i];
  return make_var(std::move(out), {{x.node(), [offset, n](const Var& g) {
                                      return embed1d(g, offset, n);
                                    }}});
}

Var embed1d(const Var& v, std::size_t offset, std::size_t len) {
  check_ndim("embed1d", v, 1);
  const std::size_t m = v.shape()[0];
  if (offset + m > len)
    throw ShapeError("embed1d: slice does not fit target length");
  Tensor out({len});
  const Tensor& vv = v.value();
  for (std::size_t i = 0; i < m; ++i) out[offset + i] = vv[i];
  return make_var(std::move(out), {{v.node(), [offset, m](const Var& g) {
                                      return slice1d(g, offset, m);
                                    }}});
}

// ---------------------------------------------------------------------------
// Forward differences
// ---------------------------------------------------------------------------

namespace {

Var shift_diff_h_adj(const Var& g);
Var shift_diff_w_adj(const Var& g);

}  // namespace

Var shift_diff_h(const Var& x) {
  check_ndim("shift_diff_h", x, 4);
  const auto& s = x.shape();
  if (s[2] < 2) throw ShapeError("shift_diff_h: height must be at least 2");
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  Tensor out({s[0], s[1], h - 1, w});
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * (h - 1) * w;
    for (std::size_t i = 0; i + 1 < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        dst[i * w + j] = src[(i + 1) * w + j] - src[i * w + j];
  }
  return make_var(std::move(out),
                  {{x.node(), [](const Var& g) { return shift_diff_h_adj(g); }}});
}

Var shift_diff_w(const Var& x) {
  check_ndim("shift_diff_w", x, 4);
  const auto& s = x.shape();
  if (s[3] < 2) throw ShapeError("shift_diff_w: width must be at least 2");
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  Tensor out({s[0], s[1], h, w - 1});
  const Tensor& xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * h * (w - 1);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j + 1 < w; ++j)
        dst[i * (w - 1) + j] = src[i * w + j + 1] - src[i * w + j];
  }
  return make_var(std::move(out),
                  {{x.node(), [](const Var& g) { return shift_diff_w_adj(g); }}});
}

namespace {

Var shift_diff_h_adj(const Var& g) {
  check_ndim("shift_diff_h_adj", g, 4);
  const auto& s = g.shape();
  const std::size_t nc = s[0] * s[1], hm = s[2], w = s[3];
  const std::size_t h = hm + 1;
  Tensor out({s[0], s[1], h, w});
  const Tensor& gv = g.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const double* src = gv.data() + p * hm * w;
    double* dst = out.data() + p * h * w;
    for (std::size_t i = 0; i < hm; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        dst[(i + 1) * w + j] += src[i * w + j];
        dst[i * w + j] -= src[i * w + j];
      }
  }
  return make_var(std::move(out),
                  {{g.node(), [](const Var& h2) { return shift_diff_h(h2); }}});
}

Var shift_diff_w_adj(const Var& g) {
  check_ndim("shift_diff_w_adj", g, 4);
  const auto& s = g.shape();
  const std::size_t nc = s[0] * s[1], h = s[2], wm = s[3];
  const std::size_t w = wm + 1;
  Tensor out({s[0], s[1], h, w});
  const Tensor& gv = g.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const double* src = gv.data() + p * h * wm;
    double* dst = out.data() + p * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < wm; ++j) {
        dst[i * w + j + 1] += src[i * wm + j];
        dst[i * w + j] -= src[i * wm + j];
      }
  }
  return make_var(std::move(out),
                  {{g.node(), [](const Var& h2) { return shift_diff_w(h2); }}});
}

}  // namespace

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace {

// Adjoints for every requires-grad node reachable from `output`, keyed by
// node pointer. Computed in decreasing node-id order, which is a topological
// order because parents are created before children.
std::unordered_map<Node*, Var> run_backward(const Var& output, bool create_graph) {
  check_defined("grad", output);
  if (output.numel() != 1)
    throw ShapeError("grad: output must be scalar, got " +
                     Tensor::shape_string(output.shape()));

  std::unordered_map<Node*, Var> adjoint;
  if (!output.requires_grad()) return adjoint;

  std::vector<Node*> order;
  {
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{output.node().get()};
    seen.insert(output.node().get());
    while (!stack.empty()) {
      Node* n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (const Edge& e : n->edges) {
        Node* p = e.parent.get();
        if (seen.insert(p).second) stack.push_back(p);
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  adjoint.emplace(output.node().get(),
                  Var(Tensor::full(output.shape(), 1.0), false));
  for (Node* n : order) {
    auto it = adjoint.find(n);
    if (it == adjoint.end()) continue;
    const Var gn = it->second;
    for (const Edge& e : n->edges) {
      Var contrib = e.vjp(gn);
      if (contrib.shape() != e.parent->value.shape())
        throw ShapeError("grad: vjp produced " + Tensor::shape_string(contrib.shape()) +
                         " for parent " + Tensor::shape_string(e.parent->value.shape()));
      auto pit = adjoint.find(e.parent.get());
      if (pit == adjoint.end())
        adjoint.emplace(e.parent.get(), std::move(contrib));
      else
        pit->second = add(pit->second, contrib);
    }
  }
  return adjoint;
}

}  // namespace

std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs,
                      bool create_graph) {
  auto adjoint = run_backward(output, create_graph);
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_defined("grad", in);
    auto it = adjoint.find(in.node().get());
    if (it != adjoint.end())
      out.push_back(it->second);
    else
      out.push_back(Var(Tensor::zeros(in.shape()), false));
  }
  return out;
}

void backward(const Var& output) {
  auto adjoint = run_backward(output, false);
  for (auto& [node, adj] : adjoint) {
    if (!node->requires_grad || !node->edges.empty()) continue;
    if (!node->grad_accum)
      node->grad_accum = std::make_unique<Tensor>(Tensor::zeros(node->value.shape()));
    Tensor& g = *node->grad_accum;
    const Tensor& a = adj.value();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += a[i];
  }
}

// ---------------------------------------------------------------------------
// Composites
// ---------------------------------------------------------------------------

Var one_minus(const Var& s) {
  check_defined("one_minus", s);
  return addc(scale(s, -1.0), Tensor::ones(s.shape()));
}

Var l2norm(const Var& x) {
  check_defined("l2norm", x);
  return vpow(inner(x, x), 0.5);
}

Var cosine_sim(const Var& u, const Var& v) {
  check_same_shape("cosine_sim", u, v);
  const double nu = norm_values(u.value());
  const double nv = norm_values(v.value());
  if (nu == 0.0 || nv == 0.0)
    throw DegenerateUpdateError("cosine similarity undefined for a zero-norm vector");
  return mul(inner(u, v), vpow(mul(l2norm(u), l2norm(v)), -1.0));
}

Var cosine_loss(const Var& u, const Var& v) { return one_minus(cosine_sim(u, v)); }

Var log_softmax(const Var& x) {
  check_ndim("log_softmax", x, 2);
  const std::size_t n = x.shape()[0], k = x.shape()[1];
  // Detached per-row max keeps exp() in range without changing the gradient.
  Tensor shift({n, k});
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < n; ++i) {
    double m = xv[i * k];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, xv[i * k + j]);
    for (std::size_t j = 0; j < k; ++j) shift[i * k + j] = -m;
  }
  Var z = addc(x, shift);
  Var lse = bcast_cols(vlog(rowsum(vexp(z))), k);
  return sub(z, lse);
}

Var cross_entropy_mean(const Var& logits, const std::vector<std::size_t>& labels) {
  check_ndim("cross_entropy_mean", logits, 2);
  const std::size_t n = logits.shape()[0];
  if (labels.size() != n)
    throw ShapeError("cross_entropy_mean: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  Var picked = gather_labels(log_softmax(logits), labels);
  return scale(sum(picked), -1.0 / static_cast<double>(n));
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double eps) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace fedinv
