#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "zss/blas.hpp"
#include "zss/common.hpp"
#include "zss/parallel.hpp"
#include "zss/rng.hpp"

namespace zss {

template <class S>
class Tensor;

/// Ordered (name, tensor) pairs; the unit of optimizer state and checkpoints.
template <class S>
using NamedParams = std::vector<std::pair<std::string, Tensor<S>>>;

namespace detail {

template <class S>
struct Node {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // allocated on first use, same length as data
  bool requires_grad = false;
  bool leaf = true;
  std::vector<Tensor<S>> parents;
  std::function<void(Node<S>&)> backprop;
  int mark = 0;

  Index numel() const { return static_cast<Index>(data.size()); }

  S* ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), S(0));
    return grad.data();
  }
};

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  Shape out(std::max(a.size(), b.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Index da = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
    Index db = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
    if (da != db && da != 1 && db != 1)
      fail(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
           " are not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

// Element strides for iterating `shape` as if broadcast to `out`; 0 stride on
// broadcast axes.
inline std::vector<Index> broadcast_strides(const Shape& shape, const Shape& out) {
  std::vector<Index> st(out.size(), 0);
  Index stride = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    std::size_t oi = out.size() - shape.size() + i;
    st[oi] = (shape[i] == 1 && out[oi] != 1) ? 0 : stride;
    stride *= shape[i];
  }
  return st;
}

// Sums `src` (shaped `from`) down to shape `to` (reversing a broadcast) and
// adds into `dst`.
template <class S>
void reduce_into(const S* src, const Shape& from, S* dst, const Shape& to) {
  Index n_from = shape_numel(from);
  if (from == to) {
    for (Index i = 0; i < n_from; ++i) dst[i] += src[i];
    return;
  }
  auto st = broadcast_strides(to, from);
  std::vector<Index> idx(from.size(), 0);
  Index off = 0;
  for (Index i = 0; i < n_from; ++i) {
    dst[off] += src[i];
    for (int d = static_cast<int>(from.size()) - 1; d >= 0; --d) {
      off += st[d];
      if (++idx[d] < from[d]) break;
      idx[d] = 0;
      off -= st[d] * from[d];
    }
  }
}

template <class S>
void check_finite(const Tensor<S>& t, const char* op);

}  // namespace detail

// Dense n-dimensional tensor with optional participation in a dynamic
// reverse-mode tape. Handle semantics: copies share the underlying node.
template <class S>
class Tensor {
 public:
  Tensor() : n_(std::make_shared<detail::Node<S>>()) {}

  static Tensor zeros(Shape shape) { return filled(std::move(shape), S(0)); }

  static Tensor full(Shape shape, S v) { return filled(std::move(shape), v); }

  static Tensor scalar(S v) {
    Tensor t;
    t.n_->shape = {};
    t.n_->data = {v};
    return t;
  }

  static Tensor from_vector(Shape shape, std::vector<S> values) {
    check(shape_numel(shape) == static_cast<Index>(values.size()),
          "from_vector: shape " + shape_str(shape) + " does not match " +
              std::to_string(values.size()) + " values");
    Tensor t;
    t.n_->shape = std::move(shape);
    t.n_->data = std::move(values);
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, double sigma = 1.0) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.n_->data) v = static_cast<S>(rng.normal() * sigma);
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.n_->data) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor trunc_normal(Shape shape, Rng& rng, double sigma) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.n_->data) v = static_cast<S>(rng.truncated_normal(sigma));
    return t;
  }

  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  Index dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  Index numel() const { return n_->numel(); }

  const std::vector<S>& data() const { return n_->data; }
  /// Direct mutation is only legal for leaves outside a live tape
  /// (parameter updates, buffer fills).
  std::vector<S>& mutable_data() { return n_->data; }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool rg = true) {
    n_->requires_grad = rg;
    return *this;
  }

  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<S>& grad() const { return n_->grad; }
  std::vector<S>& mutable_grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), S(0));
  }

  S item() const {
    check(numel() == 1, "item: tensor " + shape_str(shape()) + " is not a scalar");
    return n_->data[0];
  }

  S at(const std::vector<Index>& idx) const {
    Index off = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) off = off * n_->shape[d] + idx[d];
    return n_->data[static_cast<std::size_t>(off)];
  }

  /// Same data, detached from the tape.
  Tensor detach() const {
    Tensor t;
    t.n_->shape = n_->shape;
    t.n_->data = n_->data;
    return t;
  }

  detail::Node<S>* node() const { return n_.get(); }
  const std::shared_ptr<detail::Node<S>>& node_ptr() const { return n_; }

  static Tensor wrap(std::shared_ptr<detail::Node<S>> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  static Tensor filled(Shape shape, S v) {
    Tensor t;
    Index n = shape_numel(shape);
    check(n >= 0, "tensor shape " + shape_str(shape) + " has a negative dimension");
    for (Index d : shape) check(d >= 0, "tensor shape " + shape_str(shape) + " has a negative dimension");
    t.n_->shape = std::move(shape);
    t.n_->data.assign(static_cast<std::size_t>(n), v);
    return t;
  }

  std::shared_ptr<detail::Node<S>> n_;
};

namespace detail {

template <class S>
void check_finite(const Tensor<S>& t, const char* op) {
  if (!strict_finite_checks().load(std::memory_order_relaxed)) return;
  for (S v : t.data())
    if (!std::isfinite(static_cast<double>(v)))
      fail(std::string(op) + ": non-finite input value under strict mode");
}

template <class S>
Tensor<S> make_op(Shape shape, std::vector<S> data, std::vector<Tensor<S>> parents,
                  std::function<void(Node<S>&)> backprop) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->leaf = false;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Tensor<S>::wrap(std::move(n));
}

}  // namespace detail

/// Propagates d(loss)/d(node) to every reachable leaf with requires_grad.
/// The tape (parent links and closures) is released afterwards; leaf grads
/// accumulate across calls until zeroed.
template <class S>
void backward(const Tensor<S>& loss) {
  check(loss.numel() == 1,
        "backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order over the tape.
  std::vector<detail::Node<S>*> order;
  std::vector<std::pair<detail::Node<S>*, std::size_t>> stack;
  stack.push_back({loss.node(), 0});
  loss.node()->mark = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<S>* p = node->parents[next].node();
      ++next;
      if (p->mark == 0 && p->requires_grad) {
        p->mark = 1;
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<S>* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
  for (detail::Node<S>* node : order) {
    node->mark = 0;
    node->backprop = nullptr;
    node->parents.clear();
    if (!node->leaf) node->grad.clear();
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

// out = f(a, b) with numpy-style broadcasting; df_a/df_b receive (a, b, dy).
template <class S, class F>
Tensor<S> binary_op(const char* name, const Tensor<S>& a, const Tensor<S>& b, F f,
                    std::function<S(S, S)> df_a, std::function<S(S, S)> df_b) {
  check_finite(a, name);
  check_finite(b, name);
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  Index n = shape_numel(out_shape);
  std::vector<S> out(static_cast<std::size_t>(n));
  const S* pa = a.data().data();
  const S* pb = b.data().data();

  if (a.shape() == b.shape()) {
    for (Index i = 0; i < n; ++i) out[i] = f(pa[i], pb[i]);
  } else {
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<Index> idx(out_shape.size(), 0);
    Index oa = 0, ob = 0;
    for (Index i = 0; i < n; ++i) {
      out[i] = f(pa[oa], pb[ob]);
      for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
        oa += sa[d];
        ob += sb[d];
        if (++idx[d] < out_shape[d]) break;
        idx[d] = 0;
        oa -= sa[d] * out_shape[d];
        ob -= sb[d] * out_shape[d];
      }
    }
  }

  Tensor<S> av = a, bv = b;
  return make_op<S>(
      out_shape, std::move(out), {a, b},
      [av, bv, df_a, df_b, out_shape](Node<S>& self) {
        Index n = self.numel();
        const S* dy = self.grad.data();
        const S* pa = av.data().data();
        const S* pb = bv.data().data();
        auto sa = broadcast_strides(av.shape(), out_shape);
        auto sb = broadcast_strides(bv.shape(), out_shape);
        std::vector<S> ga, gb;
        if (av.requires_grad()) ga.resize(static_cast<std::size_t>(n));
        if (bv.requires_grad()) gb.resize(static_cast<std::size_t>(n));
        std::vector<Index> idx(out_shape.size(), 0);
        Index oa = 0, ob = 0;
        for (Index i = 0; i < n; ++i) {
          if (!ga.empty()) ga[i] = df_a(pa[oa], pb[ob]) * dy[i];
          if (!gb.empty()) gb[i] = df_b(pa[oa], pb[ob]) * dy[i];
          for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
            oa += sa[d];
            ob += sb[d];
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
          }
        }
        if (!ga.empty())
          reduce_into(ga.data(), out_shape, av.node()->ensure_grad(), av.shape());
        if (!gb.empty())
          reduce_into(gb.data(), out_shape, bv.node()->ensure_grad(), bv.shape());
      });
}

// out = f(x); df receives (x, y, dy) -> dx.
template <class S, class F, class DF>
Tensor<S> unary_op(const char* name, const Tensor<S>& x, F f, DF df) {
  check_finite(x, name);
  Index n = x.numel();
  std::vector<S> out(static_cast<std::size_t>(n));
  const S* px = x.data().data();
  for (Index i = 0; i < n; ++i) out[i] = f(px[i]);
  Tensor<S> xv = x;
  return make_op<S>(
      x.shape(), std::move(out), {x}, [xv, df](Node<S>& self) {
        Index n = self.numel();
        const S* dy = self.grad.data();
        const S* px = xv.data().data();
        const S* py = self.data.data();
        S* gx = xv.node()->ensure_grad();
        for (Index i = 0; i < n; ++i) gx[i] += df(px[i], py[i]) * dy[i];
      });
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
      [](S, S) { return S(1); });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op<S>(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
      [](S, S) { return S(-1); });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op<S>(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
      [](S x, S) { return x; });
}

template <class S>
Tensor<S> mul_scalar(const Tensor<S>& x, S c) {
  return detail::unary_op(
      "mul_scalar", x, [c](S v) { return v * c; }, [c](S, S) { return c; });
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  return detail::unary_op(
      "add_scalar", x, [c](S v) { return v + c; }, [](S, S) { return S(1); });
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  return detail::unary_op(
      "relu", x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <class S>
Tensor<S> gelu(const Tensor<S>& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return detail::unary_op(
      "gelu", x,
      [](S v) {
        double d = static_cast<double>(v);
        return static_cast<S>(0.5 * d * (1.0 + std::erf(d * inv_sqrt2)));
      },
      [](S v, S) {
        double d = static_cast<double>(v);
        double cdf = 0.5 * (1.0 + std::erf(d * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * d * d);
        return static_cast<S>(cdf + d * pdf);
      });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return detail::unary_op(
      "sigmoid", x,
      [](S v) {
        double d = static_cast<double>(v);
        return static_cast<S>(d >= 0 ? 1.0 / (1.0 + std::exp(-d))
                                     : std::exp(d) / (1.0 + std::exp(d)));
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Tensor<S> abs_val(const Tensor<S>& x) {
  return detail::unary_op(
      "abs", x, [](S v) { return v < S(0) ? -v : v; },
      [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  // One dimension may be -1 (inferred).
  Index known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      check(infer < 0, "reshape: more than one inferred dimension in " + shape_str(shape));
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    check(known != 0 && x.numel() % known == 0,
          "reshape: cannot infer dimension for " + shape_str(x.shape()) + " -> " +
              shape_str(shape));
    shape[infer] = x.numel() / known;
  }
  check(shape_numel(shape) == x.numel(), "reshape: " + shape_str(x.shape()) +
                                             " cannot be reshaped to " + shape_str(shape));
  Shape in_shape = x.shape();
  Tensor<S> xv = x;
  return detail::make_op<S>(std::move(shape), std::vector<S>(x.data()), {x},
                            [xv](detail::Node<S>& self) {
                              S* gx = xv.node()->ensure_grad();
                              const S* dy = self.grad.data();
                              for (Index i = 0; i < self.numel(); ++i) gx[i] += dy[i];
                            });
}

namespace detail {

inline std::vector<Index> contiguous_strides(const Shape& s) {
  std::vector<Index> st(s.size());
  Index acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Copy with axes permuted; used by both permute directions.
template <class S>
void permute_copy(const S* src, const Shape& in_shape, const std::vector<int>& perm, S* dst,
                  bool accumulate) {
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  auto in_st = contiguous_strides(in_shape);
  std::vector<Index> src_stride(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) src_stride[i] = in_st[perm[i]];

  Index n = shape_numel(out_shape);
  if (n == 0) return;
  // Fast path: innermost axis preserved -> copy contiguous runs.
  std::size_t last = perm.size() - 1;
  bool inner_contig = perm[last] == static_cast<int>(last);
  Index run = inner_contig ? out_shape[last] : 1;
  std::vector<Index> idx(perm.size(), 0);
  Index src_off = 0;
  for (Index i = 0; i < n; i += run) {
    if (accumulate) {
      for (Index j = 0; j < run; ++j) dst[i + j] += src[src_off + j];
    } else {
      if (inner_contig) {
        std::memcpy(dst + i, src + src_off, static_cast<std::size_t>(run) * sizeof(S));
      } else {
        dst[i] = src[src_off];
      }
    }
    int start = inner_contig ? static_cast<int>(last) - 1 : static_cast<int>(last);
    for (int d = start; d >= 0; --d) {
      src_off += src_stride[d];
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
      src_off -= src_stride[d] * out_shape[d];
    }
  }
}

}  // namespace detail

template <class S>
Tensor<S> permute(const Tensor<S>& x, std::vector<int> perm) {
  check(perm.size() == static_cast<std::size_t>(x.rank()),
        "permute: permutation size " + std::to_string(perm.size()) + " != rank of " +
            shape_str(x.shape()));
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    check(p >= 0 && p < x.rank() && !seen[p], "permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.shape()[perm[i]];
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  detail::permute_copy(x.data().data(), x.shape(), perm, out.data(), false);

  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  Tensor<S> xv = x;
  Shape grad_shape = out_shape;
  return detail::make_op<S>(std::move(out_shape), std::move(out), {x},
                            [xv, inv, grad_shape](detail::Node<S>& self) {
                              detail::permute_copy(self.grad.data(), grad_shape, inv,
                                                   xv.node()->ensure_grad(), true);
                            });
}

/// 2-D transpose convenience.
template <class S>
Tensor<S> transpose(const Tensor<S>& x) {
  check(x.rank() == 2, "transpose: expected rank-2 tensor, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

template <class S>
Tensor<S> slice(const Tensor<S>& x, const std::vector<Index>& starts,
                const std::vector<Index>& sizes) {
  check(starts.size() == static_cast<std::size_t>(x.rank()) && sizes.size() == starts.size(),
        "slice: starts/sizes rank mismatch for " + shape_str(x.shape()));
  for (int d = 0; d < x.rank(); ++d)
    check(starts[d] >= 0 && sizes[d] >= 0 && starts[d] + sizes[d] <= x.dim(d),
          "slice: window out of range on axis " + std::to_string(d) + " for " +
              shape_str(x.shape()));
  Shape out_shape(sizes.begin(), sizes.end());
  Index n = shape_numel(out_shape);
  std::vector<S> out(static_cast<std::size_t>(n));
  auto in_st = detail::contiguous_strides(x.shape());
  const S* src = x.data().data();

  Index inner = out_shape.empty() ? 1 : out_shape.back();
  std::vector<Index> idx(out_shape.size(), 0);
  Index base = 0;
  for (std::size_t d = 0; d < starts.size(); ++d) base += starts[d] * in_st[d];
  Index src_off = base;
  for (Index i = 0; i < n; i += inner) {
    std::memcpy(out.data() + i, src + src_off, static_cast<std::size_t>(inner) * sizeof(S));
    for (int d = static_cast<int>(out_shape.size()) - 2; d >= 0; --d) {
      src_off += in_st[d];
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
      src_off -= in_st[d] * out_shape[d];
    }
  }

  Tensor<S> xv = x;
  std::vector<Index> starts_c = starts;
  Shape out_shape_c = out_shape;
  return detail::make_op<S>(
      std::move(out_shape), std::move(out), {x},
      [xv, starts_c, out_shape_c](detail::Node<S>& self) {
        S* gx = xv.node()->ensure_grad();
        auto in_st = detail::contiguous_strides(xv.shape());
        Index n = self.numel();
        Index inner = out_shape_c.empty() ? 1 : out_shape_c.back();
        std::vector<Index> idx(out_shape_c.size(), 0);
        Index base = 0;
        for (std::size_t d = 0; d < starts_c.size(); ++d) base += starts_c[d] * in_st[d];
        Index off = base;
        const S* dy = self.grad.data();
        for (Index i = 0; i < n; i += inner) {
          for (Index j = 0; j < inner; ++j) gx[off + j] += dy[i + j];
          for (int d = static_cast<int>(out_shape_c.size()) - 2; d >= 0; --d) {
            off += in_st[d];
            if (++idx[d] < out_shape_c[d]) break;
            idx[d] = 0;
            off -= in_st[d] * out_shape_c[d];
          }
        }
      });
}

/// Zero padding, lo/hi entries per axis.
template <class S>
Tensor<S> pad(const Tensor<S>& x, const std::vector<Index>& lo, const std::vector<Index>& hi) {
  check(lo.size() == static_cast<std::size_t>(x.rank()) && hi.size() == lo.size(),
        "pad: lo/hi rank mismatch for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  for (int d = 0; d < x.rank(); ++d) {
    check(lo[d] >= 0 && hi[d] >= 0, "pad: negative padding");
    out_shape[d] += lo[d] + hi[d];
  }
  Index n = shape_numel(out_shape);
  std::vector<S> out(static_cast<std::size_t>(n), S(0));
  auto out_st = detail::contiguous_strides(out_shape);
  const Shape& in_shape = x.shape();
  const S* src = x.data().data();
  Index in_n = x.numel();
  Index inner = in_shape.empty() ? 1 : in_shape.back();
  std::vector<Index> idx(in_shape.size(), 0);
  Index base = 0;
  for (std::size_t d = 0; d < lo.size(); ++d) base += lo[d] * out_st[d];
  Index off = base;
  for (Index i = 0; i < in_n; i += inner) {
    std::memcpy(out.data() + off, src + i, static_cast<std::size_t>(inner) * sizeof(S));
    for (int d = static_cast<int>(in_shape.size()) - 2; d >= 0; --d) {
      off += out_st[d];
      if (++idx[d] < in_shape[d]) break;
      idx[d] = 0;
      off -= out_st[d] * in_shape[d];
    }
  }

  Tensor<S> xv = x;
  std::vector<Index> lo_c = lo;
  return detail::make_op<S>(
      std::move(out_shape), std::move(out), {x}, [xv, lo_c](detail::Node<S>& self) {
        S* gx = xv.node()->ensure_grad();
        const Shape& in_shape = xv.shape();
        auto out_st = detail::contiguous_strides(self.shape);
        Index in_n = xv.numel();
        Index inner = in_shape.empty() ? 1 : in_shape.back();
        std::vector<Index> idx(in_shape.size(), 0);
        Index base = 0;
        for (std::size_t d = 0; d < lo_c.size(); ++d) base += lo_c[d] * out_st[d];
        Index off = base;
        const S* dy = self.grad.data();
        for (Index i = 0; i < in_n; i += inner) {
          for (Index j = 0; j < inner; ++j) gx[i + j] += dy[off + j];
          for (int d = static_cast<int>(in_shape.size()) - 2; d >= 0; --d) {
            off += out_st[d];
            if (++idx[d] < in_shape[d]) break;
            idx[d] = 0;
            off -= out_st[d] * in_shape[d];
          }
        }
      });
}

template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs, int axis) {
  check(!xs.empty(), "concat: empty input list");
  const Shape& s0 = xs[0].shape();
  check(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: axis out of range");
  Shape out_shape = s0;
  Index axis_total = 0;
  for (const auto& x : xs) {
    check(x.rank() == static_cast<int>(s0.size()), "concat: rank mismatch");
    for (int d = 0; d < x.rank(); ++d)
      if (d != axis)
        check(x.dim(d) == s0[d], "concat: shape " + shape_str(x.shape()) +
                                     " mismatches " + shape_str(s0) + " on axis " +
                                     std::to_string(d));
    axis_total += x.dim(axis);
  }
  out_shape[axis] = axis_total;

  Index outer = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  Index inner = 1;
  for (int d = axis + 1; d < static_cast<int>(s0.size()); ++d) inner *= s0[d];

  Index n = shape_numel(out_shape);
  std::vector<S> out(static_cast<std::size_t>(n));
  Index row = axis_total * inner;
  Index col_off = 0;
  for (const auto& x : xs) {
    Index len = x.dim(axis) * inner;
    const S* src = x.data().data();
    for (Index o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * row + col_off, src + o * len,
                  static_cast<std::size_t>(len) * sizeof(S));
    col_off += len;
  }

  std::vector<Tensor<S>> parents = xs;
  return detail::make_op<S>(
      std::move(out_shape), std::move(out), xs,
      [parents, axis, outer, inner, row](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        Index col_off = 0;
        for (const auto& x : parents) {
          Index len = x.dim(axis) * inner;
          if (x.requires_grad()) {
            S* gx = x.node()->ensure_grad();
            for (Index o = 0; o < outer; ++o)
              for (Index j = 0; j < len; ++j) gx[o * len + j] += dy[o * row + col_off + j];
          }
          col_off += len;
        }
      });
}

/// Cyclic roll along two axes of a rank-4 tensor (window-shift support).
template <class S>
Tensor<S> roll2d(const Tensor<S>& x, Index shift_r, Index shift_c) {
  check(x.rank() == 4, "roll2d: expected rank-4 tensor, got " + shape_str(x.shape()));
  Index N = x.dim(0), R = x.dim(1), C = x.dim(2), D = x.dim(3);
  auto wrap = [](Index v, Index m) { return ((v % m) + m) % m; };
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  const S* src = x.data().data();
  for (Index n = 0; n < N; ++n)
    for (Index r = 0; r < R; ++r) {
      Index sr = wrap(r - shift_r, R);
      for (Index c = 0; c < C; ++c) {
        Index sc = wrap(c - shift_c, C);
        std::memcpy(out.data() + ((n * R + r) * C + c) * D,
                    src + ((n * R + sr) * C + sc) * D,
                    static_cast<std::size_t>(D) * sizeof(S));
      }
    }
  Tensor<S> xv = x;
  return detail::make_op<S>(
      x.shape(), std::move(out), {x}, [xv, shift_r, shift_c, wrap](detail::Node<S>& self) {
        Index N = xv.dim(0), R = xv.dim(1), C = xv.dim(2), D = xv.dim(3);
        S* gx = xv.node()->ensure_grad();
        const S* dy = self.grad.data();
        for (Index n = 0; n < N; ++n)
          for (Index r = 0; r < R; ++r) {
            Index sr = wrap(r - shift_r, R);
            for (Index c = 0; c < C; ++c) {
              Index sc = wrap(c - shift_c, C);
              const S* gsrc = dy + ((n * R + r) * C + c) * D;
              S* gdst = gx + ((n * R + sr) * C + sc) * D;
              for (Index d = 0; d < D; ++d) gdst[d] += gsrc[d];
            }
          }
      });
}

/// Rows of `table` gathered by constant `indices` (axis 0).
template <class S>
Tensor<S> index_select(const Tensor<S>& table, const std::vector<Index>& indices) {
  check(table.rank() >= 1, "index_select: table must have rank >= 1");
  Index rows = table.dim(0);
  Index inner = table.numel() / std::max<Index>(rows, 1);
  for (Index i : indices)
    check(i >= 0 && i < rows, "index_select: index " + std::to_string(i) +
                                  " out of range for " + shape_str(table.shape()));
  Shape out_shape = table.shape();
  out_shape[0] = static_cast<Index>(indices.size());
  std::vector<S> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const S* src = table.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::memcpy(out.data() + static_cast<Index>(i) * inner, src + indices[i] * inner,
                static_cast<std::size_t>(inner) * sizeof(S));
  Tensor<S> tv = table;
  std::vector<Index> idx = indices;
  return detail::make_op<S>(std::move(out_shape), std::move(out), {table},
                            [tv, idx, inner](detail::Node<S>& self) {
                              S* gt = tv.node()->ensure_grad();
                              const S* dy = self.grad.data();
                              for (std::size_t i = 0; i < idx.size(); ++i)
                                for (Index j = 0; j < inner; ++j)
                                  gt[idx[i] * inner + j] += dy[static_cast<Index>(i) * inner + j];
                            });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
Tensor<S> reduce_sum(const Tensor<S>& x, std::vector<int> axes, bool keepdim, bool is_mean) {
  if (axes.empty()) {
    for (int d = 0; d < x.rank(); ++d) axes.push_back(d);
  }
  std::vector<bool> red(static_cast<std::size_t>(x.rank()), false);
  for (int a : axes) {
    check(a >= 0 && a < x.rank(),
          "reduce: axis " + std::to_string(a) + " out of range for " + shape_str(x.shape()));
    red[static_cast<std::size_t>(a)] = true;
  }
  Shape out_shape;
  Index count = 1;
  for (int d = 0; d < x.rank(); ++d) {
    if (red[static_cast<std::size_t>(d)]) {
      count *= x.dim(d);
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(x.dim(d));
    }
  }
  Shape keep_shape(static_cast<std::size_t>(x.rank()));
  for (int d = 0; d < x.rank(); ++d)
    keep_shape[static_cast<std::size_t>(d)] = red[static_cast<std::size_t>(d)] ? 1 : x.dim(d);

  Index n = x.numel();
  std::vector<S> out(static_cast<std::size_t>(shape_numel(keep_shape)), S(0));
  auto ost = broadcast_strides(keep_shape, x.shape());
  std::vector<Index> idx(static_cast<std::size_t>(x.rank()), 0);
  Index off = 0;
  const S* px = x.data().data();
  for (Index i = 0; i < n; ++i) {
    out[off] += px[i];
    for (int d = x.rank() - 1; d >= 0; --d) {
      off += ost[d];
      if (++idx[d] < x.dim(d)) break;
      idx[d] = 0;
      off -= ost[d] * x.dim(d);
    }
  }
  S scale = is_mean ? S(1) / static_cast<S>(count) : S(1);
  if (is_mean)
    for (auto& v : out) v *= scale;

  Tensor<S> xv = x;
  return make_op<S>(std::move(out_shape), std::move(out), {x},
                    [xv, keep_shape, scale](Node<S>& self) {
                      S* gx = xv.node()->ensure_grad();
                      const S* dy = self.grad.data();
                      auto ost = broadcast_strides(keep_shape, xv.shape());
                      Index n = xv.numel();
                      std::vector<Index> idx(static_cast<std::size_t>(xv.rank()), 0);
                      Index off = 0;
                      for (Index i = 0; i < n; ++i) {
                        gx[i] += dy[off] * scale;
                        for (int d = xv.rank() - 1; d >= 0; --d) {
                          off += ost[d];
                          if (++idx[d] < xv.dim(d)) break;
                          idx[d] = 0;
                          off -= ost[d] * xv.dim(d);
                        }
                      }
                    });
}

}  // namespace detail

template <class S>
Tensor<S> sum(const Tensor<S>& x, std::vector<int> axes = {}, bool keepdim = false) {
  return detail::reduce_sum(x, std::move(axes), keepdim, false);
}

template <class S>
Tensor<S> mean(const Tensor<S>& x, std::vector<int> axes = {}, bool keepdim = false) {
  return detail::reduce_sum(x, std::move(axes), keepdim, true);
}

// ---------------------------------------------------------------------------
// Matrix multiply / linear
// ---------------------------------------------------------------------------

namespace detail {

// Batched row-major gemm helper; slices are disjoint so batch-parallel writes
// are race-free.
template <class S>
void batched_gemm(bool ta, bool tb, Index batch, Index m, Index n, Index k, const S* a,
                  Index a_stride, const S* b, Index b_stride, S* c, Index c_stride, S beta) {
  Index lda = ta ? m : k;
  Index ldb = tb ? k : n;
  if (batch == 1) {
    int nt = global_pool().size();
    if (!ta && m >= 2 * nt && static_cast<double>(m) * n * k > 65536.0) {
      global_pool().parallel_chunks(m, [&](int, Index lo, Index hi) {
        gemm(false, tb, hi - lo, n, k, S(1), a + lo * k, lda, b, ldb, beta, c + lo * n, n);
      });
    } else {
      gemm(ta, tb, m, n, k, S(1), a, lda, b, ldb, beta, c, n);
    }
    return;
  }
  global_pool().parallel_for(batch, [&](Index i) {
    gemm(ta, tb, m, n, k, S(1), a + i * a_stride, lda, b + i * b_stride, ldb, beta,
         c + i * c_stride, n);
  });
}

}  // namespace detail

/// Matrix product. Rank-2 x rank-2, or batched with identical leading dims,
/// or batched-A x rank-2 B.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_finite(a, "matmul");
  detail::check_finite(b, "matmul");
  check(a.rank() >= 2 && b.rank() >= 2,
        "matmul: need rank >= 2, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Index m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  Index kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  check(k == kb, "matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  bool b_shared = b.rank() == 2 && a.rank() > 2;
  if (!b_shared && a.rank() != b.rank())
    fail("matmul: rank mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape out_shape;
  Index batch = 1;
  for (int d = 0; d < a.rank() - 2; ++d) {
    if (!b_shared)
      check(a.dim(d) == b.dim(d), "matmul: batch dims disagree: " + shape_str(a.shape()) +
                                      " x " + shape_str(b.shape()));
    out_shape.push_back(a.dim(d));
    batch *= a.dim(d);
  }
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<S> out(static_cast<std::size_t>(batch * m * n));
  detail::batched_gemm<S>(false, false, batch, m, n, k, a.data().data(), m * k,
                          b.data().data(), b_shared ? 0 : k * n, out.data(), m * n, S(0));

  Tensor<S> av = a, bv = b;
  return detail::make_op<S>(
      std::move(out_shape), std::move(out), {a, b},
      [av, bv, batch, m, n, k, b_shared](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        if (av.requires_grad()) {
          // dA = dY * B^T
          S* ga = av.node()->ensure_grad();
          detail::batched_gemm<S>(false, true, batch, m, k, n, dy, m * n, bv.data().data(),
                                  b_shared ? 0 : k * n, ga, m * k, S(1));
        }
        if (bv.requires_grad()) {
          // dB = A^T * dY
          S* gb = bv.node()->ensure_grad();
          if (b_shared) {
            // Shared B accumulates over batch; keep the loop serial.
            for (Index i = 0; i < batch; ++i)
              gemm(true, false, k, n, m, S(1), av.data().data() + i * m * k, k,
                   dy + i * m * n, n, S(1), gb, n);
          } else if (batch == 1) {
            gemm(true, false, k, n, m, S(1), av.data().data(), k, dy, n, S(1), gb, n);
          } else {
            global_pool().parallel_for(batch, [&](Index i) {
              gemm(true, false, k, n, m, S(1), av.data().data() + i * m * k, k,
                   dy + i * m * n, n, S(1), gb + i * k * n, n);
            });
          }
        }
      });
}

/// x (.., in) * w^T (out, in) + bias (out).
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* bias = nullptr) {
  detail::check_finite(x, "linear");
  check(x.rank() >= 1 && w.rank() == 2,
        "linear: expects x rank >= 1 and w rank 2, got " + shape_str(x.shape()) + " and " +
            shape_str(w.shape()));
  Index in = x.dim(x.rank() - 1);
  check(in == w.dim(1), "linear: input features " + shape_str(x.shape()) +
                            " do not match weight " + shape_str(w.shape()));
  Index out_f = w.dim(0);
  Index rows = x.numel() / std::max<Index>(in, 1);
  if (bias)
    check(bias->rank() == 1 && bias->dim(0) == out_f,
          "linear: bias " + shape_str(bias->shape()) + " does not match weight " +
              shape_str(w.shape()));

  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<S> out(static_cast<std::size_t>(rows * out_f));
  // y = x * w^T
  detail::batched_gemm<S>(false, true, 1, rows, out_f, in, x.data().data(), 0,
                          w.data().data(), 0, out.data(), 0, S(0));
  if (bias) {
    const S* pb = bias->data().data();
    global_pool().parallel_chunks(rows, [&](int, Index lo, Index hi) {
      for (Index r = lo; r < hi; ++r) {
        S* row = out.data() + r * out_f;
        for (Index j = 0; j < out_f; ++j) row[j] += pb[j];
      }
    });
  }

  std::vector<Tensor<S>> parents = {x, w};
  if (bias) parents.push_back(*bias);
  Tensor<S> xv = x, wv = w;
  Tensor<S> bv = bias ? *bias : Tensor<S>();
  bool has_bias = bias != nullptr;
  return detail::make_op<S>(
      std::move(out_shape), std::move(out), std::move(parents),
      [xv, wv, bv, has_bias, rows, in, out_f](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        if (xv.requires_grad()) {
          // dX = dY * W
          S* gx = xv.node()->ensure_grad();
          detail::batched_gemm<S>(false, false, 1, rows, in, out_f, dy, 0, wv.data().data(),
                                  0, gx, 0, S(1));
        }
        if (wv.requires_grad()) {
          // dW = dY^T * X
          gemm(true, false, out_f, in, rows, S(1), dy, out_f, xv.data().data(), in, S(1),
               wv.node()->ensure_grad(), in);
        }
        if (has_bias && bv.requires_grad()) {
          S* gb = bv.node()->ensure_grad();
          for (Index r = 0; r < rows; ++r)
            for (Index j = 0; j < out_f; ++j) gb[j] += dy[r * out_f + j];
        }
      });
}

}  // namespace zss
