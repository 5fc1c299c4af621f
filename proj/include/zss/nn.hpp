#pragma once

#include "zss/tensor.hpp"

namespace zss {

namespace detail {

// x (C, H, W) -> col (C*kh*kw, Ho*Wo), zero-padded borders.
template <class S>
void im2col(const S* x, Index C, Index H, Index W, Index kh, Index kw, Index sh, Index sw,
            Index ph, Index pw, Index Ho, Index Wo, S* col) {
  for (Index c = 0; c < C; ++c)
    for (Index ki = 0; ki < kh; ++ki)
      for (Index kj = 0; kj < kw; ++kj) {
        S* dst = col + ((c * kh + ki) * kw + kj) * (Ho * Wo);
        for (Index oh = 0; oh < Ho; ++oh) {
          Index ih = oh * sh + ki - ph;
          if (ih < 0 || ih >= H) {
            std::fill(dst + oh * Wo, dst + (oh + 1) * Wo, S(0));
            continue;
          }
          const S* src_row = x + (c * H + ih) * W;
          for (Index ow = 0; ow < Wo; ++ow) {
            Index iw = ow * sw + kj - pw;
            dst[oh * Wo + ow] = (iw >= 0 && iw < W) ? src_row[iw] : S(0);
          }
        }
      }
}

// Adjoint of im2col: scatter-add col back into x.
template <class S>
void col2im(const S* col, Index C, Index H, Index W, Index kh, Index kw, Index sh, Index sw,
            Index ph, Index pw, Index Ho, Index Wo, S* x) {
  for (Index c = 0; c < C; ++c)
    for (Index ki = 0; ki < kh; ++ki)
      for (Index kj = 0; kj < kw; ++kj) {
        const S* src = col + ((c * kh + ki) * kw + kj) * (Ho * Wo);
        for (Index oh = 0; oh < Ho; ++oh) {
          Index ih = oh * sh + ki - ph;
          if (ih < 0 || ih >= H) continue;
          S* dst_row = x + (c * H + ih) * W;
          for (Index ow = 0; ow < Wo; ++ow) {
            Index iw = ow * sw + kj - pw;
            if (iw >= 0 && iw < W) dst_row[iw] += src[oh * Wo + ow];
          }
        }
      }
}

}  // namespace detail

/// x (N, C, H, W) conv w (O, C, kh, kw) + bias (O), stride / zero-padding.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* bias, Index sh,
                 Index sw, Index ph, Index pw) {
  detail::check_finite(x, "conv2d");
  detail::check_finite(w, "conv2d");
  check(x.rank() == 4 && w.rank() == 4,
        "conv2d: expects x (N,C,H,W) and w (O,C,kh,kw), got " + shape_str(x.shape()) +
            " and " + shape_str(w.shape()));
  Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Index O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == C, "conv2d: channel mismatch: x " + shape_str(x.shape()) + " vs w " +
                           shape_str(w.shape()));
  Index Ho = (H + 2 * ph - kh) / sh + 1;
  Index Wo = (W + 2 * pw - kw) / sw + 1;
  check(Ho >= 1 && Wo >= 1, "conv2d: kernel " + shape_str(w.shape()) +
                                " does not fit input " + shape_str(x.shape()));
  if (bias)
    check(bias->rank() == 1 && bias->dim(0) == O,
          "conv2d: bias " + shape_str(bias->shape()) + " does not match " +
              shape_str(w.shape()));

  Index ckk = C * kh * kw;
  Index hw = Ho * Wo;
  std::vector<S> out(static_cast<std::size_t>(N * O * hw));
  const S* pb = bias ? bias->data().data() : nullptr;
  global_pool().parallel_chunks(N, [&](int, Index lo, Index hi) {
    std::vector<S> col(static_cast<std::size_t>(ckk * hw));
    for (Index n = lo; n < hi; ++n) {
      detail::im2col(x.data().data() + n * C * H * W, C, H, W, kh, kw, sh, sw, ph, pw, Ho, Wo,
                     col.data());
      S* y = out.data() + n * O * hw;
      gemm(false, false, O, hw, ckk, S(1), w.data().data(), ckk, col.data(), hw, S(0), y, hw);
      if (pb)
        for (Index o = 0; o < O; ++o)
          for (Index i = 0; i < hw; ++i) y[o * hw + i] += pb[o];
    }
  });

  std::vector<Tensor<S>> parents = {x, w};
  if (bias) parents.push_back(*bias);
  Tensor<S> xv = x, wv = w;
  Tensor<S> bv = bias ? *bias : Tensor<S>();
  bool has_bias = bias != nullptr;
  return detail::make_op<S>(
      Shape{N, O, Ho, Wo}, std::move(out), std::move(parents),
      [=](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        Index ckk = C * kh * kw, hw = Ho * Wo;
        S* gx = xv.requires_grad() ? xv.node()->ensure_grad() : nullptr;
        int chunks = global_pool().chunk_count(N);
        std::vector<std::vector<S>> gw_parts;
        if (wv.requires_grad())
          gw_parts.assign(chunks, std::vector<S>(static_cast<std::size_t>(O * ckk), S(0)));
        global_pool().parallel_chunks(N, [&](int widx, Index lo, Index hi) {
          std::vector<S> col(static_cast<std::size_t>(ckk * hw));
          std::vector<S> dcol(gx ? static_cast<std::size_t>(ckk * hw) : 0);
          for (Index n = lo; n < hi; ++n) {
            const S* dyn = dy + n * O * hw;
            if (!gw_parts.empty()) {
              detail::im2col(xv.data().data() + n * C * H * W, C, H, W, kh, kw, sh, sw, ph,
                             pw, Ho, Wo, col.data());
              gemm(false, true, O, ckk, hw, S(1), dyn, hw, col.data(), hw, S(1),
                   gw_parts[widx].data(), ckk);
            }
            if (gx) {
              gemm(true, false, ckk, hw, O, S(1), wv.data().data(), ckk, dyn, hw, S(0),
                   dcol.data(), hw);
              detail::col2im(dcol.data(), C, H, W, kh, kw, sh, sw, ph, pw, Ho, Wo,
                             gx + n * C * H * W);
            }
          }
        });
        if (!gw_parts.empty()) {
          S* gw = wv.node()->ensure_grad();
          for (const auto& part : gw_parts)
            for (Index i = 0; i < O * ckk; ++i) gw[i] += part[i];
        }
        if (has_bias && bv.requires_grad()) {
          S* gb = bv.node()->ensure_grad();
          for (Index n = 0; n < N; ++n)
            for (Index o = 0; o < O; ++o) {
              S acc = S(0);
              const S* row = dy + (n * O + o) * hw;
              for (Index i = 0; i < hw; ++i) acc += row[i];
              gb[o] += acc;
            }
        }
      });
}

/// x (N, C, H, W) transposed-conv w (C, O, kh, kw) + bias, stride, no padding.
/// Output (N, O, (H-1)*sh+kh, (W-1)*sw+kw).
template <class S>
Tensor<S> conv_transpose2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* bias,
                           Index sh, Index sw) {
  detail::check_finite(x, "conv_transpose2d");
  check(x.rank() == 4 && w.rank() == 4,
        "conv_transpose2d: expects x (N,C,H,W) and w (C,O,kh,kw), got " +
            shape_str(x.shape()) + " and " + shape_str(w.shape()));
  Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Index O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(0) == C, "conv_transpose2d: channel mismatch: x " + shape_str(x.shape()) +
                           " vs w " + shape_str(w.shape()));
  Index Ho = (H - 1) * sh + kh;
  Index Wo = (W - 1) * sw + kw;
  if (bias)
    check(bias->rank() == 1 && bias->dim(0) == O, "conv_transpose2d: bias mismatch");

  Index okk = O * kh * kw;
  Index hw = H * W;
  std::vector<S> out(static_cast<std::size_t>(N * O * Ho * Wo), S(0));
  const S* pb = bias ? bias->data().data() : nullptr;
  global_pool().parallel_chunks(N, [&](int, Index lo, Index hi) {
    std::vector<S> col(static_cast<std::size_t>(okk * hw));
    for (Index n = lo; n < hi; ++n) {
      // col = w^T (okk, C) * x_n (C, hw)
      gemm(true, false, okk, hw, C, S(1), w.data().data(), okk, x.data().data() + n * C * hw,
           hw, S(0), col.data(), hw);
      S* y = out.data() + n * O * Ho * Wo;
      detail::col2im(col.data(), O, Ho, Wo, kh, kw, sh, sw, Index(0), Index(0), H, W, y);
      if (pb)
        for (Index o = 0; o < O; ++o)
          for (Index i = 0; i < Ho * Wo; ++i) y[o * Ho * Wo + i] += pb[o];
    }
  });

  std::vector<Tensor<S>> parents = {x, w};
  if (bias) parents.push_back(*bias);
  Tensor<S> xv = x, wv = w;
  Tensor<S> bv = bias ? *bias : Tensor<S>();
  bool has_bias = bias != nullptr;
  return detail::make_op<S>(
      Shape{N, O, Ho, Wo}, std::move(out), std::move(parents),
      [=](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        Index okk = O * kh * kw, hw = H * W, ohw = Ho * Wo;
        S* gx = xv.requires_grad() ? xv.node()->ensure_grad() : nullptr;
        int chunks = global_pool().chunk_count(N);
        std::vector<std::vector<S>> gw_parts;
        if (wv.requires_grad())
          gw_parts.assign(chunks, std::vector<S>(static_cast<std::size_t>(C * okk), S(0)));
        global_pool().parallel_chunks(N, [&](int widx, Index lo, Index hi) {
          std::vector<S> col(static_cast<std::size_t>(okk * hw));
          for (Index n = lo; n < hi; ++n) {
            // col = im2col(dy_n): adjoint of the forward col2im scatter
            detail::im2col(dy + n * O * ohw, O, Ho, Wo, kh, kw, sh, sw, Index(0), Index(0), H,
                           W, col.data());
            if (gx) {
              // dX_n = w (C, okk) * col (okk, hw)
              gemm(false, false, C, hw, okk, S(1), wv.data().data(), okk, col.data(), hw,
                   S(1), gx + n * C * hw, hw);
            }
            if (!gw_parts.empty()) {
              // dW += x_n (C, hw) * col^T (hw, okk)
              gemm(false, true, C, okk, hw, S(1), xv.data().data() + n * C * hw, hw,
                   col.data(), hw, S(1), gw_parts[widx].data(), okk);
            }
          }
        });
        if (!gw_parts.empty()) {
          S* gw = wv.node()->ensure_grad();
          for (const auto& part : gw_parts)
            for (Index i = 0; i < C * okk; ++i) gw[i] += part[i];
        }
        if (has_bias && bv.requires_grad()) {
          S* gb = bv.node()->ensure_grad();
          for (Index n = 0; n < N; ++n)
            for (Index o = 0; o < O; ++o) {
              S acc = S(0);
              const S* row = dy + (n * O + o) * ohw;
              for (Index i = 0; i < ohw; ++i) acc += row[i];
              gb[o] += acc;
            }
        }
      });
}

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, Index sh, Index sw, Index ph,
                 Index pw) {
  return conv2d<S>(x, w, static_cast<const Tensor<S>*>(nullptr), sh, sw, ph, pw);
}

template <class S>
Tensor<S> conv_transpose2d(const Tensor<S>& x, const Tensor<S>& w, Index sh, Index sw) {
  return conv_transpose2d<S>(x, w, static_cast<const Tensor<S>*>(nullptr), sh, sw);
}

/// Numerically stable softmax over the last axis.
template <class S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  detail::check_finite(x, "softmax");
  check(x.rank() >= 1, "softmax: scalar input " + shape_str(x.shape()));
  Index d = x.dim(x.rank() - 1);
  Index rows = x.numel() / std::max<Index>(d, 1);
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  const S* px = x.data().data();
  global_pool().parallel_chunks(rows, [&](int, Index lo, Index hi) {
    for (Index r = lo; r < hi; ++r) {
      const S* row = px + r * d;
      S* orow = out.data() + r * d;
      S mx = row[0];
      for (Index i = 1; i < d; ++i) mx = std::max(mx, row[i]);
      S total = S(0);
      for (Index i = 0; i < d; ++i) {
        orow[i] = static_cast<S>(std::exp(static_cast<double>(row[i] - mx)));
        total += orow[i];
      }
      S inv = S(1) / total;
      for (Index i = 0; i < d; ++i) orow[i] *= inv;
    }
  });
  Tensor<S> xv = x;
  return detail::make_op<S>(x.shape(), std::move(out), {x},
                            [xv, rows, d](detail::Node<S>& self) {
                              S* gx = xv.node()->ensure_grad();
                              const S* dy = self.grad.data();
                              const S* y = self.data.data();
                              global_pool().parallel_chunks(rows, [&](int, Index lo, Index hi) {
                                for (Index r = lo; r < hi; ++r) {
                                  const S* yr = y + r * d;
                                  const S* dyr = dy + r * d;
                                  S dot = S(0);
                                  for (Index i = 0; i < d; ++i) dot += yr[i] * dyr[i];
                                  S* gxr = gx + r * d;
                                  for (Index i = 0; i < d; ++i)
                                    gxr[i] += yr[i] * (dyr[i] - dot);
                                }
                              });
                            });
}

/// Layer norm over the last axis with affine parameters.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
  detail::check_finite(x, "layer_norm");
  Index d = x.dim(x.rank() - 1);
  check(gamma.rank() == 1 && gamma.dim(0) == d && beta.rank() == 1 && beta.dim(0) == d,
        "layer_norm: affine shapes " + shape_str(gamma.shape()) + "/" +
            shape_str(beta.shape()) + " do not match last axis of " + shape_str(x.shape()));
  Index rows = x.numel() / std::max<Index>(d, 1);
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  std::vector<S> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<S> inv_std(static_cast<std::size_t>(rows));
  const S* px = x.data().data();
  const S* pg = gamma.data().data();
  const S* pb = beta.data().data();
  global_pool().parallel_chunks(rows, [&](int, Index lo, Index hi) {
    for (Index r = lo; r < hi; ++r) {
      const S* row = px + r * d;
      S mu = S(0);
      for (Index i = 0; i < d; ++i) mu += row[i];
      mu /= static_cast<S>(d);
      S var = S(0);
      for (Index i = 0; i < d; ++i) {
        S c = row[i] - mu;
        var += c * c;
      }
      var /= static_cast<S>(d);
      S istd = S(1) / static_cast<S>(std::sqrt(static_cast<double>(var + eps)));
      inv_std[r] = istd;
      for (Index i = 0; i < d; ++i) {
        S h = (row[i] - mu) * istd;
        xhat[r * d + i] = h;
        out[r * d + i] = h * pg[i] + pb[i];
      }
    }
  });
  Tensor<S> xv = x, gv = gamma, bv = beta;
  auto xh = std::make_shared<std::vector<S>>(std::move(xhat));
  auto is = std::make_shared<std::vector<S>>(std::move(inv_std));
  return detail::make_op<S>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xv, gv, bv, xh, is, rows, d](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        const S* pg = gv.data().data();
        if (gv.requires_grad() || bv.requires_grad()) {
          S* gg = gv.requires_grad() ? gv.node()->ensure_grad() : nullptr;
          S* gb = bv.requires_grad() ? bv.node()->ensure_grad() : nullptr;
          for (Index r = 0; r < rows; ++r)
            for (Index i = 0; i < d; ++i) {
              if (gg) gg[i] += dy[r * d + i] * (*xh)[r * d + i];
              if (gb) gb[i] += dy[r * d + i];
            }
        }
        if (xv.requires_grad()) {
          S* gx = xv.node()->ensure_grad();
          global_pool().parallel_chunks(rows, [&](int, Index lo, Index hi) {
            for (Index r = lo; r < hi; ++r) {
              S sum_dh = S(0), sum_dh_h = S(0);
              for (Index i = 0; i < d; ++i) {
                S dh = dy[r * d + i] * pg[i];
                sum_dh += dh;
                sum_dh_h += dh * (*xh)[r * d + i];
              }
              S inv_d = S(1) / static_cast<S>(d);
              for (Index i = 0; i < d; ++i) {
                S dh = dy[r * d + i] * pg[i];
                gx[r * d + i] += (*is)[r] *
                                 (dh - sum_dh * inv_d - (*xh)[r * d + i] * sum_dh_h * inv_d);
              }
            }
          });
        }
      });
}

template <class S>
struct BatchNormState {
  std::vector<S> running_mean;
  std::vector<S> running_var;

  explicit BatchNormState(Index channels = 0)
      : running_mean(static_cast<std::size_t>(channels), S(0)),
        running_var(static_cast<std::size_t>(channels), S(1)) {}
};

/// Per-channel batch norm on (N, C, H, W). Training mode uses batch stats and
/// updates `state`; eval mode normalizes with the running statistics.
template <class S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     BatchNormState<S>& state, bool training, S momentum = S(0.1),
                     S eps = S(1e-5)) {
  detail::check_finite(x, "batch_norm");
  check(x.rank() == 4, "batch_norm: expects (N,C,H,W), got " + shape_str(x.shape()));
  Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 && beta.dim(0) == C,
        "batch_norm: affine shapes do not match channels of " + shape_str(x.shape()));
  check(static_cast<Index>(state.running_mean.size()) == C,
        "batch_norm: state has " + std::to_string(state.running_mean.size()) +
            " channels, input has " + std::to_string(C));
  Index hw = H * W;
  Index m = N * hw;

  std::vector<S> mean_c(static_cast<std::size_t>(C)), var_c(static_cast<std::size_t>(C));
  const S* px = x.data().data();
  if (training) {
    global_pool().parallel_chunks(C, [&](int, Index lo, Index hi) {
      for (Index c = lo; c < hi; ++c) {
        double acc = 0;
        for (Index n = 0; n < N; ++n) {
          const S* p = px + (n * C + c) * hw;
          for (Index i = 0; i < hw; ++i) acc += p[i];
        }
        S mu = static_cast<S>(acc / m);
        double vacc = 0;
        for (Index n = 0; n < N; ++n) {
          const S* p = px + (n * C + c) * hw;
          for (Index i = 0; i < hw; ++i) {
            double cdev = p[i] - mu;
            vacc += cdev * cdev;
          }
        }
        mean_c[c] = mu;
        var_c[c] = static_cast<S>(vacc / m);
      }
    });
    // Running stats track the unbiased variance.
    for (Index c = 0; c < C; ++c) {
      S unbiased = m > 1 ? var_c[c] * static_cast<S>(m) / static_cast<S>(m - 1) : var_c[c];
      state.running_mean[c] = (S(1) - momentum) * state.running_mean[c] + momentum * mean_c[c];
      state.running_var[c] = (S(1) - momentum) * state.running_var[c] + momentum * unbiased;
    }
  } else {
    for (Index c = 0; c < C; ++c) {
      mean_c[c] = state.running_mean[c];
      var_c[c] = state.running_var[c];
    }
  }

  std::vector<S> inv_std(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c)
    inv_std[c] = S(1) / static_cast<S>(std::sqrt(static_cast<double>(var_c[c] + eps)));

  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  const S* pg = gamma.data().data();
  const S* pb = beta.data().data();
  global_pool().parallel_chunks(N * C, [&](int, Index lo, Index hi) {
    for (Index nc = lo; nc < hi; ++nc) {
      Index c = nc % C;
      const S* p = px + nc * hw;
      S* o = out.data() + nc * hw;
      S mu = mean_c[c], istd = inv_std[c], g = pg[c], b = pb[c];
      for (Index i = 0; i < hw; ++i) o[i] = (p[i] - mu) * istd * g + b;
    }
  });

  Tensor<S> xv = x, gv = gamma, bv = beta;
  auto mu_s = std::make_shared<std::vector<S>>(std::move(mean_c));
  auto is_s = std::make_shared<std::vector<S>>(std::move(inv_std));
  return detail::make_op<S>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xv, gv, bv, mu_s, is_s, training, N, C, hw, m](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        const S* px = xv.data().data();
        const S* pg = gv.data().data();
        // Per-channel sums of dy and dy*xhat.
        std::vector<S> sum_dy(static_cast<std::size_t>(C), S(0));
        std::vector<S> sum_dyh(static_cast<std::size_t>(C), S(0));
        global_pool().parallel_chunks(C, [&](int, Index lo, Index hi) {
          for (Index c = lo; c < hi; ++c) {
            double sd = 0, sdh = 0;
            for (Index n = 0; n < N; ++n) {
              const S* d = dy + (n * C + c) * hw;
              const S* p = px + (n * C + c) * hw;
              for (Index i = 0; i < hw; ++i) {
                sd += d[i];
                sdh += d[i] * (p[i] - (*mu_s)[c]) * (*is_s)[c];
              }
            }
            sum_dy[c] = static_cast<S>(sd);
            sum_dyh[c] = static_cast<S>(sdh);
          }
        });
        if (gv.requires_grad()) {
          S* gg = gv.node()->ensure_grad();
          for (Index c = 0; c < C; ++c) gg[c] += sum_dyh[c];
        }
        if (bv.requires_grad()) {
          S* gb = bv.node()->ensure_grad();
          for (Index c = 0; c < C; ++c) gb[c] += sum_dy[c];
        }
        if (xv.requires_grad()) {
          S* gx = xv.node()->ensure_grad();
          global_pool().parallel_chunks(N * C, [&](int, Index lo, Index hi) {
            for (Index nc = lo; nc < hi; ++nc) {
              Index c = nc % C;
              const S* d = dy + nc * hw;
              const S* p = px + nc * hw;
              S* g = gx + nc * hw;
              S istd = (*is_s)[c], mu = (*mu_s)[c], gam = pg[c];
              if (training) {
                S inv_m = S(1) / static_cast<S>(m);
                for (Index i = 0; i < hw; ++i) {
                  S h = (p[i] - mu) * istd;
                  g[i] += gam * istd * (d[i] - sum_dy[c] * inv_m - h * sum_dyh[c] * inv_m);
                }
              } else {
                for (Index i = 0; i < hw; ++i) g[i] += gam * istd * d[i];
              }
            }
          });
        }
      });
}

/// Mean binary cross-entropy between probabilities and {0,1} labels.
/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
template <class S>
Tensor<S> bce_loss(const Tensor<S>& probs, const Tensor<S>& labels) {
  detail::check_finite(probs, "bce_loss");
  check(probs.shape() == labels.shape(),
        "bce_loss: probs " + shape_str(probs.shape()) + " vs labels " +
            shape_str(labels.shape()));
  for (S y : labels.data())
    check(y == S(0) || y == S(1), "bce_loss: labels must be 0 or 1");
  const S lo = S(1e-7), hi = S(1) - S(1e-7);
  Index n = probs.numel();
  check(n > 0, "bce_loss: empty input");
  double acc = 0;
  const S* pp = probs.data().data();
  const S* py = labels.data().data();
  for (Index i = 0; i < n; ++i) {
    double p = std::clamp(static_cast<double>(pp[i]), static_cast<double>(lo),
                          static_cast<double>(hi));
    double y = py[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  Tensor<S> pv = probs, yv = labels;
  return detail::make_op<S>(
      Shape{}, std::vector<S>{static_cast<S>(acc / n)}, {probs, labels},
      [pv, yv, lo, hi, n](detail::Node<S>& self) {
        if (!pv.requires_grad()) return;
        S dy = self.grad[0];
        S* gp = pv.node()->ensure_grad();
        const S* pp = pv.data().data();
        const S* py = yv.data().data();
        S inv_n = S(1) / static_cast<S>(n);
        for (Index i = 0; i < n; ++i) {
          if (pp[i] <= lo || pp[i] >= hi) continue;  // clamped region
          S p = pp[i];
          gp[i] += dy * inv_n * (p - py[i]) / (p * (S(1) - p));
        }
      });
}

/// Mean absolute error over all elements.
template <class S>
Tensor<S> mae_loss(const Tensor<S>& estimates, const Tensor<S>& targets) {
  check(estimates.shape() == targets.shape(),
        "mae_loss: estimates " + shape_str(estimates.shape()) + " vs targets " +
            shape_str(targets.shape()));
  return mean(abs_val(sub(estimates, targets)));
}

}  // namespace zss
