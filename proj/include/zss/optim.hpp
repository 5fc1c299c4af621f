#pragma once

#include <string>
#include <utility>
#include <vector>

#include "zss/tensor.hpp"

namespace zss {

enum class OptKind { adam, adamw };

/// Adam / AdamW with bias correction. Moment buffers are keyed by parameter
/// order, so the parameter list must be stable across steps.
template <class S>
class Optimizer {
 public:
  Optimizer(OptKind kind, S lr, S weight_decay = S(0), S beta1 = S(0.9), S beta2 = S(0.999),
            S eps = S(1e-8))
      : kind_(kind), lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2),
        eps_(eps) {}

  S learning_rate() const { return lr_; }
  void set_learning_rate(S lr) { lr_ = lr; }
  long step_count() const { return step_; }

  /// One update over all parameters. Grads are left untouched.
  void step(const NamedParams<S>& params) {
    if (m_.empty()) {
      for (const auto& [name, p] : params) {
        m_.emplace_back(p.numel(), S(0));
        v_.emplace_back(p.numel(), S(0));
      }
    }
    check(m_.size() == params.size(), "optimizer_step: parameter list changed size");
    ++step_;
    double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), step_);
    double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), step_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& [name, p] = params[k];
      check(p.has_grad(), "optimizer_step: parameter '" + name + "' has no gradient");
      check(static_cast<Index>(m_[k].size()) == p.numel(),
            "optimizer_step: moment buffer for '" + name + "' has stale shape");
      const S* g = p.grad().data();
      S* w = const_cast<std::vector<S>&>(p.data()).data();
      S* m = m_[k].data();
      S* v = v_[k].data();
      Index n = p.numel();
      for (Index i = 0; i < n; ++i) {
        S gi = g[i];
        if (kind_ == OptKind::adam && weight_decay_ != S(0)) gi += weight_decay_ * w[i];
        m[i] = beta1_ * m[i] + (S(1) - beta1_) * gi;
        v[i] = beta2_ * v[i] + (S(1) - beta2_) * gi * gi;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        double upd = mhat / (std::sqrt(vhat) + static_cast<double>(eps_));
        if (kind_ == OptKind::adamw && weight_decay_ != S(0))
          upd += static_cast<double>(weight_decay_) * w[i];
        w[i] -= static_cast<S>(static_cast<double>(lr_) * upd);
      }
    }
  }

  static void zero_grads(const NamedParams<S>& params) {
    for (const auto& [name, p] : params) const_cast<Tensor<S>&>(p).zero_grad();
  }

 private:
  OptKind kind_;
  S lr_, weight_decay_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<std::vector<S>> m_, v_;
};

}  // namespace zss
