#pragma once

// Central finite-difference oracle for gradient checks. Runs in 64-bit and
// only ever evaluates the forward path, so it stays independent of the
// backward implementation it is checking.

#include <functional>
#include <vector>

#include "zss/tensor.hpp"

namespace gradcheck {

using DTensor = zss::Tensor<double>;
using LossFn = std::function<DTensor(const std::vector<DTensor>&)>;

struct Result {
  double max_rel_error = 0.0;
  zss::Index checked = 0;
};

inline Result compare(const LossFn& f, std::vector<DTensor> inputs, double h = 1e-5) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  DTensor loss = f(inputs);
  zss::backward(loss);

  Result res;
  for (auto& x : inputs) {
    std::vector<double> analytic(static_cast<std::size_t>(x.numel()), 0.0);
    if (x.has_grad()) analytic = x.grad();
    auto& data = x.mutable_data();
    for (zss::Index i = 0; i < x.numel(); ++i) {
      double orig = data[static_cast<std::size_t>(i)];
      data[static_cast<std::size_t>(i)] = orig + h;
      double fp = f(inputs).item();
      data[static_cast<std::size_t>(i)] = orig - h;
      double fm = f(inputs).item();
      data[static_cast<std::size_t>(i)] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double ana = analytic[static_cast<std::size_t>(i)];
      double denom = std::max({std::abs(numeric), std::abs(ana), 1e-3});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - ana) / denom);
      ++res.checked;
    }
  }
  return res;
}

/// Random tensor with values bounded away from activation kinks.
inline DTensor away_from_kinks(zss::Shape shape, zss::Rng& rng) {
  DTensor t = DTensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) {
    double mag = rng.uniform(0.05, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

/// Reduces an arbitrary tensor to a scalar with fixed pseudo-random weights so
/// every output element influences the loss differently. The weights depend
/// only on the seed, making repeated evaluations see the same function.
inline DTensor weighted_sum(const DTensor& t, std::uint64_t seed = 1234) {
  zss::Rng wrng(seed);
  DTensor w = DTensor::rand_uniform(t.shape(), wrng, -1.0, 1.0);
  return zss::sum(zss::mul(t, w));
}

}  // namespace gradcheck
