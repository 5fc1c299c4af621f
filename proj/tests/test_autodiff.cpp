#include <catch2/catch_amalgamated.hpp>

#include "grad_check.hpp"
#include "zss/nn.hpp"

using gradcheck::away_from_kinks;
using gradcheck::compare;
using gradcheck::DTensor;
using gradcheck::weighted_sum;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("gradients: elementwise binary ops with broadcasting", "[autodiff]") {
  zss::Rng rng(101);
  for (int t = 0; t < 5; ++t) {
    DTensor a = away_from_kinks({3, 4}, rng);
    DTensor b = away_from_kinks({4}, rng);
    for (auto op : {0, 1, 2}) {
      auto res = compare(
          [&, op](const std::vector<DTensor>& in) {
            DTensor y = op == 0   ? zss::add(in[0], in[1])
                        : op == 1 ? zss::sub(in[0], in[1])
                                  : zss::mul(in[0], in[1]);
            return weighted_sum(y);
          },
          {a, b});
      INFO("op " << op);
      REQUIRE(res.max_rel_error < kTol);
    }
  }
}

TEST_CASE("gradients: unary activations", "[autodiff]") {
  zss::Rng rng(102);
  for (int t = 0; t < 5; ++t) {
    DTensor x = away_from_kinks({2, 7}, rng);
    int which = 0;
    for (auto fn : {+[](const DTensor& v) { return zss::relu(v); },
                    +[](const DTensor& v) { return zss::gelu(v); },
                    +[](const DTensor& v) { return zss::sigmoid(v); },
                    +[](const DTensor& v) { return zss::abs_val(v); }}) {
      auto res = compare(
          [&](const std::vector<DTensor>& in) { return weighted_sum(fn(in[0])); }, {x});
      INFO("activation " << which++);
      REQUIRE(res.max_rel_error < kTol);
    }
  }
}

TEST_CASE("gradients: matmul plain, batched and shared", "[autodiff]") {
  zss::Rng rng(103);
  {
    DTensor a = away_from_kinks({3, 4}, rng);
    DTensor b = away_from_kinks({4, 2}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::matmul(in[0], in[1]));
        },
        {a, b});
    REQUIRE(res.max_rel_error < kTol);
  }
  {
    DTensor a = away_from_kinks({2, 3, 4}, rng);
    DTensor b = away_from_kinks({2, 4, 5}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::matmul(in[0], in[1]));
        },
        {a, b});
    REQUIRE(res.max_rel_error < kTol);
  }
  {
    DTensor a = away_from_kinks({2, 3, 4}, rng);
    DTensor b = away_from_kinks({4, 5}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::matmul(in[0], in[1]));
        },
        {a, b});
    REQUIRE(res.max_rel_error < kTol);
  }
}

TEST_CASE("gradients: linear with bias", "[autodiff]") {
  zss::Rng rng(104);
  DTensor x = away_from_kinks({5, 3}, rng);
  DTensor w = away_from_kinks({4, 3}, rng);
  DTensor b = away_from_kinks({4}, rng);
  auto res = compare(
      [&](const std::vector<DTensor>& in) {
        return weighted_sum(zss::linear(in[0], in[1], &in[2]));
      },
      {x, w, b});
  REQUIRE(res.max_rel_error < kTol);
}

TEST_CASE("gradients: conv2d stride and padding", "[autodiff]") {
  zss::Rng rng(105);
  struct Case {
    zss::Index sh, sw, ph, pw;
  };
  for (Case c : {Case{1, 1, 1, 1}, Case{2, 2, 0, 0}, Case{2, 1, 1, 2}}) {
    DTensor x = away_from_kinks({2, 3, 6, 7}, rng);
    DTensor w = away_from_kinks({4, 3, 3, 3}, rng);
    DTensor b = away_from_kinks({4}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::conv2d(in[0], in[1], &in[2], c.sh, c.sw, c.ph, c.pw));
        },
        {x, w, b});
    REQUIRE(res.max_rel_error < kTol);
  }
}

TEST_CASE("gradients: conv_transpose2d", "[autodiff]") {
  zss::Rng rng(106);
  DTensor x = away_from_kinks({2, 3, 4, 5}, rng);
  DTensor w = away_from_kinks({3, 2, 2, 2}, rng);
  DTensor b = away_from_kinks({2}, rng);
  auto res = compare(
      [&](const std::vector<DTensor>& in) {
        return weighted_sum(zss::conv_transpose2d(in[0], in[1], &in[2], 2, 2));
      },
      {x, w, b});
  REQUIRE(res.max_rel_error < kTol);
}

TEST_CASE("gradients: softmax and layer_norm", "[autodiff]") {
  zss::Rng rng(107);
  {
    DTensor x = away_from_kinks({4, 6}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::softmax_lastdim(in[0]));
        },
        {x});
    REQUIRE(res.max_rel_error < kTol);
  }
  {
    DTensor x = away_from_kinks({3, 5}, rng);
    DTensor g = away_from_kinks({5}, rng);
    DTensor b = away_from_kinks({5}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::layer_norm(in[0], in[1], in[2]));
        },
        {x, g, b});
    REQUIRE(res.max_rel_error < kTol);
  }
}

TEST_CASE("gradients: batch_norm train and eval", "[autodiff]") {
  zss::Rng rng(108);
  DTensor x = away_from_kinks({3, 2, 4, 4}, rng);
  DTensor g = away_from_kinks({2}, rng);
  DTensor b = away_from_kinks({2}, rng);
  for (bool training : {true, false}) {
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          zss::BatchNormState<double> state(2);
          state.running_mean = {0.3, -0.2};
          state.running_var = {1.5, 0.7};
          return weighted_sum(zss::batch_norm(in[0], in[1], in[2], state, training));
        },
        {x, g, b});
    INFO("training=" << training);
    REQUIRE(res.max_rel_error < kTol);
  }
}

TEST_CASE("gradients: reductions and shape ops", "[autodiff]") {
  zss::Rng rng(109);
  DTensor x = away_from_kinks({3, 4, 2}, rng);
  auto cases = std::vector<gradcheck::LossFn>{
      [&](const std::vector<DTensor>& in) { return zss::sum(in[0]); },
      [&](const std::vector<DTensor>& in) { return weighted_sum(zss::sum(in[0], {1})); },
      [&](const std::vector<DTensor>& in) {
        return weighted_sum(zss::mean(in[0], {0, 2}, true));
      },
      [&](const std::vector<DTensor>& in) {
        return weighted_sum(zss::reshape(in[0], {4, 6}));
      },
      [&](const std::vector<DTensor>& in) {
        return weighted_sum(zss::permute(in[0], {2, 0, 1}));
      },
      [&](const std::vector<DTensor>& in) {
        return weighted_sum(zss::slice(in[0], {1, 0, 1}, {2, 3, 1}));
      },
      [&](const std::vector<DTensor>& in) {
        return weighted_sum(zss::pad(in[0], {0, 1, 0}, {1, 0, 2}));
      },
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto res = compare(cases[i], {x});
    INFO("case " << i);
    REQUIRE(res.max_rel_error < kTol);
  }
}

TEST_CASE("gradients: concat, roll2d, index_select", "[autodiff]") {
  zss::Rng rng(110);
  {
    DTensor a = away_from_kinks({2, 3}, rng);
    DTensor b = away_from_kinks({2, 2}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::concat<double>({in[0], in[1]}, 1));
        },
        {a, b});
    REQUIRE(res.max_rel_error < kTol);
  }
  {
    DTensor x = away_from_kinks({2, 4, 4, 3}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::roll2d(in[0], 2, -1));
        },
        {x});
    REQUIRE(res.max_rel_error < kTol);
  }
  {
    DTensor t = away_from_kinks({5, 3}, rng);
    auto res = compare(
        [&](const std::vector<DTensor>& in) {
          return weighted_sum(zss::index_select(in[0], {4, 0, 0, 2}));
        },
        {t});
    REQUIRE(res.max_rel_error < kTol);
  }
}

TEST_CASE("gradients: bce and mae losses", "[autodiff]") {
  zss::Rng rng(111);
  {
    DTensor p = DTensor::rand_uniform({4, 3}, rng, 0.05, 0.95);
    DTensor y = DTensor::zeros({4, 3});
    for (auto& v : y.mutable_data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    auto res = compare(
        [&](const std::vector<DTensor>& in) { return zss::bce_loss(in[0], y); }, {p});
    REQUIRE(res.max_rel_error < kTol);
  }
  {
    DTensor est = away_from_kinks({3, 8}, rng);
    DTensor tgt = zss::add(est, away_from_kinks({3, 8}, rng)).detach();
    auto res = compare(
        [&](const std::vector<DTensor>& in) { return zss::mae_loss(in[0], tgt); }, {est});
    REQUIRE(res.max_rel_error < kTol);
  }
}

TEST_CASE("gradients: composite network block", "[autodiff]") {
  zss::Rng rng(112);
  DTensor x = away_from_kinks({2, 6}, rng);
  DTensor w1 = away_from_kinks({8, 6}, rng);
  DTensor b1 = away_from_kinks({8}, rng);
  DTensor w2 = away_from_kinks({6, 8}, rng);
  DTensor g = away_from_kinks({6}, rng);
  DTensor be = away_from_kinks({6}, rng);
  auto res = compare(
      [&](const std::vector<DTensor>& in) {
        DTensor h = zss::gelu(zss::linear(in[0], in[1], &in[2]));
        DTensor y = zss::linear(h, in[3]);
        DTensor n = zss::layer_norm(zss::add(y, in[0]), in[4], in[5]);
        return weighted_sum(zss::softmax_lastdim(n));
      },
      {x, w1, b1, w2, g, be});
  REQUIRE(res.max_rel_error < kTol);
}
