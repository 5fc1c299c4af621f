#include <catch2/catch_amalgamated.hpp>

#include "zss/metrics.hpp"
#include "zss/report.hpp"
#include "zss/rng.hpp"

using Catch::Approx;
using zss::Index;

namespace {

std::vector<double> tone(double freq, Index n, Index rate, double amp = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    x[static_cast<std::size_t>(i)] = amp * std::sin(2.0 * zss::kPi * freq * i / rate);
  return x;
}

std::vector<double> scaled(const std::vector<double>& x, double k) {
  std::vector<double> y = x;
  for (auto& v : y) v *= k;
  return y;
}

}  // namespace

TEST_CASE("sdr analytic values", "[metrics][sdr]") {
  auto ref = tone(440, 16000, 16000);
  REQUIRE(zss::sdr<double>(ref, ref) == 60.0);  // clamp at exact reconstruction
  REQUIRE(zss::sdr<double>(ref, scaled(ref, 0.5)) == Approx(6.0206).margin(1e-3));
  REQUIRE(zss::sdr<double>(ref, scaled(ref, 2.0)) == Approx(0.0).margin(1e-9));
  std::vector<double> zeros(16000, 0.0);
  REQUIRE_THROWS_AS(zss::sdr<double>(zeros, ref), std::invalid_argument);
}

TEST_CASE("sdr invariances", "[metrics][sdr][property]") {
  zss::Rng rng(5);
  auto ref = tone(880, 8000, 16000);
  std::vector<double> est = ref;
  for (auto& v : est) v += rng.uniform(-0.05, 0.05);
  double base = zss::sdr<double>(ref, est);
  for (double k : {0.1, 0.5, 2.0, 10.0}) {
    REQUIRE(zss::sdr<double>(scaled(ref, k), scaled(est, k)) == Approx(base).margin(1e-6));
  }
  REQUIRE(zss::sdr<double>(scaled(ref, -1.0), scaled(est, -1.0)) ==
          Approx(base).margin(1e-12));
}

TEST_CASE("silence sdr analytic values", "[metrics][sdr]") {
  auto in = tone(600, 16000, 16000);
  std::vector<double> zeros(in.size(), 0.0);
  REQUIRE(zss::silence_sdr<double>(in, zeros) == 60.0);
  REQUIRE(zss::silence_sdr<double>(in, in) == Approx(0.0).margin(1e-9));
  REQUIRE(zss::silence_sdr<double>(in, scaled(in, 0.1)) == Approx(20.0).margin(1e-6));
  REQUIRE_THROWS_AS(zss::silence_sdr<double>(zeros, in), std::invalid_argument);
}

TEST_CASE("median aggregation", "[metrics][median]") {
  REQUIRE(zss::median({1, 2, 100}) == 2.0);
  REQUIRE(zss::median_aggregate({{1, 2, 100}, {4}}) == 3.0);
  REQUIRE(zss::median_aggregate({{2}, {4}}) == 3.0);
  REQUIRE_THROWS_AS(zss::median_aggregate({}), std::invalid_argument);
  REQUIRE_THROWS_AS(zss::median_aggregate({{1.0}, {}}), std::invalid_argument);
}

TEST_CASE("median aggregation invariances", "[metrics][median][property]") {
  zss::Rng rng(7);
  std::vector<std::vector<double>> items;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> clips;
    for (int c = 0; c < 7; ++c) clips.push_back(rng.uniform(-10, 10));
    items.push_back(clips);
  }
  double base = zss::median_aggregate(items);
  // Within-group permutation invariance.
  auto shuffled = items;
  for (auto& clips : shuffled) std::reverse(clips.begin(), clips.end());
  REQUIRE(zss::median_aggregate(shuffled) == base);
  // Monotone in any single value.
  auto bumped = items;
  bumped[2][3] += 5.0;
  REQUIRE(zss::median_aggregate(bumped) >= base);
}

TEST_CASE("mAP analytic cases", "[metrics][map]") {
  {
    // Perfect ranking for every class.
    std::vector<std::vector<double>> scores = {{0.9, 0.1}, {0.8, 0.9}, {0.1, 0.2}};
    std::vector<std::vector<int>> labels = {{1, 0}, {1, 1}, {0, 0}};
    REQUIRE(zss::mean_average_precision(scores, labels) == Approx(1.0));
  }
  {
    // One class, two items, positive ranked second -> AP 0.5.
    std::vector<std::vector<double>> scores = {{0.9}, {0.5}};
    std::vector<std::vector<int>> labels = {{0}, {1}};
    REQUIRE(zss::mean_average_precision(scores, labels) == Approx(0.5));
  }
  {
    // Classes without positives are skipped and reported.
    std::vector<std::vector<double>> scores = {{0.9, 0.4}, {0.5, 0.6}};
    std::vector<std::vector<int>> labels = {{1, 0}, {0, 0}};
    std::vector<Index> skipped;
    double v = zss::mean_average_precision(scores, labels, &skipped);
    REQUIRE(v == Approx(1.0));
    REQUIRE(skipped == std::vector<Index>{1});
  }
  {
    std::vector<std::vector<double>> scores = {{0.9}, {0.5}};
    std::vector<std::vector<int>> labels = {{0}, {0}};
    REQUIRE_THROWS_AS(zss::mean_average_precision(scores, labels), std::invalid_argument);
  }
}

TEST_CASE("mAP on random scores approaches the positive rate", "[metrics][map][oracle]") {
  zss::Rng rng(11);
  const std::size_t items = 1000, classes = 4;
  std::vector<std::vector<double>> scores(items, std::vector<double>(classes));
  std::vector<std::vector<int>> labels(items, std::vector<int>(classes));
  double pos_rate = 0.5;
  for (auto& row : scores)
    for (auto& v : row) v = rng.uniform();
  for (auto& row : labels)
    for (auto& v : row) v = rng.uniform() < pos_rate ? 1 : 0;
  double v = zss::mean_average_precision(scores, labels);
  REQUIRE(v == Approx(pos_rate).margin(0.05));
}

TEST_CASE("mAP is invariant to monotone score transformations", "[metrics][map][property]") {
  zss::Rng rng(13);
  const std::size_t items = 50, classes = 3;
  std::vector<std::vector<double>> scores(items, std::vector<double>(classes));
  std::vector<std::vector<int>> labels(items, std::vector<int>(classes));
  for (auto& row : scores)
    for (auto& v : row) v = rng.uniform(-3, 3);
  for (auto& row : labels)
    for (auto& v : row) v = rng.uniform() < 0.3 ? 1 : 0;
  labels[0] = {1, 1, 1};  // guarantee positives
  double base = zss::mean_average_precision(scores, labels);
  auto transformed = scores;
  for (auto& row : transformed)
    for (auto& v : row) v = std::tanh(v) * 10.0 + 5.0;
  REQUIRE(zss::mean_average_precision(transformed, labels) == Approx(base));
}

TEST_CASE("localization error and hit flag", "[metrics][localization]") {
  auto a = zss::localization_error(4.0, 3.5, 4.5);
  REQUIRE(a.error_seconds == Approx(0.0));
  REQUIRE(a.hit);
  auto b = zss::localization_error(4.0, 5.0, 6.0);
  REQUIRE(b.error_seconds == Approx(1.5));
  REQUIRE_FALSE(b.hit);
  REQUIRE_THROWS_AS(zss::localization_error(0.0, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("protocol eval: oracle and identity models", "[metrics][protocol]") {
  Index rate = 16000;
  std::vector<zss::EvalTriplet<double>> triplets;
  for (int i = 0; i < 3; ++i) {
    zss::EvalTriplet<double> t;
    t.target = tone(400 + 100 * i, 2 * rate, rate);
    t.other = tone(2000 + 100 * i, 2 * rate, rate);
    t.mixture.resize(t.target.size());
    for (std::size_t k = 0; k < t.mixture.size(); ++k)
      t.mixture[k] = t.target[k] + t.other[k];
    t.query = {1.0, 0.0};
    t.class_id = i;
    triplets.push_back(std::move(t));
  }

  // Oracle: returns its target exactly -> all three protocols at the clamp.
  int which = 0;
  auto oracle = [&](const std::vector<double>& input,
                    const std::vector<double>&) -> std::vector<double> {
    (void)input;
    int idx = which / 3, kind = which % 3;
    ++which;
    if (kind == 0) return triplets[static_cast<std::size_t>(idx)].target;  // mixture call
    if (kind == 1) return triplets[static_cast<std::size_t>(idx)].target;  // clean call
    return std::vector<double>(input.size(), 0.0);                         // silence call
  };
  auto ro = zss::protocol_eval<double>(oracle, triplets, rate);
  REQUIRE(ro.median_mixture == 60.0);
  REQUIRE(ro.median_clean == 60.0);
  REQUIRE(ro.median_silence == 60.0);

  // Identity: f(x, e) = x.
  auto identity = [](const std::vector<double>& input, const std::vector<double>&) {
    return input;
  };
  auto ri = zss::protocol_eval<double>(identity, triplets, rate);
  REQUIRE(ri.median_clean == 60.0);
  REQUIRE(ri.median_silence == Approx(0.0).margin(1e-9));
  // mixture-SDR equals sdr(target, mixture) for the identity model.
  std::vector<double> direct;
  for (const auto& t : triplets)
    direct.push_back(zss::sdr<double>(t.target, t.mixture));
  REQUIRE(ri.median_mixture == Approx(zss::median(direct)).margin(1e-9));
}

TEST_CASE("report table and histogram are deterministic", "[metrics][report]") {
  zss::ReportTable t;
  t.columns = {"class", "mixture_sdr"};
  t.rows = {{"sine-220", zss::format_fixed(7.25)}, {"chirp-up", zss::format_fixed(6.5)}};
  std::string tsv = t.to_tsv();
  REQUIRE(tsv == "class\tmixture_sdr\nsine-220\t7.2500\nchirp-up\t6.5000\n");
  std::vector<double> vals = {1, 2, 2, 3, 5, 5, 5, 8};
  REQUIRE(zss::svg_histogram(vals, 4, "sdr") == zss::svg_histogram(vals, 4, "sdr"));
  REQUIRE(zss::svg_histogram(vals, 4, "sdr").find("<svg") == 0);
}
