#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "zss/fft.hpp"
#include "zss/synth.hpp"

using Catch::Approx;
using zss::Index;

namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

fs::path fresh_dir(const char* name) {
  fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("class set is pairwise separable and under Nyquist", "[synth][classes]") {
  auto classes = zss::desk_class_set();
  REQUIRE(classes.size() == 8);
  REQUIRE_NOTHROW(zss::validate_class_specs(classes, 16000));

  // Two pure tones in the same band without modulation are rejected.
  std::vector<zss::ClassSpec> clash = {classes[0], classes[0]};
  clash[1].class_id = 1;
  clash[1].name = "sine-220-dup";
  REQUIRE_THROWS_AS(zss::validate_class_specs(clash, 16000), std::invalid_argument);

  // A class over Nyquist is rejected.
  std::vector<zss::ClassSpec> high = {classes[0], classes[1]};
  high[1].freq_lo = high[1].freq_hi = 9000;
  REQUIRE_THROWS_AS(zss::validate_class_specs(high, 16000), std::invalid_argument);
}

TEST_CASE("corpus generation is byte-identical for a fixed seed", "[synth][determinism]") {
  zss::GenOptions opt;
  opt.n_train = 6;
  opt.n_eval = 3;
  opt.seed = 99;
  auto d1 = fresh_dir("zss_corpus_a");
  auto d2 = fresh_dir("zss_corpus_b");
  auto classes = zss::desk_class_set();
  zss::generate_corpus(classes, opt, d1.string());
  zss::generate_corpus(classes, opt, d2.string());

  for (const auto& rel :
       {"train_manifest.jsonl", "eval_manifest.jsonl", "train_sidecar.jsonl",
        "eval_sidecar.jsonl", "train/00000.wav", "train/00003.wav", "eval/00002.wav"}) {
    INFO(rel);
    REQUIRE(read_bytes(d1 / rel) == read_bytes(d2 / rel));
    REQUIRE(!read_bytes(d1 / rel).empty());
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("manifest labels match the sidecar class sets", "[synth][manifest]") {
  zss::GenOptions opt;
  opt.n_train = 24;
  opt.n_eval = 8;
  opt.seed = 31;
  auto dir = fresh_dir("zss_corpus_c");
  zss::generate_corpus(zss::desk_class_set(), opt, dir.string());

  auto manifest = zss::load_manifest((dir / "train_manifest.jsonl").string());
  auto sidecar = zss::load_sidecar((dir / "train_sidecar.jsonl").string());
  REQUIRE(manifest.size() == 24);
  for (const auto& e : manifest) {
    REQUIRE(!e.labels.empty());
    REQUIRE(sidecar.count(e.id) == 1);
    std::vector<Index> side_classes;
    for (const auto& ev : sidecar[e.id].events) side_classes.push_back(ev.class_id);
    std::sort(side_classes.begin(), side_classes.end());
    side_classes.erase(std::unique(side_classes.begin(), side_classes.end()),
                       side_classes.end());
    REQUIRE(e.labels == side_classes);
    for (const auto& ev : sidecar[e.id].events) {
      REQUIRE(ev.onset >= 0.0);
      REQUIRE(ev.offset <= 10.0);
      REQUIRE(ev.snr_db >= 20.0);  // events stay well above the noise floor
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("class balance stays within 20 percent of uniform", "[synth][balance]") {
  zss::GenOptions opt;
  opt.n_train = 400;
  opt.n_eval = 1;
  opt.seed = 5;
  auto dir = fresh_dir("zss_corpus_d");
  zss::generate_corpus(zss::desk_class_set(), opt, dir.string());
  auto manifest = zss::load_manifest((dir / "train_manifest.jsonl").string());
  std::vector<int> count(8, 0);
  int total = 0;
  for (const auto& e : manifest)
    for (Index c : e.labels) {
      ++count[static_cast<std::size_t>(c)];
      ++total;
    }
  double uniform = total / 8.0;
  for (int c = 0; c < 8; ++c) {
    REQUIRE(count[static_cast<std::size_t>(c)] >= 0.8 * uniform);
    REQUIRE(count[static_cast<std::size_t>(c)] <= 1.2 * uniform);
    // Round-robin primary events guarantee the floor of n/(2*classes).
    REQUIRE(count[static_cast<std::size_t>(c)] >= 400 / 8 / 2);
  }
  fs::remove_all(dir);
}

TEST_CASE("clean clips have the right length, rms and spectrum", "[synth][clips]") {
  auto classes = zss::desk_class_set();
  auto clips = zss::generate_clean_clips(classes[0], 8, 13, 16000);  // sine-220
  REQUIRE(clips.size() == 8);
  for (const auto& clip : clips) {
    REQUIRE(clip.size() == 32000);
    double rms = zss::detail::rms_of(clip);
    REQUIRE(rms >= 0.05);
    REQUIRE(rms <= 1.0);

    // FFT peak within +-2 bins of the class band around 220 Hz.
    Index n = 32768;
    std::vector<std::complex<float>> buf(static_cast<std::size_t>(n), {0, 0});
    for (std::size_t i = 0; i < clip.size(); ++i) buf[i] = {clip[i], 0.0f};
    zss::fft_inplace(buf.data(), n, false);
    Index best = 0;
    double best_mag = -1;
    for (Index b = 1; b < n / 2; ++b) {
      double m = std::abs(buf[static_cast<std::size_t>(b)]);
      if (m > best_mag) {
        best_mag = m;
        best = b;
      }
    }
    double peak_hz = static_cast<double>(best) * 16000 / n;
    double bin_hz = 16000.0 / n;
    REQUIRE(peak_hz >= 210 - 2 * bin_hz);
    REQUIRE(peak_hz <= 230 + 2 * bin_hz);
  }
}

TEST_CASE("generator rejects impossible options", "[synth][errors]") {
  zss::GenOptions opt;
  opt.n_train = 0;
  REQUIRE_THROWS_AS(zss::generate_corpus(zss::desk_class_set(), opt, "/tmp/zss_never"),
                    std::invalid_argument);
  std::vector<zss::ClassSpec> one = {zss::desk_class_set()[0]};
  zss::GenOptions ok;
  REQUIRE_THROWS_AS(zss::generate_corpus(one, ok, "/tmp/zss_never"), std::invalid_argument);
}
