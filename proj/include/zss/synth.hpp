#pragma once

#include <filesystem>

#include "zss/fft.hpp"
#include "zss/manifest.hpp"
#include "zss/parallel.hpp"
#include "zss/rng.hpp"
#include "zss/sidecar.hpp"
#include "zss/wav.hpp"

namespace zss {

// Deterministic synthetic weakly-labeled corpus. Each 10-s sample carries 1-3
// events from parametric sound classes over a -30 dB noise floor; the weak
// manifest stores labels only, ground-truth times go to the sidecar.

enum class Recipe {
  sine,
  harmonic_stack,
  chirp_up,
  chirp_down,
  noise_burst,
  am_tone,
  click_train,
  square_wave,
};

struct ClassSpec {
  Index class_id = 0;
  std::string name;
  Recipe recipe = Recipe::sine;
  double freq_lo = 220, freq_hi = 220;  // fundamental / band edge (Hz)
  double freq2_lo = 0, freq2_hi = 0;    // chirp end / band top (Hz)
  double am_rate_lo = 0, am_rate_hi = 0;
  double click_rate_lo = 0, click_rate_hi = 0;
  double dur_lo = 1.5, dur_hi = 4.0;

  // Occupied band and modulation signature, for the separability check.
  std::pair<double, double> band() const {
    switch (recipe) {
      case Recipe::sine:
        return {freq_lo * 0.95, freq_hi * 1.05};
      case Recipe::harmonic_stack:
        return {freq_lo * 0.95, freq_hi * 3.1};
      case Recipe::chirp_up:
      case Recipe::chirp_down:
        return {std::min(freq_lo, freq2_lo) * 0.95, std::max(freq_hi, freq2_hi) * 1.05};
      case Recipe::noise_burst:
        return {freq_lo, freq2_hi};
      case Recipe::am_tone:
        return {freq_lo * 0.9, freq_hi * 1.1};
      case Recipe::click_train:
        return {freq_lo * 0.9, freq_hi * 1.1};
      case Recipe::square_wave:
        return {freq_lo * 0.95, freq_hi * 5.2};
    }
    return {0, 0};
  }

  int modulation_tag() const {
    switch (recipe) {
      case Recipe::chirp_up:
        return 1;
      case Recipe::chirp_down:
        return 2;
      case Recipe::am_tone:
        return 3;
      case Recipe::click_train:
        return 4;
      default:
        return 0;
    }
  }
};

inline std::vector<ClassSpec> desk_class_set() {
  std::vector<ClassSpec> cs;
  cs.push_back({0, "sine-220", Recipe::sine, 210, 230});
  cs.push_back({1, "sine-880", Recipe::sine, 850, 910});
  cs.push_back({2, "harmonic-stack", Recipe::harmonic_stack, 1300, 1500});
  cs.push_back({3, "chirp-up", Recipe::chirp_up, 1900, 2100, 3400, 3600});
  cs.push_back({4, "chirp-down", Recipe::chirp_down, 3400, 3600, 1900, 2100});
  ClassSpec nb{5, "noise-burst", Recipe::noise_burst, 4500, 4500, 6000, 6000};
  cs.push_back(nb);
  ClassSpec am{6, "am-tone", Recipe::am_tone, 600, 700};
  am.am_rate_lo = 6;
  am.am_rate_hi = 10;
  cs.push_back(am);
  ClassSpec ck{7, "click-train", Recipe::click_train, 6400, 7000};
  ck.click_rate_lo = 8;
  ck.click_rate_hi = 12;
  cs.push_back(ck);
  return cs;
}

inline void validate_class_specs(const std::vector<ClassSpec>& classes, Index sample_rate) {
  check(classes.size() >= 2, "synth: need at least 2 classes");
  double nyq = sample_rate / 2.0;
  for (const auto& c : classes) {
    auto [lo, hi] = c.band();
    check(hi < nyq, "synth: class '" + c.name + "' occupies frequencies up to " +
                        std::to_string(hi) + " Hz, above Nyquist " + std::to_string(nyq));
    check(c.dur_lo > 0 && c.dur_hi >= c.dur_lo, "synth: class '" + c.name +
                                                    "' has an invalid duration range");
  }
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (std::size_t j = i + 1; j < classes.size(); ++j) {
      auto [alo, ahi] = classes[i].band();
      auto [blo, bhi] = classes[j].band();
      bool bands_disjoint = ahi < blo || bhi < alo;
      bool modulation_differs = classes[i].modulation_tag() != classes[j].modulation_tag();
      check(bands_disjoint || modulation_differs,
            "synth: classes '" + classes[i].name + "' and '" + classes[j].name +
                "' are not separable (same band and modulation)");
    }
}

namespace detail {

template <class V>
double rms_of(const V& x) {
  double acc = 0;
  for (auto v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / std::max<std::size_t>(x.size(), 1));
}

inline void apply_fade(std::vector<float>& x, Index rate, double fade_s = 0.01) {
  Index n = static_cast<Index>(x.size());
  Index f = std::min<Index>(static_cast<Index>(fade_s * rate), n / 2);
  for (Index i = 0; i < f; ++i) {
    double g = 0.5 * (1.0 - std::cos(kPi * i / f));
    x[static_cast<std::size_t>(i)] *= static_cast<float>(g);
    x[static_cast<std::size_t>(n - 1 - i)] *= static_cast<float>(g);
  }
}

inline std::vector<float> synth_event(const ClassSpec& spec, double duration, Index rate,
                                      Rng& rng) {
  Index n = static_cast<Index>(duration * rate);
  std::vector<float> x(static_cast<std::size_t>(n), 0.0f);
  switch (spec.recipe) {
    case Recipe::sine: {
      double f = rng.uniform(spec.freq_lo, spec.freq_hi);
      double ph = rng.uniform(0, 2 * kPi);
      for (Index i = 0; i < n; ++i)
        x[static_cast<std::size_t>(i)] =
            static_cast<float>(std::sin(2 * kPi * f * i / rate + ph));
      break;
    }
    case Recipe::harmonic_stack: {
      double f = rng.uniform(spec.freq_lo, spec.freq_hi);
      for (int h = 1; h <= 3; ++h) {
        double amp = 1.0 / h;
        double ph = rng.uniform(0, 2 * kPi);
        for (Index i = 0; i < n; ++i)
          x[static_cast<std::size_t>(i)] +=
              static_cast<float>(amp * std::sin(2 * kPi * f * h * i / rate + ph));
      }
      break;
    }
    case Recipe::chirp_up:
    case Recipe::chirp_down: {
      double f0 = rng.uniform(spec.freq_lo, spec.freq_hi);
      double f1 = rng.uniform(spec.freq2_lo, spec.freq2_hi);
      double ph = rng.uniform(0, 2 * kPi);
      for (Index i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / rate;
        double T = static_cast<double>(n) / rate;
        double phase = 2 * kPi * (f0 * t + 0.5 * (f1 - f0) / T * t * t) + ph;
        x[static_cast<std::size_t>(i)] = static_cast<float>(std::sin(phase));
      }
      break;
    }
    case Recipe::noise_burst: {
      // Band-limited noise via random-phase spectrum synthesis.
      Index m = 1;
      while (m < n) m <<= 1;
      std::vector<std::complex<float>> spec_buf(static_cast<std::size_t>(m), {0, 0});
      Index b_lo = static_cast<Index>(spec.freq_lo * m / rate);
      Index b_hi = static_cast<Index>(spec.freq2_hi * m / rate);
      for (Index b = b_lo; b <= b_hi && b < m / 2; ++b) {
        double ph = rng.uniform(0, 2 * kPi);
        spec_buf[static_cast<std::size_t>(b)] = {static_cast<float>(std::cos(ph)),
                                                 static_cast<float>(std::sin(ph))};
        spec_buf[static_cast<std::size_t>(m - b)] =
            std::conj(spec_buf[static_cast<std::size_t>(b)]);
      }
      fft_inplace(spec_buf.data(), m, true);
      for (Index i = 0; i < n; ++i)
        x[static_cast<std::size_t>(i)] =
            spec_buf[static_cast<std::size_t>(i)].real() / static_cast<float>(m);
      break;
    }
    case Recipe::am_tone: {
      double f = rng.uniform(spec.freq_lo, spec.freq_hi);
      double mr = rng.uniform(spec.am_rate_lo, spec.am_rate_hi);
      double ph = rng.uniform(0, 2 * kPi);
      constexpr double depth = 0.8;
      for (Index i = 0; i < n; ++i) {
        double t = static_cast<double>(i) / rate;
        double env = (1.0 + depth * std::sin(2 * kPi * mr * t)) / (1.0 + depth);
        x[static_cast<std::size_t>(i)] =
            static_cast<float>(env * std::sin(2 * kPi * f * t + ph));
      }
      break;
    }
    case Recipe::click_train: {
      double f = rng.uniform(spec.freq_lo, spec.freq_hi);
      double cr = rng.uniform(spec.click_rate_lo, spec.click_rate_hi);
      double decay = 300.0;  // 1/s amplitude decay inside each click
      Index step = static_cast<Index>(rate / cr);
      for (Index start = 0; start < n; start += step) {
        Index len = std::min<Index>(n - start, rate / 100);
        for (Index i = 0; i < len; ++i) {
          double t = static_cast<double>(i) / rate;
          x[static_cast<std::size_t>(start + i)] +=
              static_cast<float>(std::exp(-decay * t) * std::sin(2 * kPi * f * t));
        }
      }
      break;
    }
    case Recipe::square_wave: {
      double f = rng.uniform(spec.freq_lo, spec.freq_hi);
      double ph = rng.uniform(0, 2 * kPi);
      for (int h = 1; h <= 5; h += 2) {
        for (Index i = 0; i < n; ++i)
          x[static_cast<std::size_t>(i)] += static_cast<float>(
              std::sin(2 * kPi * f * h * i / rate + ph * h) / h);
      }
      break;
    }
  }
  double r = rms_of(x);
  if (r > 0)
    for (auto& v : x) v = static_cast<float>(v / r);
  apply_fade(x, rate);
  return x;
}

}  // namespace detail

struct GenOptions {
  Index n_train = 4000;
  Index n_eval = 400;
  std::uint64_t seed = 7;
  Index sample_rate = 16000;
  double sample_seconds = 10.0;
  double background_db = -30.0;
  double event_rms = 0.1;
};

/// Isolated 2-s events without background, for queries and the clean/silence
/// protocols. RMS lands in [0.05, 1.0] by construction.
inline std::vector<std::vector<float>> generate_clean_clips(const ClassSpec& spec, Index count,
                                                            std::uint64_t seed, Index rate,
                                                            double seconds = 2.0) {
  check(count >= 1, "generate_clean_clips: count must be >= 1");
  std::vector<std::vector<float>> clips;
  for (Index i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, 0xc11b + static_cast<std::uint64_t>(spec.class_id) * 100003 +
                                  static_cast<std::uint64_t>(i)));
    auto clip = detail::synth_event(spec, seconds, rate, rng);
    double gain_db = rng.uniform(-3.0, 3.0);
    double target = 0.15 * std::pow(10.0, gain_db / 20.0);
    for (auto& v : clip) v = static_cast<float>(v * target);
    clips.push_back(std::move(clip));
  }
  return clips;
}

struct GeneratedSplit {
  std::vector<ManifestEntry> manifest;
  std::vector<SidecarEntry> sidecar;
};

namespace detail {

inline GeneratedSplit generate_split(const std::vector<ClassSpec>& classes,
                                     const GenOptions& opt, const std::string& dir_abs,
                                     const std::string& split, Index count,
                                     std::uint64_t split_tag) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir_abs) / split);
  GeneratedSplit out;
  out.manifest.resize(static_cast<std::size_t>(count));
  out.sidecar.resize(static_cast<std::size_t>(count));
  Index len = static_cast<Index>(opt.sample_seconds * opt.sample_rate);
  double bg_rms = opt.event_rms * std::pow(10.0, opt.background_db / 20.0);

  global_pool().parallel_for(count, [&](Index i) {
    Rng rng(derive_seed(opt.seed, split_tag * 1000003 + static_cast<std::uint64_t>(i)));
    std::vector<float> audio(static_cast<std::size_t>(len));
    for (auto& v : audio) v = static_cast<float>(rng.normal() * bg_rms);

    Index n_events = 1 + static_cast<Index>(rng.below(3));  // 1..3
    std::vector<Index> used;
    std::vector<Index> labels;
    SidecarEntry side;
    char name[32];
    std::snprintf(name, sizeof(name), "%05lld", static_cast<long long>(i));
    std::string id = split + "/" + name;
    side.id = id;

    for (Index e = 0; e < n_events; ++e) {
      Index cls;
      if (e == 0) {
        cls = i % static_cast<Index>(classes.size());  // round-robin floor for balance
      } else {
        cls = static_cast<Index>(rng.below(classes.size()));
        bool dup = false;
        for (Index u : used) dup = dup || u == cls;
        if (dup) continue;
      }
      used.push_back(cls);
      const ClassSpec& spec = classes[static_cast<std::size_t>(cls)];
      double dur = rng.uniform(spec.dur_lo, spec.dur_hi);
      double onset = rng.uniform(0.0, opt.sample_seconds - dur);
      double gain_db = rng.uniform(-3.0, 3.0);
      double target = opt.event_rms * std::pow(10.0, gain_db / 20.0);
      auto ev = synth_event(spec, dur, opt.sample_rate, rng);
      Index start = static_cast<Index>(onset * opt.sample_rate);
      for (std::size_t k = 0; k < ev.size() && start + static_cast<Index>(k) < len; ++k)
        audio[static_cast<std::size_t>(start) + k] += static_cast<float>(ev[k] * target);
      labels.push_back(cls);
      side.events.push_back({cls, onset, onset + dur,
                             20.0 * std::log10(target / bg_rms)});
    }
    std::sort(labels.begin(), labels.end());

    std::string rel = split + "/" + name + ".wav";
    write_wav_pcm16(dir_abs + "/" + rel, audio, opt.sample_rate);
    out.manifest[static_cast<std::size_t>(i)] = {id, rel, labels};
    out.sidecar[static_cast<std::size_t>(i)] = std::move(side);
  });
  return out;
}

}  // namespace detail

/// Writes WAVs, weak manifests, sidecars and corpus metadata. Deterministic
/// for a fixed seed and independent of the worker count.
inline void generate_corpus(const std::vector<ClassSpec>& classes, const GenOptions& opt,
                            const std::string& out_dir) {
  validate_class_specs(classes, opt.sample_rate);
  check(opt.n_train >= 1 && opt.n_eval >= 1, "generate_corpus: counts must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  auto train = detail::generate_split(classes, opt, out_dir, "train", opt.n_train, 1);
  auto eval = detail::generate_split(classes, opt, out_dir, "eval", opt.n_eval, 2);
  save_manifest(out_dir + "/train_manifest.jsonl", train.manifest);
  save_manifest(out_dir + "/eval_manifest.jsonl", eval.manifest);
  save_sidecar(out_dir + "/train_sidecar.jsonl", train.sidecar);
  save_sidecar(out_dir + "/eval_sidecar.jsonl", eval.sidecar);

  CorpusMeta meta;
  meta.sample_rate = opt.sample_rate;
  meta.sample_seconds = opt.sample_seconds;
  meta.seed = opt.seed;
  for (const auto& c : classes) meta.classes.push_back({c.class_id, c.name});
  save_corpus_meta(out_dir + "/corpus_meta.json", meta);
}

}  // namespace zss
