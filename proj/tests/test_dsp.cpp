#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "grad_check.hpp"
#include "zss/dsp.hpp"
#include "zss/wav.hpp"

using Catch::Approx;
using zss::DspConfig;
using zss::Index;

namespace {

std::vector<double> sine(double freq, double seconds, Index rate, double amp = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = amp * std::sin(2.0 * zss::kPi * freq * i / rate);
  return x;
}

std::vector<double> noise(double seconds, Index rate, std::uint64_t seed) {
  zss::Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(seconds * rate));
  for (auto& v : x) v = rng.uniform(-0.5, 0.5);
  return x;
}

double snr_db(const std::vector<double>& ref, const std::vector<double>& est, Index skip) {
  double num = 0, den = 0;
  for (Index i = skip; i < static_cast<Index>(ref.size()) - skip; ++i) {
    num += ref[i] * ref[i];
    double e = ref[i] - est[i];
    den += e * e;
  }
  return 10.0 * std::log10(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("stft of a zero 10-second signal at the paper preset", "[dsp][stft]") {
  DspConfig cfg = DspConfig::paper();
  std::vector<double> x(static_cast<std::size_t>(10 * cfg.sample_rate), 0.0);
  auto spec = zss::stft<double>(x, cfg);
  REQUIRE(spec.re.shape() == zss::Shape{1024, 513});
  REQUIRE(spec.content == 1000);
  for (double v : spec.re.data()) REQUIRE(v == 0.0);
  for (double v : spec.im.data()) REQUIRE(v == 0.0);
}

TEST_CASE("10 s at the paper preset gives 1000 content frames plus 24 pad frames",
          "[dsp][stft]") {
  DspConfig cfg = DspConfig::paper();
  REQUIRE(cfg.content_frames(10 * cfg.sample_rate) == 1000);
  REQUIRE(cfg.frames_total() == 1024);
  DspConfig desk = DspConfig::desk();
  REQUIRE(desk.content_frames(10 * desk.sample_rate) == 1000);
  REQUIRE(desk.frames_total() == 1024);
}

TEST_CASE("1 kHz sine peaks at bin 32 on every interior frame", "[dsp][stft]") {
  DspConfig cfg = DspConfig::paper();
  auto x = sine(1000.0, 2.0, cfg.sample_rate);
  auto spec = zss::stft<double>(x, cfg);
  Index bins = cfg.n_bins();
  // Closed form: 1000 Hz * 1024 / 32000 Hz = bin 32 exactly.
  for (Index t = 4; t < spec.content - 4; ++t) {
    Index best = 0;
    double best_mag = -1;
    for (Index b = 0; b < bins; ++b) {
      double re = spec.re.at({t, b}), im = spec.im.at({t, b});
      double mag = re * re + im * im;
      if (mag > best_mag) {
        best_mag = mag;
        best = b;
      }
    }
    REQUIRE(best == 32);
  }
}

TEST_CASE("stft rejects an empty signal", "[dsp][stft][errors]") {
  std::vector<double> empty;
  REQUIRE_THROWS_AS(zss::stft<double>(empty, DspConfig::paper()), std::invalid_argument);
}

TEST_CASE("COLA holds at separator presets and fails at analysis presets", "[dsp][cola]") {
  REQUIRE(DspConfig::paper_separator().cola_ok());
  REQUIRE(DspConfig::desk_separator().cola_ok());
  REQUIRE_FALSE(DspConfig::paper().cola_ok());
  REQUIRE_FALSE(DspConfig::desk().cola_ok());
  // Rejection happens at istft config validation.
  auto x = noise(2.0, 32000, 7);
  auto spec = zss::stft<double>(x, DspConfig::paper());
  REQUIRE_THROWS_AS(zss::istft(spec), std::invalid_argument);
}

TEST_CASE("istft(stft(x)) round-trip SNR exceeds 120 dB in 64-bit", "[dsp][istft]") {
  DspConfig cfg = DspConfig::desk_separator();
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    auto x = noise(2.0, cfg.sample_rate, seed);
    auto spec = zss::stft<double>(x, cfg);
    auto y = zss::istft(spec);
    REQUIRE(y.size() == x.size());
    REQUIRE(snr_db(x, y, cfg.win_length / 2) >= 120.0);
  }
}

TEST_CASE("istft(stft(x)) round-trip SNR exceeds 60 dB in 32-bit", "[dsp][istft]") {
  DspConfig cfg = DspConfig::desk_separator();
  zss::Rng rng(11);
  std::vector<float> x(static_cast<std::size_t>(2 * cfg.sample_rate));
  for (auto& v : x) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  auto spec = zss::stft<float>(x, cfg);
  auto y = zss::istft(spec);
  double num = 0, den = 0;
  for (Index i = cfg.win_length / 2; i < static_cast<Index>(x.size()) - cfg.win_length / 2;
       ++i) {
    num += double(x[i]) * x[i];
    double e = double(x[i]) - y[i];
    den += e * e;
  }
  REQUIRE(10.0 * std::log10(num / den) >= 60.0);
}

TEST_CASE("istft of a zero spectrogram is a zero waveform", "[dsp][istft]") {
  DspConfig cfg = DspConfig::desk_separator();
  auto x = noise(2.0, cfg.sample_rate, 3);
  auto spec = zss::stft<double>(x, cfg);
  for (auto& v : spec.re.mutable_data()) v = 0;
  for (auto& v : spec.im.mutable_data()) v = 0;
  auto y = zss::istft(spec);
  for (double v : y) REQUIRE(v == 0.0);
}

TEST_CASE("istft is linear", "[dsp][istft][property]") {
  DspConfig cfg = DspConfig::desk_separator();
  auto xa = noise(2.0, cfg.sample_rate, 21);
  auto xb = noise(2.0, cfg.sample_rate, 22);
  auto sa = zss::stft<double>(xa, cfg);
  auto sb = zss::stft<double>(xb, cfg);
  auto sum = sa;
  sum.re = zss::add(sa.re, sb.re);
  sum.im = zss::add(sa.im, sb.im);
  auto ya = zss::istft(sa);
  auto yb = zss::istft(sb);
  auto ys = zss::istft(sum);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    double expect = ya[i] + yb[i];
    REQUIRE(ys[i] == Approx(expect).margin(1e-10 * std::max(1.0, std::abs(expect))));
  }
}

TEST_CASE("mel of a zero signal is log(eps) everywhere", "[dsp][mel]") {
  DspConfig cfg = DspConfig::desk();
  std::vector<double> x(static_cast<std::size_t>(10 * cfg.sample_rate), 0.0);
  auto mel = zss::mel_spectrogram<double>(x, cfg);
  REQUIRE(mel.shape() == zss::Shape{1024, 32});
  for (double v : mel.data()) REQUIRE(v == Approx(std::log(1e-10)));
}

TEST_CASE("mel filterbank rows sum to one and cover all bins below Nyquist", "[dsp][mel]") {
  for (DspConfig cfg : {DspConfig::paper(), DspConfig::desk()}) {
    auto fb = zss::mel_filterbank<double>(cfg);
    Index bins = cfg.n_bins();
    for (Index f = 0; f < cfg.n_mels; ++f) {
      double total = 0;
      for (Index b = 0; b < bins; ++b) {
        double v = fb[static_cast<std::size_t>(f * bins + b)];
        REQUIRE(v >= 0.0);
        total += v;
      }
      REQUIRE(total == Approx(1.0).margin(1e-9));
    }
    for (Index b = 0; b + 1 < bins; ++b) {
      double cover = 0;
      for (Index f = 0; f < cfg.n_mels; ++f)
        cover += fb[static_cast<std::size_t>(f * bins + b)];
      REQUIRE(cover > 0.0);
    }
  }
}

TEST_CASE("sine at a filter center frequency peaks at that filter", "[dsp][mel]") {
  DspConfig cfg = DspConfig::desk();
  double mel_hi = zss::hz_to_mel(cfg.sample_rate / 2.0);
  for (Index f : {5, 10, 20, 28}) {
    double center_hz = zss::mel_to_hz(mel_hi * (f + 1) / (cfg.n_mels + 1));
    auto x = sine(center_hz, 1.0, cfg.sample_rate);
    auto mel = zss::mel_spectrogram<double>(x, cfg);
    Index frames = cfg.content_frames(static_cast<Index>(x.size()));
    for (Index t = 8; t < frames - 8; t += 17) {
      Index best = 0;
      double best_v = -1e300;
      for (Index m = 0; m < cfg.n_mels; ++m)
        if (mel.at({t, m}) > best_v) {
          best_v = mel.at({t, m});
          best = m;
        }
      REQUIRE(best == f);
    }
  }
}

TEST_CASE("mel rejects n_mels exceeding usable bins", "[dsp][mel][errors]") {
  DspConfig cfg = DspConfig::desk();
  cfg.n_mels = cfg.n_bins() + 1;
  REQUIRE_THROWS_AS(zss::mel_filterbank<double>(cfg), std::invalid_argument);
}

TEST_CASE("frame_to_time formula and round trip", "[dsp][frames]") {
  DspConfig cfg = DspConfig::paper();
  REQUIRE(zss::frame_to_time(0, 32, cfg) == Approx(0.16));
  REQUIRE(zss::frame_to_time(12, 32, cfg) == Approx(4.0));
  Index fmap_len = cfg.frames_total() / 32;
  for (Index i = 0; i < fmap_len; ++i)
    REQUIRE(zss::time_to_frame(zss::frame_to_time(i, 32, cfg), 32, cfg) == i);
  REQUIRE_THROWS_AS(zss::frame_to_time(fmap_len, 32, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(zss::frame_to_time(-1, 32, cfg), std::invalid_argument);
}

TEST_CASE("istft_op matches istft and has exact adjoint gradients", "[dsp][autodiff]") {
  DspConfig small{1600, 16, 4, 8, 0, 0.02};
  REQUIRE(small.cola_ok());
  auto x = noise(0.02, small.sample_rate, 31);  // 32 samples
  auto spec = zss::stft<double>(x, small);
  Index frames = spec.content, bins = small.n_bins();
  zss::Tensor<double> re = zss::reshape(spec.re, {1, frames, bins});
  zss::Tensor<double> im = zss::reshape(spec.im, {1, frames, bins});
  Index out_len = static_cast<Index>(x.size());

  auto wave = zss::istft_op(re.detach(), im.detach(), small, out_len);
  auto direct = zss::istft(spec);
  for (Index i = 0; i < out_len; ++i)
    REQUIRE(wave.at({0, i}) == Approx(direct[static_cast<std::size_t>(i)]).margin(1e-12));

  auto res = gradcheck::compare(
      [&](const std::vector<gradcheck::DTensor>& in) {
        return gradcheck::weighted_sum(zss::istft_op(in[0], in[1], small, out_len));
      },
      {re.detach(), im.detach()});
  REQUIRE(res.max_rel_error < 1e-4);
}

TEST_CASE("wav round trips in both supported formats", "[dsp][wav]") {
  auto dir = std::filesystem::temp_directory_path();
  auto x = noise(0.25, 16000, 5);
  std::string pf = (dir / "zss_f32.wav").string();
  std::string pp = (dir / "zss_p16.wav").string();
  zss::write_wav_float32(pf, x, 16000);
  zss::write_wav_pcm16(pp, x, 16000);
  auto xf = zss::read_wav<double>(pf, 16000);
  auto xp = zss::read_wav<double>(pp, 16000);
  REQUIRE(xf.size() == x.size());
  REQUIRE(xp.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    REQUIRE(xf[i] == Approx(x[i]).margin(1e-7));
    REQUIRE(xp[i] == Approx(x[i]).margin(1.0 / 32000.0));
  }
  REQUIRE_THROWS_AS(zss::read_wav<double>(pf, 32000), std::invalid_argument);
  std::remove(pf.c_str());
  std::remove(pp.c_str());
}
