#pragma once

#include <complex>
#include <span>
#include <vector>

#include "zss/fft.hpp"
#include "zss/tensor.hpp"

namespace zss {

// Waveform <-> time-frequency conversions. Analysis configs (mel features for
// the detector) and the separator's STFT config are both DspConfigs; only
// configs whose squared-window overlap-add is constant may drive istft.
struct DspConfig {
  Index sample_rate = 32000;
  Index win_length = 1024;
  Index hop_length = 320;
  Index n_mels = 64;
  Index pad_frames = 24;
  double sample_seconds = 10.0;  // nominal corpus sample length

  static DspConfig paper() { return DspConfig{32000, 1024, 320, 64, 24, 10.0}; }
  static DspConfig desk() { return DspConfig{16000, 512, 160, 32, 24, 10.0}; }
  /// COLA-exact configs (hop = win/4) used on the separation path.
  static DspConfig paper_separator() { return DspConfig{32000, 1024, 256, 64, 0, 2.0}; }
  static DspConfig desk_separator() { return DspConfig{16000, 512, 128, 32, 0, 2.0}; }

  Index n_bins() const { return win_length / 2 + 1; }

  Index content_frames(Index signal_len) const { return (signal_len - 1) / hop_length + 1; }

  /// Frames for the nominal sample length, including the zero padding rows.
  Index frames_total() const {
    return content_frames(static_cast<Index>(sample_seconds * sample_rate)) + pad_frames;
  }

  Index nominal_samples() const { return static_cast<Index>(sample_seconds * sample_rate); }

  void validate() const {
    check(sample_rate > 0, "DspConfig: sample_rate must be positive");
    check(detail::is_pow2(win_length), "DspConfig: win_length " +
                                           std::to_string(win_length) +
                                           " must be a power of two");
    check(hop_length > 0 && hop_length <= win_length,
          "DspConfig: hop_length " + std::to_string(hop_length) +
              " must be in [1, win_length]");
    check(pad_frames >= 0, "DspConfig: pad_frames must be >= 0");
    check(n_mels >= 1 && n_mels <= n_bins(), "DspConfig: n_mels " + std::to_string(n_mels) +
                                                 " exceeds usable bins " +
                                                 std::to_string(n_bins()));
  }

  /// Squared-Hann overlap-add constancy over interior samples, to 1e-10.
  bool cola_ok() const {
    std::vector<double> w(static_cast<std::size_t>(win_length));
    for (Index i = 0; i < win_length; ++i)
      w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / win_length));
    Index span = 4 * win_length;
    std::vector<double> env(static_cast<std::size_t>(span + win_length), 0.0);
    for (Index k = 0; k * hop_length < span; ++k)
      for (Index i = 0; i < win_length; ++i)
        env[static_cast<std::size_t>(k * hop_length + i)] +=
            w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
    double lo = 1e300, hi = -1e300;
    for (Index i = win_length; i < span - win_length; ++i) {
      lo = std::min(lo, env[static_cast<std::size_t>(i)]);
      hi = std::max(hi, env[static_cast<std::size_t>(i)]);
    }
    return hi - lo <= 1e-10 * std::max(1.0, hi);
  }

  void validate_for_istft() const {
    validate();
    check(cola_ok(), "DspConfig: win_length=" + std::to_string(win_length) + " hop_length=" +
                         std::to_string(hop_length) +
                         " does not satisfy the squared-window overlap-add condition");
  }
};

template <class S>
struct ComplexSpectrogram {
  Tensor<S> re, im;  // (frames_total, n_bins); pad_frames zero rows at the end
  DspConfig cfg;
  Index source_length = 0;
  Index content = 0;  // frame rows carrying signal
};

namespace detail {

template <class S>
std::vector<S> hann_window(Index n) {
  std::vector<S> w(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] =
        static_cast<S>(0.5 * (1.0 - std::cos(2.0 * kPi * i / n)));
  return w;
}

// Reflect padding (no edge duplication) so frame k is centered on sample
// k * hop; makes frame/time arithmetic exact for localization.
template <class S>
std::vector<S> center_padded(std::span<const S> x, Index half) {
  Index n = static_cast<Index>(x.size());
  std::vector<S> out(static_cast<std::size_t>(n + 2 * half));
  for (Index i = 0; i < half; ++i) out[static_cast<std::size_t>(i)] = x[half - i];
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(half + i)] = x[i];
  for (Index i = 0; i < half; ++i)
    out[static_cast<std::size_t>(half + n + i)] = x[n - 2 - i];
  return out;
}

}  // namespace detail

template <class S>
ComplexSpectrogram<S> stft(std::span<const S> signal, const DspConfig& cfg) {
  cfg.validate();
  Index n = static_cast<Index>(signal.size());
  check(n > 0, "stft: empty signal");
  check(n >= cfg.win_length, "stft: signal of " + std::to_string(n) +
                                 " samples is shorter than win_length " +
                                 std::to_string(cfg.win_length));
  Index content = cfg.content_frames(n);
  Index frames = content + cfg.pad_frames;
  Index bins = cfg.n_bins();
  auto window = detail::hann_window<S>(cfg.win_length);
  auto padded = detail::center_padded(signal, cfg.win_length / 2);

  Tensor<S> re = Tensor<S>::zeros({frames, bins});
  Tensor<S> im = Tensor<S>::zeros({frames, bins});
  S* pre = re.mutable_data().data();
  S* pim = im.mutable_data().data();
  global_pool().parallel_chunks(content, [&](int, Index lo, Index hi) {
    std::vector<S> frame(static_cast<std::size_t>(cfg.win_length));
    std::vector<std::complex<S>> spec(static_cast<std::size_t>(bins));
    for (Index t = lo; t < hi; ++t) {
      const S* src = padded.data() + t * cfg.hop_length;
      for (Index i = 0; i < cfg.win_length; ++i)
        frame[static_cast<std::size_t>(i)] = src[i] * window[static_cast<std::size_t>(i)];
      rfft(frame.data(), cfg.win_length, spec.data());
      for (Index b = 0; b < bins; ++b) {
        pre[t * bins + b] = spec[static_cast<std::size_t>(b)].real();
        pim[t * bins + b] = spec[static_cast<std::size_t>(b)].imag();
      }
    }
  });
  return ComplexSpectrogram<S>{std::move(re), std::move(im), cfg, n, content};
}

/// Weighted overlap-add inverse. Requires a COLA-satisfying config; trailing
/// pad_frames rows are ignored. Reconstructs exactly source_length samples.
template <class S>
std::vector<S> istft(const ComplexSpectrogram<S>& spec) {
  spec.cfg.validate_for_istft();
  const DspConfig& cfg = spec.cfg;
  Index bins = cfg.n_bins();
  check(spec.re.rank() == 2 && spec.re.dim(1) == bins && spec.re.shape() == spec.im.shape(),
        "istft: spectrogram shape " + shape_str(spec.re.shape()) +
            " does not match config bins " + std::to_string(bins));
  Index content = spec.content;
  check(content >= 1 && content <= spec.re.dim(0), "istft: invalid content frame count");

  Index half = cfg.win_length / 2;
  Index buf_len = (content - 1) * cfg.hop_length + cfg.win_length;
  std::vector<double> acc(static_cast<std::size_t>(buf_len), 0.0);
  std::vector<double> env(static_cast<std::size_t>(buf_len), 0.0);
  auto window = detail::hann_window<S>(cfg.win_length);
  const S* pre = spec.re.data().data();
  const S* pim = spec.im.data().data();

  std::vector<std::complex<S>> row(static_cast<std::size_t>(bins));
  std::vector<S> frame(static_cast<std::size_t>(cfg.win_length));
  for (Index t = 0; t < content; ++t) {
    for (Index b = 0; b < bins; ++b)
      row[static_cast<std::size_t>(b)] = {pre[t * bins + b], pim[t * bins + b]};
    irfft(row.data(), cfg.win_length, frame.data());
    double* a = acc.data() + t * cfg.hop_length;
    double* e = env.data() + t * cfg.hop_length;
    for (Index i = 0; i < cfg.win_length; ++i) {
      double w = window[static_cast<std::size_t>(i)];
      a[i] += w * frame[static_cast<std::size_t>(i)];
      e[i] += w * w;
    }
  }

  Index out_len = spec.source_length > 0 ? spec.source_length
                                         : (content - 1) * cfg.hop_length + 1;
  check(out_len + half <= buf_len + half, "istft: inconsistent source length");
  std::vector<S> out(static_cast<std::size_t>(out_len), S(0));
  for (Index i = 0; i < out_len; ++i) {
    Index j = i + half;
    if (j < buf_len && env[static_cast<std::size_t>(j)] > 1e-11)
      out[static_cast<std::size_t>(i)] =
          static_cast<S>(acc[static_cast<std::size_t>(j)] / env[static_cast<std::size_t>(j)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel features
// ---------------------------------------------------------------------------

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Triangular HTK-scale filterbank spanning 0 Hz .. Nyquist, each row
/// normalized to unit sum. Row-major (n_mels, n_bins).
template <class S>
std::vector<S> mel_filterbank(const DspConfig& cfg) {
  cfg.validate();
  Index bins = cfg.n_bins();
  Index m = cfg.n_mels;
  double nyq = cfg.sample_rate / 2.0;
  double mel_hi = hz_to_mel(nyq);
  std::vector<double> edges(static_cast<std::size_t>(m + 2));
  for (Index i = 0; i < m + 2; ++i)
    edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_hi * i / (m + 1));

  std::vector<S> fb(static_cast<std::size_t>(m * bins), S(0));
  double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.win_length;
  for (Index f = 0; f < m; ++f) {
    double lo = edges[static_cast<std::size_t>(f)];
    double c = edges[static_cast<std::size_t>(f + 1)];
    double hi = edges[static_cast<std::size_t>(f + 2)];
    double row_sum = 0;
    for (Index b = 0; b < bins; ++b) {
      // The DC bin is evaluated at half the first bin's width so it lands on
      // the first filter's rising slope instead of exactly at the 0 Hz edge.
      double freq = b == 0 ? 0.5 * bin_hz : b * bin_hz;
      double w = 0;
      if (freq > lo && freq < c)
        w = (freq - lo) / (c - lo);
      else if (freq >= c && freq < hi)
        w = (hi - freq) / (hi - c);
      fb[static_cast<std::size_t>(f * bins + b)] = static_cast<S>(w);
      row_sum += w;
    }
    check(row_sum > 0, "mel_filterbank: filter " + std::to_string(f) +
                           " covers no FFT bin; n_mels too large for win_length");
    for (Index b = 0; b < bins; ++b)
      fb[static_cast<std::size_t>(f * bins + b)] /= static_cast<S>(row_sum);
  }
  return fb;
}

inline constexpr double kLogMelEps = 1e-10;

/// Log-compressed mel spectrogram (frames_total, n_mels) of a waveform,
/// power spectrum through the filterbank, natural log with eps floor.
template <class S>
Tensor<S> mel_spectrogram(std::span<const S> signal, const DspConfig& cfg) {
  auto spec = stft(signal, cfg);
  Index frames = spec.re.dim(0);
  Index bins = cfg.n_bins();
  auto fb = mel_filterbank<S>(cfg);
  Tensor<S> mel = Tensor<S>::zeros({frames, cfg.n_mels});
  S* out = mel.mutable_data().data();
  const S* pre = spec.re.data().data();
  const S* pim = spec.im.data().data();
  global_pool().parallel_chunks(frames, [&](int, Index lo, Index hi) {
    std::vector<S> power(static_cast<std::size_t>(bins));
    for (Index t = lo; t < hi; ++t) {
      for (Index b = 0; b < bins; ++b) {
        S re = pre[t * bins + b], im = pim[t * bins + b];
        power[static_cast<std::size_t>(b)] = re * re + im * im;
      }
      for (Index f = 0; f < cfg.n_mels; ++f) {
        double acc = 0;
        const S* row = fb.data() + f * bins;
        for (Index b = 0; b < bins; ++b) acc += row[b] * power[static_cast<std::size_t>(b)];
        out[t * cfg.n_mels + f] = static_cast<S>(std::log(acc + kLogMelEps));
      }
    }
  });
  return mel;
}

// ---------------------------------------------------------------------------
// Differentiable iSTFT
// ---------------------------------------------------------------------------

namespace detail {

// One sample of weighted-OLA istft on raw rows; shared by the op's forward
// and (through linearity) its adjoint.
template <class S>
void istft_rows(const S* re, const S* im, Index frames, const DspConfig& cfg, Index out_len,
                S* out) {
  Index bins = cfg.n_bins();
  Index half = cfg.win_length / 2;
  Index buf_len = (frames - 1) * cfg.hop_length + cfg.win_length;
  std::vector<double> acc(static_cast<std::size_t>(buf_len), 0.0);
  std::vector<double> env(static_cast<std::size_t>(buf_len), 0.0);
  auto window = hann_window<S>(cfg.win_length);
  std::vector<std::complex<S>> row(static_cast<std::size_t>(bins));
  std::vector<S> frame(static_cast<std::size_t>(cfg.win_length));
  for (Index t = 0; t < frames; ++t) {
    for (Index b = 0; b < bins; ++b)
      row[static_cast<std::size_t>(b)] = {re[t * bins + b], im[t * bins + b]};
    irfft(row.data(), cfg.win_length, frame.data());
    double* a = acc.data() + t * cfg.hop_length;
    double* e = env.data() + t * cfg.hop_length;
    for (Index i = 0; i < cfg.win_length; ++i) {
      double w = window[static_cast<std::size_t>(i)];
      a[i] += w * frame[static_cast<std::size_t>(i)];
      e[i] += w * w;
    }
  }
  for (Index i = 0; i < out_len; ++i) {
    Index j = i + half;
    out[i] = (j < buf_len && env[static_cast<std::size_t>(j)] > 1e-11)
                 ? static_cast<S>(acc[static_cast<std::size_t>(j)] /
                                  env[static_cast<std::size_t>(j)])
                 : S(0);
  }
}

// Adjoint of istft_rows with respect to (re, im).
template <class S>
void istft_rows_adjoint(const S* dout, Index out_len, const DspConfig& cfg, Index frames,
                        S* dre, S* dim) {
  Index bins = cfg.n_bins();
  Index half = cfg.win_length / 2;
  Index buf_len = (frames - 1) * cfg.hop_length + cfg.win_length;
  auto window = hann_window<S>(cfg.win_length);
  // Rebuild the normalization envelope.
  std::vector<double> env(static_cast<std::size_t>(buf_len), 0.0);
  for (Index t = 0; t < frames; ++t) {
    double* e = env.data() + t * cfg.hop_length;
    for (Index i = 0; i < cfg.win_length; ++i) {
      double w = window[static_cast<std::size_t>(i)];
      e[i] += w * w;
    }
  }
  std::vector<double> gbuf(static_cast<std::size_t>(buf_len), 0.0);
  for (Index i = 0; i < out_len; ++i) {
    Index j = i + half;
    if (j < buf_len && env[static_cast<std::size_t>(j)] > 1e-11)
      gbuf[static_cast<std::size_t>(j)] = dout[i] / env[static_cast<std::size_t>(j)];
  }
  std::vector<S> frame(static_cast<std::size_t>(cfg.win_length));
  std::vector<std::complex<S>> spec(static_cast<std::size_t>(bins));
  double inv_n = 1.0 / cfg.win_length;
  for (Index t = 0; t < frames; ++t) {
    const double* g = gbuf.data() + t * cfg.hop_length;
    for (Index i = 0; i < cfg.win_length; ++i)
      frame[static_cast<std::size_t>(i)] =
          static_cast<S>(g[i] * window[static_cast<std::size_t>(i)]);
    rfft(frame.data(), cfg.win_length, spec.data());
    for (Index b = 0; b < bins; ++b) {
      double c = (b == 0 || b == cfg.win_length / 2) ? 1.0 : 2.0;
      dre[t * bins + b] += static_cast<S>(c * inv_n * spec[static_cast<std::size_t>(b)].real());
      dim[t * bins + b] += static_cast<S>(c * inv_n * spec[static_cast<std::size_t>(b)].imag());
    }
  }
}

}  // namespace detail

/// Tape-aware iSTFT: (N, frames, bins) real/imag parts -> (N, out_len)
/// waveforms. Linear, so the backward pass is the exact adjoint.
template <class S>
Tensor<S> istft_op(const Tensor<S>& re, const Tensor<S>& im, const DspConfig& cfg,
                   Index out_len) {
  cfg.validate_for_istft();
  check(re.rank() == 3 && re.shape() == im.shape() && re.dim(2) == cfg.n_bins(),
        "istft_op: expected (N, frames, bins) with bins " + std::to_string(cfg.n_bins()) +
            ", got " + shape_str(re.shape()) + " and " + shape_str(im.shape()));
  Index N = re.dim(0), frames = re.dim(1), bins = re.dim(2);
  std::vector<S> out(static_cast<std::size_t>(N * out_len));
  global_pool().parallel_for(N, [&](Index n) {
    detail::istft_rows(re.data().data() + n * frames * bins,
                       im.data().data() + n * frames * bins, frames, cfg, out_len,
                       out.data() + n * out_len);
  });
  Tensor<S> rev = re, imv = im;
  return detail::make_op<S>(
      Shape{N, out_len}, std::move(out), {re, im},
      [rev, imv, cfg, N, frames, bins, out_len](detail::Node<S>& self) {
        S* gre = rev.node()->ensure_grad();
        S* gim = imv.node()->ensure_grad();
        const S* dy = self.grad.data();
        global_pool().parallel_for(N, [&](Index n) {
          detail::istft_rows_adjoint(dy + n * out_len, out_len, cfg, frames,
                                     gre + n * frames * bins, gim + n * frames * bins);
        });
      });
}

// ---------------------------------------------------------------------------
// Frame / time arithmetic
// ---------------------------------------------------------------------------

/// Center time of a featuremap frame whose resolution was reduced by
/// merge_factor from the STFT frame grid.
inline double frame_to_time(Index frame_index, Index merge_factor, const DspConfig& cfg) {
  Index fmap_len = cfg.frames_total() / merge_factor;
  check(frame_index >= 0 && frame_index < fmap_len,
        "frame_to_time: index " + std::to_string(frame_index) +
            " outside featuremap of length " + std::to_string(fmap_len));
  return (frame_index + 0.5) * merge_factor * cfg.hop_length / cfg.sample_rate;
}

inline Index time_to_frame(double seconds, Index merge_factor, const DspConfig& cfg) {
  double step = static_cast<double>(merge_factor) * cfg.hop_length / cfg.sample_rate;
  Index idx = static_cast<Index>(std::floor(seconds / step));
  Index fmap_len = cfg.frames_total() / merge_factor;
  return std::clamp<Index>(idx, 0, fmap_len - 1);
}

}  // namespace zss
