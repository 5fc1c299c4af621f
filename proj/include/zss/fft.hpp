#pragma once

#include <complex>
#include <map>
#include <vector>

#include "zss/common.hpp"

namespace zss {

namespace detail {

inline bool is_pow2(Index n) { return n > 0 && (n & (n - 1)) == 0; }

template <class S>
const std::vector<std::complex<S>>& twiddles(Index n, bool inverse) {
  thread_local std::map<std::pair<Index, bool>, std::vector<std::complex<S>>> cache;
  auto key = std::make_pair(n, inverse);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<S>> tw(static_cast<std::size_t>(n / 2));
  double sign = inverse ? 1.0 : -1.0;
  for (Index i = 0; i < n / 2; ++i) {
    double a = sign * 2.0 * kPi * i / n;
    tw[static_cast<std::size_t>(i)] = {static_cast<S>(std::cos(a)), static_cast<S>(std::sin(a))};
  }
  return cache.emplace(key, std::move(tw)).first->second;
}

}  // namespace detail

/// In-place iterative radix-2 FFT. n must be a power of two.
/// Inverse transform is unnormalized (scale by 1/n yourself).
template <class S>
void fft_inplace(std::complex<S>* a, Index n, bool inverse) {
  check(detail::is_pow2(n), "fft: size " + std::to_string(n) + " is not a power of two");
  // Bit-reversal permutation.
  for (Index i = 1, j = 0; i < n; ++i) {
    Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& tw = detail::twiddles<S>(n, inverse);
  for (Index len = 2; len <= n; len <<= 1) {
    Index step = n / len;
    for (Index i = 0; i < n; i += len) {
      for (Index j = 0; j < len / 2; ++j) {
        std::complex<S> w = tw[static_cast<std::size_t>(j * step)];
        std::complex<S> u = a[i + j];
        std::complex<S> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

/// Real-input FFT: n samples -> n/2 + 1 bins.
template <class S>
void rfft(const S* in, Index n, std::complex<S>* out) {
  std::vector<std::complex<S>> buf(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = {in[i], S(0)};
  fft_inplace(buf.data(), n, false);
  for (Index i = 0; i <= n / 2; ++i) out[i] = buf[static_cast<std::size_t>(i)];
}

/// Inverse of rfft: n/2 + 1 bins -> n real samples (includes the 1/n scale).
template <class S>
void irfft(const std::complex<S>* in, Index n, S* out) {
  std::vector<std::complex<S>> buf(static_cast<std::size_t>(n));
  for (Index i = 0; i <= n / 2; ++i) buf[static_cast<std::size_t>(i)] = in[i];
  for (Index i = n / 2 + 1; i < n; ++i)
    buf[static_cast<std::size_t>(i)] = std::conj(in[n - i]);
  fft_inplace(buf.data(), n, true);
  S inv = S(1) / static_cast<S>(n);
  for (Index i = 0; i < n; ++i) out[i] = buf[static_cast<std::size_t>(i)].real() * inv;
}

}  // namespace zss
