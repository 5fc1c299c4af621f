#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "zss/common.hpp"

namespace zss {

// Mono WAV, 16-bit PCM or 32-bit IEEE float. Resampling is out of scope:
// readers must state the rate they expect and mismatches are rejected.

namespace detail {

struct WavHeader {
  std::uint16_t format = 0;  // 1 = PCM, 3 = IEEE float
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  std::uint32_t data_offset = 0;
  std::uint32_t data_bytes = 0;
};

inline WavHeader parse_wav_header(std::ifstream& f, const std::string& path) {
  char riff[4], wave[4];
  std::uint32_t riff_size = 0;
  f.read(riff, 4);
  f.read(reinterpret_cast<char*>(&riff_size), 4);
  f.read(wave, 4);
  check(f.good() && std::memcmp(riff, "RIFF", 4) == 0 && std::memcmp(wave, "WAVE", 4) == 0,
        "wav: '" + path + "' is not a RIFF/WAVE file");
  WavHeader h;
  while (f.good()) {
    char id[4];
    std::uint32_t size = 0;
    f.read(id, 4);
    f.read(reinterpret_cast<char*>(&size), 4);
    if (!f.good()) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> fmt(size);
      f.read(fmt.data(), size);
      check(size >= 16, "wav: short fmt chunk in '" + path + "'");
      std::memcpy(&h.format, fmt.data(), 2);
      std::memcpy(&h.channels, fmt.data() + 2, 2);
      std::memcpy(&h.sample_rate, fmt.data() + 4, 4);
      std::memcpy(&h.bits, fmt.data() + 14, 2);
    } else if (std::memcmp(id, "data", 4) == 0) {
      h.data_offset = static_cast<std::uint32_t>(f.tellg());
      h.data_bytes = size;
      break;
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  check(h.data_bytes > 0, "wav: no data chunk in '" + path + "'");
  return h;
}

}  // namespace detail

template <class S>
std::vector<S> read_wav(const std::string& path, Index expected_rate) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "wav: cannot open '" + path + "'");
  auto h = detail::parse_wav_header(f, path);
  check(h.channels == 1, "wav: '" + path + "' has " + std::to_string(h.channels) +
                             " channels, expected mono");
  check(static_cast<Index>(h.sample_rate) == expected_rate,
        "wav: '" + path + "' is sampled at " + std::to_string(h.sample_rate) +
            " Hz, expected " + std::to_string(expected_rate));
  f.seekg(h.data_offset);
  if (h.format == 1 && h.bits == 16) {
    std::size_t n = h.data_bytes / 2;
    std::vector<std::int16_t> raw(n);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
    check(f.good(), "wav: truncated data in '" + path + "'");
    std::vector<S> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<S>(raw[i] / 32768.0);
    return out;
  }
  if (h.format == 3 && h.bits == 32) {
    std::size_t n = h.data_bytes / 4;
    std::vector<float> raw(n);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
    check(f.good(), "wav: truncated data in '" + path + "'");
    std::vector<S> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<S>(raw[i]);
    return out;
  }
  fail("wav: '" + path + "' has unsupported format (need 16-bit PCM or 32-bit float)");
}

template <class S>
void write_wav_pcm16(const std::string& path, const std::vector<S>& samples, Index rate) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "wav: cannot open '" + path + "' for writing");
  std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::uint32_t riff_size = 36 + data_bytes;
  std::uint16_t fmt = 1, channels = 1, bits = 16;
  std::uint32_t sr = static_cast<std::uint32_t>(rate);
  std::uint32_t byte_rate = sr * 2;
  std::uint16_t block_align = 2;
  std::uint32_t fmt_size = 16;
  f.write("RIFF", 4);
  f.write(reinterpret_cast<char*>(&riff_size), 4);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  f.write(reinterpret_cast<char*>(&fmt_size), 4);
  f.write(reinterpret_cast<char*>(&fmt), 2);
  f.write(reinterpret_cast<char*>(&channels), 2);
  f.write(reinterpret_cast<char*>(&sr), 4);
  f.write(reinterpret_cast<char*>(&byte_rate), 4);
  f.write(reinterpret_cast<char*>(&block_align), 2);
  f.write(reinterpret_cast<char*>(&bits), 2);
  f.write("data", 4);
  f.write(reinterpret_cast<char*>(&data_bytes), 4);
  std::vector<std::int16_t> pcm(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double v = std::clamp(static_cast<double>(samples[i]), -1.0, 1.0);
    pcm[i] = static_cast<std::int16_t>(std::lround(v * 32767.0));
  }
  f.write(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(pcm.size() * 2));
  check(f.good(), "wav: write to '" + path + "' failed");
}

template <class S>
void write_wav_float32(const std::string& path, const std::vector<S>& samples, Index rate) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "wav: cannot open '" + path + "' for writing");
  std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  std::uint32_t riff_size = 36 + data_bytes;
  std::uint16_t fmt = 3, channels = 1, bits = 32;
  std::uint32_t sr = static_cast<std::uint32_t>(rate);
  std::uint32_t byte_rate = sr * 4;
  std::uint16_t block_align = 4;
  std::uint32_t fmt_size = 16;
  f.write("RIFF", 4);
  f.write(reinterpret_cast<char*>(&riff_size), 4);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  f.write(reinterpret_cast<char*>(&fmt_size), 4);
  f.write(reinterpret_cast<char*>(&fmt), 2);
  f.write(reinterpret_cast<char*>(&channels), 2);
  f.write(reinterpret_cast<char*>(&sr), 4);
  f.write(reinterpret_cast<char*>(&byte_rate), 4);
  f.write(reinterpret_cast<char*>(&block_align), 2);
  f.write(reinterpret_cast<char*>(&bits), 2);
  f.write("data", 4);
  f.write(reinterpret_cast<char*>(&data_bytes), 4);
  std::vector<float> raw(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) raw[i] = static_cast<float>(samples[i]);
  f.write(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  check(f.good(), "wav: write to '" + path + "' failed");
}

}  // namespace zss
