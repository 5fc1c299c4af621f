#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>

#include <json.hpp>

#include "zss/tensor.hpp"

namespace zss {

// Checkpoint container: [u64 little-endian header length][UTF-8 JSON header]
// [contiguous little-endian payload]. The header maps tensor name to
// {shape, dtype, byte offset into the payload}. Round trips are bit-exact.

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace detail {

template <class S>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
  return "f32";
}
template <>
inline const char* dtype_name<double>() {
  return "f64";
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const NamedParams<S>& tensors) {
  nlohmann::json header;
  header["format"] = "zss-checkpoint-v1";
  nlohmann::json entries = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["shape"] = t.shape();
    e["dtype"] = detail::dtype_name<S>();
    e["offset"] = offset;
    entries[name] = e;
    offset += static_cast<std::uint64_t>(t.numel()) * sizeof(S);
  }
  header["tensors"] = entries;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  check(f.good(), "save_checkpoint: cannot open '" + path + "' for writing");
  std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(S)));
  check(f.good(), "save_checkpoint: write to '" + path + "' failed");
}

/// Loads every tensor in the file. Shapes come from the header.
template <class S>
NamedParams<S> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load_checkpoint: cannot open '" + path + "'");
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  check(f.good() && hlen > 0 && hlen < (1ull << 30), "load_checkpoint: bad header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  check(f.good(), "load_checkpoint: truncated header in '" + path + "'");
  nlohmann::json header = nlohmann::json::parse(hs);
  check(header.value("format", "") == "zss-checkpoint-v1",
        "load_checkpoint: '" + path + "' is not a checkpoint file");

  // Header offsets are relative to the payload start.
  std::uint64_t payload_start = sizeof(hlen) + hlen;
  std::map<std::uint64_t, std::string> by_offset;
  for (auto& [name, e] : header["tensors"].items())
    by_offset[e["offset"].template get<std::uint64_t>()] = name;

  NamedParams<S> out;
  for (const auto& [offset, name] : by_offset) {
    const auto& e = header["tensors"][name];
    check(e["dtype"].template get<std::string>() == detail::dtype_name<S>(),
          "load_checkpoint: tensor '" + name + "' has dtype " +
              e["dtype"].template get<std::string>() + ", expected " + detail::dtype_name<S>());
    Shape shape = e["shape"].template get<Shape>();
    Tensor<S> t = Tensor<S>::zeros(shape);
    f.seekg(static_cast<std::streamoff>(payload_start + offset));
    f.read(reinterpret_cast<char*>(t.mutable_data().data()),
           static_cast<std::streamsize>(t.numel() * sizeof(S)));
    check(f.good(), "load_checkpoint: truncated payload for tensor '" + name + "'");
    out.emplace_back(name, std::move(t));
  }
  return out;
}

/// Copies checkpoint values into an existing parameter list by name.
template <class S>
void restore_params(const NamedParams<S>& loaded, NamedParams<S>& params) {
  std::map<std::string, const Tensor<S>*> index;
  for (const auto& [name, t] : loaded) index[name] = &t;
  for (auto& [name, p] : params) {
    auto it = index.find(name);
    check(it != index.end(), "restore_params: checkpoint is missing tensor '" + name + "'");
    check(it->second->shape() == p.shape(),
          "restore_params: tensor '" + name + "' has shape " +
              shape_str(it->second->shape()) + ", expected " + shape_str(p.shape()));
    p.mutable_data() = it->second->data();
  }
}

}  // namespace zss
