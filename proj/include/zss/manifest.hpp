#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zss/common.hpp"

namespace zss {

// Weak-label corpus manifest: one JSON record per line, labels only. Event
// times live in the eval-only sidecar, which training code never reads.

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the corpus root
  std::vector<Index> labels;
};

struct ClassInfo {
  Index class_id = 0;
  std::string name;
};

struct CorpusMeta {
  Index sample_rate = 16000;
  double sample_seconds = 10.0;
  std::uint64_t seed = 0;
  std::vector<ClassInfo> classes;

  Index class_by_name(const std::string& name) const {
    for (const auto& c : classes)
      if (c.name == name) return c.class_id;
    fail("corpus: unknown class name '" + name + "'");
  }
};

inline void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "manifest: cannot open '" + path + "' for writing");
  for (const auto& e : entries) {
    nlohmann::json j;
    j["id"] = e.id;
    j["path"] = e.path;
    j["labels"] = e.labels;
    f << j.dump() << '\n';
  }
  check(f.good(), "manifest: write to '" + path + "' failed");
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), "manifest: cannot open '" + path + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.labels = j.at("labels").get<std::vector<Index>>();
    check(!e.labels.empty(), "manifest: sample '" + e.id + "' has no labels");
    out.push_back(std::move(e));
  }
  check(!out.empty(), "manifest: '" + path + "' is empty");
  return out;
}

inline void save_corpus_meta(const std::string& path, const CorpusMeta& meta) {
  nlohmann::json j;
  j["sample_rate"] = meta.sample_rate;
  j["sample_seconds"] = meta.sample_seconds;
  j["seed"] = meta.seed;
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : meta.classes) cs.push_back({{"id", c.class_id}, {"name", c.name}});
  j["classes"] = cs;
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "corpus meta: cannot open '" + path + "' for writing");
  f << j.dump(2) << '\n';
}

inline CorpusMeta load_corpus_meta(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), "corpus meta: cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(f);
  CorpusMeta meta;
  meta.sample_rate = j.at("sample_rate").get<Index>();
  meta.sample_seconds = j.at("sample_seconds").get<double>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& c : j.at("classes"))
    meta.classes.push_back({c.at("id").get<Index>(), c.at("name").get<std::string>()});
  return meta;
}

}  // namespace zss
