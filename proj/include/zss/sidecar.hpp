#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zss/common.hpp"

namespace zss {

// Ground-truth event annotations for generated samples. This header is the
// only reader of the sidecar files and must never be included from training
// code paths (the generator writes it, evaluation consumes it); an
// architectural test enforces the boundary.

struct SidecarEvent {
  Index class_id = 0;
  double onset = 0;
  double offset = 0;
  double snr_db = 0;
};

struct SidecarEntry {
  std::string id;
  std::vector<SidecarEvent> events;
};

inline void save_sidecar(const std::string& path, const std::vector<SidecarEntry>& entries) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "sidecar: cannot open '" + path + "' for writing");
  for (const auto& e : entries) {
    nlohmann::json j;
    j["id"] = e.id;
    nlohmann::json evs = nlohmann::json::array();
    for (const auto& ev : e.events)
      evs.push_back({{"class", ev.class_id},
                     {"onset", ev.onset},
                     {"offset", ev.offset},
                     {"snr_db", ev.snr_db}});
    j["events"] = evs;
    f << j.dump() << '\n';
  }
  check(f.good(), "sidecar: write to '" + path + "' failed");
}

inline std::map<std::string, SidecarEntry> load_sidecar(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), "sidecar: cannot open '" + path + "'");
  std::map<std::string, SidecarEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    SidecarEntry e;
    e.id = j.at("id").get<std::string>();
    for (const auto& ev : j.at("events"))
      e.events.push_back({ev.at("class").get<Index>(), ev.at("onset").get<double>(),
                          ev.at("offset").get<double>(), ev.at("snr_db").get<double>()});
    out[e.id] = std::move(e);
  }
  check(!out.empty(), "sidecar: '" + path + "' is empty");
  return out;
}

}  // namespace zss
