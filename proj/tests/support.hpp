#pragma once

#include <string>

#include "pathforge/kg.hpp"

namespace pathforge::testing {

inline std::string data_path(const std::string& name) { return std::string(PATHFORGE_DATA_DIR) + "/" + name; }
inline std::string fixture_path(const std::string& name) { return std::string(PATHFORGE_FIXTURE_DIR) + "/" + name; }

inline Node make_node(std::string id, std::string name, NodeKind kind, NodeSource src = NodeSource::GraphA,
                      std::set<std::string> ext = {}) {
  Node n;
  n.id = std::move(id);
  n.name = std::move(name);
  n.kind = kind;
  n.source = src;
  n.external_ids = std::move(ext);
  return n;
}

}  // namespace pathforge::testing
