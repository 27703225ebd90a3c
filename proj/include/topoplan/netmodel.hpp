#pragma once

#include <map>
#include <string>
#include <vector>

#include "topoplan/graph.hpp"

namespace topoplan {

inline constexpr int kMaxLevels = 5;

struct LevelSpec {
  int capacity = 1;             // devices per group at this level
  double bandwidth_Bps = 1.0;   // per-flow link bandwidth crossing this level
  double alpha_s = 0.0;         // per-message latency
  double oversubscription = 1.0;

  double beta() const { return oversubscription / bandwidth_Bps; }
};

struct TopologySpec {
  std::vector<LevelSpec> levels;  // level 0 is the tightest
  int total_devices = 0;

  int num_levels() const { return static_cast<int>(levels.size()); }
  void validate() const;
};

TopologySpec load_topology(const std::string& path);
TopologySpec parse_topology(const std::string& text, const std::string& origin = "<memory>");
std::string topology_to_json(const TopologySpec& t);

// kind is one of hgx_node, fat_tree, spine_leaf, torus. Unknown parameter
// names are rejected so typos do not silently fall back to defaults.
TopologySpec gen_topology(const std::string& kind, const std::map<std::string, double>& params);

class LevelCostMatrix {
 public:
  struct Row {
    int capacity;
    double alpha;
    double beta;
  };

  LevelCostMatrix() = default;
  LevelCostMatrix(std::vector<Row> rows, int total_devices);

  int num_levels() const { return static_cast<int>(rows_.size()); }
  int total_devices() const { return total_; }
  const Row& row(int level) const;

  double p2p_time(int level, double bytes) const;
  double collective_time(CollectiveKind kind, int n, double bytes, int level) const;

  // Smallest level whose groups hold n devices.
  int tightest_level(int n) const;
  // Smallest level with one group containing devices [first, first + count).
  int span_level(int first, int count) const;

  // Single-level matrix over all devices priced at this matrix's level 0.
  LevelCostMatrix flattened() const;

 private:
  std::vector<Row> rows_;
  int total_ = 0;
};

// Rejects topologies where a higher level is cheaper than a lower one.
LevelCostMatrix build_level_matrix(const TopologySpec& t);

}  // namespace topoplan
