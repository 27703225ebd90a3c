#include "topoplan/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "topoplan/error.hpp"

namespace topoplan {

using json = nlohmann::json;

namespace {

std::string level_name(int l) { return "level " + std::to_string(l); }

// Looks up a generator parameter, falling back to a default.
class Params {
 public:
  Params(const std::string& kind, const std::map<std::string, double>& values,
         std::set<std::string> known)
      : kind_(kind), values_(values) {
    for (const auto& [k, v] : values) {
      if (!known.count(k)) fail(ErrorKind::InvalidArgument, kind + ": unknown parameter '" + k + "'");
      if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, kind + ": parameter '" + k + "' is not finite");
    }
  }

  double real(const std::string& key, double fallback, bool positive = true) const {
    auto it = values_.find(key);
    double v = it == values_.end() ? fallback : it->second;
    if (positive ? v <= 0.0 : v < 0.0) {
      fail(ErrorKind::InvalidArgument,
           kind_ + ": parameter '" + key + "' must be " + (positive ? "> 0" : ">= 0"));
    }
    return v;
  }

  int count(const std::string& key, int fallback) const {
    double v = real(key, fallback);
    if (v != std::floor(v) || v > 1e9) {
      fail(ErrorKind::InvalidArgument, kind_ + ": parameter '" + key + "' must be a positive integer");
    }
    return static_cast<int>(v);
  }

 private:
  std::string kind_;
  const std::map<std::string, double>& values_;
};

constexpr double kGB = 1e9;

}  // namespace

void TopologySpec::validate() const {
  if (levels.empty()) fail(ErrorKind::InvalidArgument, "topology needs at least one level");
  if (num_levels() > kMaxLevels) {
    fail(ErrorKind::InvalidArgument, "topology has " + std::to_string(num_levels()) +
                                         " levels; at most " + std::to_string(kMaxLevels) +
                                         " are supported, collapse the hierarchy first");
  }
  if (total_devices < 1) fail(ErrorKind::InvalidArgument, "total_devices must be >= 1");
  if (total_devices > 65535) fail(ErrorKind::InvalidArgument, "total_devices must be <= 65535");
  for (int l = 0; l < num_levels(); ++l) {
    const auto& lv = levels[l];
    if (lv.capacity < 1) fail(ErrorKind::InvalidArgument, level_name(l) + ": capacity must be >= 1");
    if (!(lv.bandwidth_Bps > 0.0) || !std::isfinite(lv.bandwidth_Bps)) {
      fail(ErrorKind::InvalidArgument, level_name(l) + ": bandwidth_Bps must be > 0");
    }
    if (!(lv.alpha_s >= 0.0) || !std::isfinite(lv.alpha_s)) {
      fail(ErrorKind::InvalidArgument, level_name(l) + ": alpha_s must be >= 0");
    }
    if (!(lv.oversubscription >= 1.0) || !std::isfinite(lv.oversubscription)) {
      fail(ErrorKind::InvalidArgument, level_name(l) + ": oversubscription must be >= 1");
    }
    if (l > 0) {
      const auto& below = levels[l - 1];
      if (lv.capacity <= below.capacity) {
        fail(ErrorKind::InvalidArgument, level_name(l) + ": capacity must exceed " +
                                             level_name(l - 1) + " capacity");
      }
      if (lv.capacity % below.capacity != 0) {
        fail(ErrorKind::InvalidArgument, level_name(l) + ": capacity must be a multiple of " +
                                             level_name(l - 1) + " capacity");
      }
    }
  }
  if (levels.back().capacity != total_devices) {
    fail(ErrorKind::InvalidArgument, "top level capacity " + std::to_string(levels.back().capacity) +
                                         " must equal total_devices " + std::to_string(total_devices));
  }
}

TopologySpec parse_topology(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, origin + ": " + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::Parse, origin + ": top level must be an object");
  try {
    if (doc.contains("template")) {
      std::map<std::string, double> params;
      if (doc.contains("params")) {
        for (const auto& [k, v] : doc.at("params").items()) params[k] = v.get<double>();
      }
      return gen_topology(doc.at("template").get<std::string>(), params);
    }
    TopologySpec t;
    t.total_devices = doc.at("total_devices").get<int>();
    const auto& levels = doc.at("levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto& jl = levels[i];
      LevelSpec l;
      l.capacity = jl.at("capacity").get<int>();
      l.bandwidth_Bps = jl.at("bandwidth_Bps").get<double>();
      l.alpha_s = jl.value("alpha_s", 0.0);
      l.oversubscription = jl.value("oversubscription", 1.0);
      t.levels.push_back(l);
    }
    t.validate();
    return t;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, origin + ": " + e.what());
  }
}

TopologySpec load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open topology '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_topology(buf.str(), path);
}

std::string topology_to_json(const TopologySpec& t) {
  json doc;
  doc["total_devices"] = t.total_devices;
  json levels = json::array();
  for (const auto& l : t.levels) {
    levels.push_back({{"capacity", l.capacity},
                      {"bandwidth_Bps", l.bandwidth_Bps},
                      {"alpha_s", l.alpha_s},
                      {"oversubscription", l.oversubscription}});
  }
  doc["levels"] = std::move(levels);
  return doc.dump(2) + "\n";
}

TopologySpec gen_topology(const std::string& kind, const std::map<std::string, double>& values) {
  TopologySpec t;
  if (kind == "hgx_node") {
    Params p(kind, values, {"devices", "bandwidth_GBps", "alpha_s"});
    t.total_devices = p.count("devices", 8);
    t.levels.push_back({t.total_devices, p.real("bandwidth_GBps", 900) * kGB,
                        p.real("alpha_s", 1e-6, false), 1.0});
  } else if (kind == "fat_tree") {
    Params p(kind, values,
             {"devices", "node_size", "nodes_per_switch", "node_GBps", "switch_GBps", "agg_GBps",
              "node_alpha_s", "switch_alpha_s", "agg_alpha_s", "path_bottleneck"});
    const int node = p.count("node_size", 8);
    const int rack = node * p.count("nodes_per_switch", 4);
    t.total_devices = p.count("devices", 1024);
    const double bw0 = p.real("node_GBps", 900) * kGB;
    const double bw1 = p.real("switch_GBps", 100) * kGB;
    double bw2 = p.real("agg_GBps", 400) * kGB;
    // A flow that leaves the rack also crosses the first-level switch, so its
    // per-flow bandwidth is capped by that tier unless told otherwise.
    if (p.real("path_bottleneck", 1.0, false) != 0.0) bw2 = std::min(bw2, bw1);
    t.levels.push_back({std::min(node, t.total_devices), bw0, p.real("node_alpha_s", 1e-6, false), 1.0});
    if (t.total_devices > node) {
      if (t.total_devices > rack) {
        t.levels.push_back({rack, bw1, p.real("switch_alpha_s", 5e-6, false), 1.0});
        t.levels.push_back({t.total_devices, bw2, p.real("agg_alpha_s", 1e-5, false), 1.0});
      } else {
        t.levels.push_back({t.total_devices, bw1, p.real("switch_alpha_s", 5e-6, false), 1.0});
      }
    }
  } else if (kind == "spine_leaf") {
    Params p(kind, values,
             {"devices", "node_size", "nodes_per_leaf", "node_GBps", "leaf_GBps", "oversub",
              "node_alpha_s", "leaf_alpha_s", "spine_alpha_s"});
    const int node = p.count("node_size", 8);
    const int leaf = node * p.count("nodes_per_leaf", 4);
    t.total_devices = p.count("devices", 64);
    const double leaf_bw = p.real("leaf_GBps", 12.5) * kGB;
    t.levels.push_back({std::min(node, t.total_devices), p.real("node_GBps", 900) * kGB, p.real("node_alpha_s", 1e-6, false), 1.0});
    if (t.total_devices > node) {
      t.levels.push_back({std::min(leaf, t.total_devices), leaf_bw,
                          p.real("leaf_alpha_s", 5e-6, false), 1.0});
      if (t.total_devices > leaf) {
        const double oversub = p.real("oversub", 2.0);
        if (oversub < 1.0) fail(ErrorKind::InvalidArgument, "spine_leaf: 'oversub' must be >= 1");
        t.levels.push_back({t.total_devices, leaf_bw, p.real("spine_alpha_s", 1e-5, false), oversub});
      }
    }
  } else if (kind == "torus") {
    // Devices are numbered tile-major: 1x2 tiles, then 2x2 tiles, so each
    // hop-distance class is an aligned block of device ids.
    Params p(kind, values, {"x", "y", "link_GBps", "hop_alpha_s", "remote_share"});
    const int x = p.count("x", 4);
    const int y = p.count("y", 4);
    if (x % 2 != 0 || y % 2 != 0) fail(ErrorKind::InvalidArgument, "torus: x and y must be even");
    const double bw = p.real("link_GBps", 100) * kGB;
    const double hop = p.real("hop_alpha_s", 1e-6, false);
    const double share = p.real("remote_share", 2.0);
    if (share < 1.0) fail(ErrorKind::InvalidArgument, "torus: 'remote_share' must be >= 1");
    t.total_devices = x * y;
    const int remote_hops = std::max(2, x / 2 + y / 2);
    t.levels.push_back({2, bw, hop, 1.0});
    if (t.total_devices > 4) {
      t.levels.push_back({4, bw, 2 * hop, 1.0});
      t.levels.push_back({t.total_devices, bw, remote_hops * hop, share});
    } else if (t.total_devices == 4) {
      t.levels.push_back({4, bw, 2 * hop, 1.0});
    }
  } else {
    fail(ErrorKind::InvalidArgument,
         "unknown topology template '" + kind + "' (expected hgx_node, fat_tree, spine_leaf, torus)");
  }
  t.validate();
  build_level_matrix(t);
  return t;
}

LevelCostMatrix::LevelCostMatrix(std::vector<Row> rows, int total_devices)
    : rows_(std::move(rows)), total_(total_devices) {}

const LevelCostMatrix::Row& LevelCostMatrix::row(int level) const {
  if (level < 0 || level >= num_levels()) {
    fail(ErrorKind::InvalidArgument, "invalid level index " + std::to_string(level));
  }
  return rows_[level];
}

double LevelCostMatrix::p2p_time(int level, double bytes) const {
  const Row& r = row(level);
  return r.alpha + bytes * r.beta;
}

double LevelCostMatrix::collective_time(CollectiveKind kind, int n, double bytes, int level) const {
  const Row& r = row(level);
  if (n < 1) fail(ErrorKind::InvalidArgument, "collective needs at least one participant");
  if (n == 1) return 0.0;
  const double steps = n - 1;
  const double frac = steps / n;
  if (kind == CollectiveKind::AllReduce) return 2.0 * steps * r.alpha + 2.0 * frac * bytes * r.beta;
  return steps * r.alpha + frac * bytes * r.beta;
}

int LevelCostMatrix::tightest_level(int n) const {
  if (n < 1 || n > total_) {
    fail(ErrorKind::InvalidArgument, "device count " + std::to_string(n) + " outside [1, " +
                                         std::to_string(total_) + "]");
  }
  for (int l = 0; l < num_levels(); ++l) {
    if (rows_[l].capacity >= n) return l;
  }
  return num_levels() - 1;
}

int LevelCostMatrix::span_level(int first, int count) const {
  const int last = first + count - 1;
  for (int l = 0; l + 1 < num_levels(); ++l) {
    if (first / rows_[l].capacity == last / rows_[l].capacity) return l;
  }
  return num_levels() - 1;
}

LevelCostMatrix LevelCostMatrix::flattened() const {
  return LevelCostMatrix({{total_, rows_.front().alpha, rows_.front().beta}}, total_);
}

LevelCostMatrix build_level_matrix(const TopologySpec& t) {
  t.validate();
  std::vector<LevelCostMatrix::Row> rows;
  for (int l = 0; l < t.num_levels(); ++l) {
    const auto& lv = t.levels[l];
    rows.push_back({lv.capacity, lv.alpha_s, lv.beta()});
    if (l > 0) {
      const auto& lo = rows[l - 1];
      const auto& hi = rows[l];
      if (hi.alpha < lo.alpha || hi.beta < lo.beta) {
        std::ostringstream os;
        os << "non-monotone topology: " << level_name(l) << " (alpha " << hi.alpha << " s, beta "
           << hi.beta << " s/B) is cheaper than " << level_name(l - 1) << " (alpha " << lo.alpha
           << " s, beta " << lo.beta << " s/B)";
        fail(ErrorKind::InvalidArgument, os.str());
      }
    }
  }
  return LevelCostMatrix(std::move(rows), t.total_devices);
}

}  // namespace topoplan
