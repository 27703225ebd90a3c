#pragma once

#include <vector>

#include "topoplan/graph.hpp"
#include "topoplan/netmodel.hpp"

namespace th {

inline topoplan::LayerProfile layer(int id, double fwd, double bwd, double w, double opt, double act,
                                    double boundary) {
  topoplan::LayerProfile l;
  l.id = id;
  l.weight_bytes = w;
  l.optimizer_state_bytes = opt;
  l.activation_bytes = act;
  l.boundary_activation_bytes = boundary;
  topoplan::VariantCost v;
  v.fwd_latency = fwd;
  v.bwd_latency = bwd;
  v.sharded_weight_bytes = w;
  v.sharded_activation_bytes = act;
  l.variants.push_back(v);
  return l;
}

inline topoplan::ModelGraph chain(int layers, double fwd, double bwd, int global_batch = 4) {
  topoplan::ModelGraph g;
  for (int i = 0; i < layers; ++i) g.layers.push_back(layer(i, fwd, bwd, 1e6, 2e6, 1e6, 1e5));
  g.global_batch = global_batch;
  g.micro_batch_size = 1;
  return g;
}

// One level per (capacity, alpha, beta) triple.
inline topoplan::LevelCostMatrix matrix(std::vector<topoplan::LevelCostMatrix::Row> rows) {
  const int total = rows.back().capacity;
  return topoplan::LevelCostMatrix(std::move(rows), total);
}

}  // namespace th
