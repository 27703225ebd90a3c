#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <vector>

namespace topoplan {

enum class CollectiveKind { AllReduce = 0, AllGather, ReduceScatter, AllToAll };
inline constexpr std::size_t kNumCollectiveKinds = 4;

const char* to_string(CollectiveKind kind);
CollectiveKind collective_from_string(const std::string& name);

struct CollectiveDemand {
  CollectiveKind kind = CollectiveKind::AllReduce;
  double bytes = 0.0;  // per forward+backward microbatch
};

// Intra-layer parallel shape: tensor width t, expert degree e, context degree c,
// and whether activations are sequence-sharded by t.
struct ParallelVariant {
  int tensor = 1;
  int expert = 1;
  int context = 1;
  bool sequence_parallel = false;

  int devices_per_replica() const { return tensor * expert * context; }

  auto operator<=>(const ParallelVariant&) const = default;
};

std::string to_string(const ParallelVariant& v);

struct VariantCost {
  ParallelVariant shape;
  double fwd_latency = 0.0;  // seconds per microbatch
  double bwd_latency = 0.0;
  double sharded_weight_bytes = 0.0;
  double sharded_activation_bytes = 0.0;
  std::vector<CollectiveDemand> collectives;
};

struct LayerProfile {
  int id = 0;
  bool is_embedding = false;
  double weight_bytes = 0.0;
  double optimizer_state_bytes = 0.0;
  double activation_bytes = 0.0;
  double boundary_activation_bytes = 0.0;
  std::vector<VariantCost> variants;

  const VariantCost* find(const ParallelVariant& shape) const;
};

enum class Schedule { OneFOneB, GPipe };

const char* to_string(Schedule s);
Schedule schedule_from_string(const std::string& name);

struct ModelGraph {
  std::vector<LayerProfile> layers;
  int global_batch = 1;
  int micro_batch_size = 1;
  Schedule schedule = Schedule::OneFOneB;

  int num_layers() const { return static_cast<int>(layers.size()); }

  // Total unsharded weight bytes; the gradient volume synchronized across
  // data-parallel replicas once per batch.
  double total_weight_bytes() const;

  // Throws Error(InvalidArgument) naming the offending layer and field.
  void validate() const;
};

// A contiguous suffix [start, L) of the layer chain.
struct Downset {
  int start = 0;
  auto operator<=>(const Downset&) const = default;
};

// Additive per-replica costs of a layer range [first, last) under one variant.
struct StageProfile {
  int first = 0;
  int last = 0;
  ParallelVariant variant;
  double fwd_latency = 0.0;
  double bwd_latency = 0.0;
  double weight_bytes = 0.0;  // unsharded
  double sharded_weight_bytes = 0.0;
  double optimizer_state_bytes = 0.0;  // sharded like the weights
  double activation_bytes = 0.0;       // sharded, per microbatch
  double input_activation_bytes = 0.0;     // boundary of layer first-1, 0 at the head
  double boundary_activation_bytes = 0.0;  // boundary of layer last-1
  std::array<double, kNumCollectiveKinds> collective_bytes{};

  int num_layers() const { return last - first; }
};

ModelGraph load_model_spec(const std::string& path);
ModelGraph parse_model_spec(const std::string& text, const std::string& origin = "<memory>");
std::string model_to_json(const ModelGraph& g);

std::vector<Downset> enumerate_downsets(const ModelGraph& g);

// Throws Error(InvalidArgument) when a layer in range lacks the variant.
StageProfile stage_aggregate(const ModelGraph& g, int first, int last, const ParallelVariant& v);

// Adds layer `layer` (which must be `sp.last`) to a running aggregate.
// stage_aggregate is exactly a left fold of this.
void extend_stage(StageProfile& sp, const LayerProfile& layer, const VariantCost& cost);

// Copy of `g` with per-microbatch quantities scaled linearly to `micro_batch_size`.
ModelGraph rescale_microbatch(const ModelGraph& g, int micro_batch_size);

// Distinct variant shapes offered anywhere in the chain, sorted.
std::vector<ParallelVariant> variant_shapes(const ModelGraph& g);

}  // namespace topoplan
