#pragma once

#include <string>
#include <vector>

#include "topoplan/graph.hpp"

namespace topoplan {

// Decoder-only transformer profile built from layer hyperparameters using
// standard parameter, FLOP and activation-memory counts (bf16 weights, fp32
// Adam state; activation bytes partly shrink with the tensor width).
struct TransformerShape {
  int layers = 24;
  int hidden = 1024;
  int ffn = 4096;
  int heads = 16;
  int kv_heads = 16;
  int vocab = 30522;
  int seq_len = 512;
  bool gated_mlp = false;  // SwiGLU: three ffn matrices instead of two
  bool separate_head = false;  // untied output projection as its own layer
  std::vector<int> tensor_widths{1};
  double device_flops = 400e12;  // sustained per device
  int global_batch = 512;
  int micro_batch_size = 1;
  Schedule schedule = Schedule::OneFOneB;
};

ModelGraph transformer_profile(const TransformerShape& shape);

// Identical layers with the given per-layer costs, one t=1 variant.
struct UniformShape {
  int layers = 24;
  double fwd_s = 1.0 / 3.0 * 1e-3;
  double bwd_s = 2.0 / 3.0 * 1e-3;
  double weight_bytes = 0.5e9;
  double optimizer_bytes = 3e9;
  double activation_bytes = 0.1e9;
  double boundary_bytes = 32e6;
  int global_batch = 64;
  int micro_batch_size = 1;
};

ModelGraph uniform_profile(const UniformShape& shape);

// Named presets: llama3_70b, gpt3_175b, bert_large, uniform24.
ModelGraph synthetic_model(const std::string& name);
std::vector<std::string> synthetic_model_names();

}  // namespace topoplan
