#include "topoplan/synthetic.hpp"

#include <cmath>

#include "topoplan/error.hpp"

namespace topoplan {

namespace {

constexpr double kParamBytes = 2.0;      // bf16
constexpr double kOptimizerBytes = 12.0;  // fp32 master copy + two Adam moments
constexpr double kEmbeddingLatency = 1e-4;

// Mild efficiency loss per doubling of the tensor width.
double tensor_scale(int t) { return (1.0 + 0.05 * std::log2(static_cast<double>(t))) / t; }

}  // namespace

ModelGraph transformer_profile(const TransformerShape& s) {
  if (s.layers < 1 || s.hidden < 1 || s.heads < 1 || s.kv_heads < 1 || s.seq_len < 1 || s.vocab < 1) {
    fail(ErrorKind::InvalidArgument, "transformer shape needs positive dimensions");
  }
  const double h = s.hidden;
  const double seq = s.seq_len;
  const double b = s.micro_batch_size;
  const double tokens = seq * b;
  const double boundary = 2.0 * tokens * h;

  ModelGraph g;
  g.global_batch = s.global_batch;
  g.micro_batch_size = s.micro_batch_size;
  g.schedule = s.schedule;

  auto add_layer = [&](bool embedding, double params, double fwd, double act_full, double out_boundary,
                       auto&& activation_for) {
    LayerProfile l;
    l.id = static_cast<int>(g.layers.size());
    l.is_embedding = embedding;
    l.weight_bytes = params * kParamBytes;
    l.optimizer_state_bytes = params * kOptimizerBytes;
    l.activation_bytes = act_full;
    l.boundary_activation_bytes = out_boundary;
    for (int t : s.tensor_widths) {
      VariantCost v;
      v.shape = {t, 1, 1, false};
      v.fwd_latency = fwd * tensor_scale(t);
      v.bwd_latency = 2.0 * v.fwd_latency;
      v.sharded_weight_bytes = l.weight_bytes / t;
      v.sharded_activation_bytes = activation_for(t);
      if (t > 1) v.collectives.push_back({CollectiveKind::AllReduce, (embedding ? 2.0 : 4.0) * boundary});
      l.variants.push_back(std::move(v));
    }
    g.layers.push_back(std::move(l));
  };

  const double embed_params = static_cast<double>(s.vocab) * h;
  add_layer(true, embed_params, kEmbeddingLatency, boundary, boundary, [&](int) { return boundary; });

  const double kv = h * s.kv_heads / s.heads;
  const double params = 2.0 * h * h + 2.0 * h * kv + (s.gated_mlp ? 3.0 : 2.0) * h * s.ffn;
  const double flops = 2.0 * params * tokens + 4.0 * seq * seq * h * b;
  const double attn_ratio = 5.0 * s.heads * seq / h;
  auto act = [&](int t) { return tokens * h * (10.0 + 24.0 / t + attn_ratio / t); };
  for (int i = 0; i < s.layers; ++i) {
    add_layer(false, params, flops / s.device_flops, act(1), boundary, act);
  }

  if (s.separate_head) {
    const double logits = 4.0 * tokens * s.vocab;
    const double head_flops = 2.0 * embed_params * tokens;
    add_layer(false, embed_params, head_flops / s.device_flops, logits, 0.0,
              [&](int t) { return logits / t; });
  }
  g.validate();
  return g;
}

ModelGraph uniform_profile(const UniformShape& s) {
  if (s.layers < 1) fail(ErrorKind::InvalidArgument, "uniform profile needs at least one layer");
  ModelGraph g;
  g.global_batch = s.global_batch;
  g.micro_batch_size = s.micro_batch_size;
  for (int i = 0; i < s.layers; ++i) {
    LayerProfile l;
    l.id = i;
    l.weight_bytes = s.weight_bytes;
    l.optimizer_state_bytes = s.optimizer_bytes;
    l.activation_bytes = s.activation_bytes;
    l.boundary_activation_bytes = s.boundary_bytes;
    VariantCost v;
    v.fwd_latency = s.fwd_s;
    v.bwd_latency = s.bwd_s;
    v.sharded_weight_bytes = s.weight_bytes;
    v.sharded_activation_bytes = s.activation_bytes;
    l.variants.push_back(v);
    g.layers.push_back(std::move(l));
  }
  g.validate();
  return g;
}

std::vector<std::string> synthetic_model_names() { return {"bert_large", "gpt3_175b", "llama3_70b", "uniform24"}; }

ModelGraph synthetic_model(const std::string& name) {
  if (name == "llama3_70b") {
    TransformerShape s;
    s.layers = 80;
    s.hidden = 8192;
    s.ffn = 28672;
    s.heads = 64;
    s.kv_heads = 8;
    s.vocab = 128256;
    s.seq_len = 6144;
    s.gated_mlp = true;
    s.global_batch = 4096;
    return transformer_profile(s);
  }
  if (name == "gpt3_175b") {
    TransformerShape s;
    s.layers = 96;
    s.hidden = 12288;
    s.ffn = 4 * 12288;
    s.heads = 96;
    s.kv_heads = 96;
    s.vocab = 50257;
    s.seq_len = 2048;
    s.separate_head = true;
    s.tensor_widths = {1, 2, 4, 8};
    s.global_batch = 1536;
    return transformer_profile(s);
  }
  if (name == "bert_large") {
    TransformerShape s;
    s.global_batch = 4096;
    return transformer_profile(s);
  }
  if (name == "uniform24") return uniform_profile({});
  fail(ErrorKind::InvalidArgument, "unknown synthetic model '" + name + "'");
}

}  // namespace topoplan
