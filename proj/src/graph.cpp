#include "topoplan/graph.hpp"

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

constexpr std::array<const char*, kNumCollectiveKinds> kCollectiveNames = {
    "allreduce", "allgather", "reducescatter", "alltoall"};

std::string layer_ctx(int index, int id) {
  std::ostringstream os;
  os << "layer " << index << " (id " << id << ")";
  return os.str();
}

void check_bytes(double value, const std::string& ctx, const char* field) {
  if (!std::isfinite(value) || value < 0.0) {
    std::ostringstream os;
    os << ctx << ": field '" << field << "' must be finite and >= 0, got " << value;
    fail(ErrorKind::InvalidArgument, os.str());
  }
}

// Reads a required member with a message that names the json path.
template <typename T>
T read_field(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) {
    fail(ErrorKind::Parse, ctx + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, ctx + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

const char* to_string(CollectiveKind kind) {
  return kCollectiveNames[static_cast<std::size_t>(kind)];
}

CollectiveKind collective_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kNumCollectiveKinds; ++i) {
    if (name == kCollectiveNames[i]) return static_cast<CollectiveKind>(i);
  }
  fail(ErrorKind::Parse, "unknown collective kind '" + name + "'");
}

std::string to_string(const ParallelVariant& v) {
  std::ostringstream os;
  os << "t=" << v.tensor << ",e=" << v.expert << ",c=" << v.context
     << (v.sequence_parallel ? ",seq" : "");
  return os.str();
}

const char* to_string(Schedule s) { return s == Schedule::GPipe ? "gpipe" : "1f1b"; }

Schedule schedule_from_string(const std::string& name) {
  if (name == "1f1b" || name == "OneFOneB") return Schedule::OneFOneB;
  if (name == "gpipe" || name == "GPipe") return Schedule::GPipe;
  fail(ErrorKind::Parse, "unknown schedule '" + name + "'");
}

const VariantCost* LayerProfile::find(const ParallelVariant& shape) const {
  for (const auto& v : variants) {
    if (v.shape == shape) return &v;
  }
  return nullptr;
}

double ModelGraph::total_weight_bytes() const {
  double total = 0.0;
  for (const auto& l : layers) total += l.weight_bytes;
  return total;
}

void ModelGraph::validate() const {
  if (global_batch < 1) fail(ErrorKind::InvalidArgument, "global_batch must be >= 1");
  if (micro_batch_size < 1) fail(ErrorKind::InvalidArgument, "micro_batch_size must be >= 1");
  if (global_batch % micro_batch_size != 0) {
    fail(ErrorKind::InvalidArgument, "global_batch must be divisible by micro_batch_size");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string ctx = layer_ctx(static_cast<int>(i), l.id);
    if (i > 0 && l.id <= layers[i - 1].id) {
      fail(ErrorKind::InvalidArgument, ctx + ": layer ids must be strictly increasing");
    }
    check_bytes(l.weight_bytes, ctx, "weight_bytes");
    check_bytes(l.optimizer_state_bytes, ctx, "optimizer_state_bytes");
    check_bytes(l.activation_bytes, ctx, "activation_bytes");
    check_bytes(l.boundary_activation_bytes, ctx, "boundary_activation_bytes");
    if (l.variants.empty()) fail(ErrorKind::InvalidArgument, ctx + ": variants must be non-empty");
    std::set<ParallelVariant> seen;
    for (const auto& v : l.variants) {
      const std::string vctx = ctx + " variant " + to_string(v.shape);
      if (v.shape.tensor < 1 || v.shape.expert < 1 || v.shape.context < 1) {
        fail(ErrorKind::InvalidArgument, vctx + ": t, e, c must be >= 1");
      }
      if (!seen.insert(v.shape).second) {
        fail(ErrorKind::InvalidArgument, vctx + ": duplicate variant");
      }
      check_bytes(v.fwd_latency, vctx, "fwd_latency_s");
      check_bytes(v.bwd_latency, vctx, "bwd_latency_s");
      check_bytes(v.sharded_weight_bytes, vctx, "sharded_weight_bytes");
      check_bytes(v.sharded_activation_bytes, vctx, "sharded_activation_bytes");
      if (v.sharded_weight_bytes > l.weight_bytes) {
        fail(ErrorKind::InvalidArgument,
             vctx + ": field 'sharded_weight_bytes' exceeds unsharded weight_bytes");
      }
      if (v.sharded_activation_bytes > l.activation_bytes) {
        fail(ErrorKind::InvalidArgument,
             vctx + ": field 'sharded_activation_bytes' exceeds unsharded activation_bytes");
      }
      for (const auto& c : v.collectives) check_bytes(c.bytes, vctx, "collectives.bytes");
    }
  }
}

ModelGraph parse_model_spec(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, origin + ": " + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::Parse, origin + ": top level must be an object");

  ModelGraph g;
  g.global_batch = read_field<int>(doc, "global_batch", origin);
  g.micro_batch_size = read_field<int>(doc, "micro_batch_size", origin);
  g.schedule = schedule_from_string(read_field<std::string>(doc, "schedule", origin));

  const auto layers = read_field<json>(doc, "layers", origin);
  if (!layers.is_array()) fail(ErrorKind::Parse, origin + ": 'layers' must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& jl = layers[i];
    const std::string ctx = origin + ": layers[" + std::to_string(i) + "]";
    LayerProfile l;
    l.id = read_field<int>(jl, "id", ctx);
    l.is_embedding = jl.value("is_embedding", false);
    l.weight_bytes = read_field<double>(jl, "weight_bytes", ctx);
    l.optimizer_state_bytes = read_field<double>(jl, "optimizer_state_bytes", ctx);
    l.activation_bytes = read_field<double>(jl, "activation_bytes", ctx);
    l.boundary_activation_bytes = read_field<double>(jl, "boundary_activation_bytes", ctx);
    const auto variants = read_field<json>(jl, "variants", ctx);
    if (!variants.is_array()) fail(ErrorKind::Parse, ctx + ": 'variants' must be an array");
    for (std::size_t k = 0; k < variants.size(); ++k) {
      const auto& jv = variants[k];
      const std::string vctx = ctx + ".variants[" + std::to_string(k) + "]";
      VariantCost v;
      v.shape.tensor = read_field<int>(jv, "t", vctx);
      v.shape.expert = read_field<int>(jv, "e", vctx);
      v.shape.context = read_field<int>(jv, "c", vctx);
      v.shape.sequence_parallel = jv.value("seq", false);
      v.fwd_latency = read_field<double>(jv, "fwd_latency_s", vctx);
      v.bwd_latency = read_field<double>(jv, "bwd_latency_s", vctx);
      v.sharded_weight_bytes = read_field<double>(jv, "sharded_weight_bytes", vctx);
      v.sharded_activation_bytes = read_field<double>(jv, "sharded_activation_bytes", vctx);
      if (jv.contains("collectives")) {
        for (const auto& jc : jv.at("collectives")) {
          CollectiveDemand c;
          c.kind = collective_from_string(read_field<std::string>(jc, "kind", vctx));
          c.bytes = read_field<double>(jc, "bytes", vctx);
          v.collectives.push_back(c);
        }
      }
      l.variants.push_back(std::move(v));
    }
    g.layers.push_back(std::move(l));
  }
  g.validate();
  return g;
}

ModelGraph load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open model profile '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model_spec(buf.str(), path);
}

std::string model_to_json(const ModelGraph& g) {
  json doc;
  doc["global_batch"] = g.global_batch;
  doc["micro_batch_size"] = g.micro_batch_size;
  doc["schedule"] = to_string(g.schedule);
  json layers = json::array();
  for (const auto& l : g.layers) {
    json jl;
    jl["id"] = l.id;
    jl["is_embedding"] = l.is_embedding;
    jl["weight_bytes"] = l.weight_bytes;
    jl["optimizer_state_bytes"] = l.optimizer_state_bytes;
    jl["activation_bytes"] = l.activation_bytes;
    jl["boundary_activation_bytes"] = l.boundary_activation_bytes;
    json variants = json::array();
    for (const auto& v : l.variants) {
      json jv;
      jv["t"] = v.shape.tensor;
      jv["e"] = v.shape.expert;
      jv["c"] = v.shape.context;
      jv["seq"] = v.shape.sequence_parallel;
      jv["fwd_latency_s"] = v.fwd_latency;
      jv["bwd_latency_s"] = v.bwd_latency;
      jv["sharded_weight_bytes"] = v.sharded_weight_bytes;
      jv["sharded_activation_bytes"] = v.sharded_activation_bytes;
      json cs = json::array();
      for (const auto& c : v.collectives) cs.push_back({{"kind", to_string(c.kind)}, {"bytes", c.bytes}});
      jv["collectives"] = std::move(cs);
      variants.push_back(std::move(jv));
    }
    jl["variants"] = std::move(variants);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(1);
}

std::vector<Downset> enumerate_downsets(const ModelGraph& g) {
  std::vector<Downset> out;
  out.reserve(g.layers.size() + 1);
  for (int start = g.num_layers(); start >= 0; --start) out.push_back({start});
  return out;
}

void extend_stage(StageProfile& sp, const LayerProfile& layer, const VariantCost& cost) {
  sp.fwd_latency += cost.fwd_latency;
  sp.bwd_latency += cost.bwd_latency;
  sp.weight_bytes += layer.weight_bytes;
  sp.sharded_weight_bytes += cost.sharded_weight_bytes;
  const double opt_share = layer.weight_bytes > 0.0
                               ? cost.sharded_weight_bytes / layer.weight_bytes
                               : 1.0 / cost.shape.devices_per_replica();
  sp.optimizer_state_bytes += layer.optimizer_state_bytes * opt_share;
  sp.activation_bytes += cost.sharded_activation_bytes;
  for (const auto& c : cost.collectives) {
    sp.collective_bytes[static_cast<std::size_t>(c.kind)] += c.bytes;
  }
  sp.boundary_activation_bytes = layer.boundary_activation_bytes;
  ++sp.last;
}

StageProfile stage_aggregate(const ModelGraph& g, int first, int last, const ParallelVariant& v) {
  if (first < 0 || first >= last || last > g.num_layers()) {
    fail(ErrorKind::InvalidArgument, "stage range [" + std::to_string(first) + ", " +
                                         std::to_string(last) + ") is empty or out of bounds");
  }
  StageProfile sp;
  sp.first = first;
  sp.last = first;
  sp.variant = v;
  sp.input_activation_bytes = first > 0 ? g.layers[first - 1].boundary_activation_bytes : 0.0;
  for (int i = first; i < last; ++i) {
    const auto& layer = g.layers[i];
    const VariantCost* cost = layer.find(v);
    if (cost == nullptr) {
      fail(ErrorKind::InvalidArgument,
           layer_ctx(i, layer.id) + " does not offer variant " + to_string(v));
    }
    extend_stage(sp, layer, *cost);
  }
  return sp;
}

ModelGraph rescale_microbatch(const ModelGraph& g, int micro_batch_size) {
  if (micro_batch_size < 1) fail(ErrorKind::InvalidArgument, "microbatch size must be >= 1");
  ModelGraph out = g;
  out.micro_batch_size = micro_batch_size;
  if (micro_batch_size == g.micro_batch_size) return out;
  const double f = static_cast<double>(micro_batch_size) / g.micro_batch_size;
  for (auto& l : out.layers) {
    l.activation_bytes *= f;
    l.boundary_activation_bytes *= f;
    for (auto& v : l.variants) {
      v.fwd_latency *= f;
      v.bwd_latency *= f;
      v.sharded_activation_bytes *= f;
      for (auto& c : v.collectives) c.bytes *= f;
    }
  }
  return out;
}

std::vector<ParallelVariant> variant_shapes(const ModelGraph& g) {
  std::set<ParallelVariant> shapes;
  for (const auto& l : g.layers) {
    for (const auto& v : l.variants) shapes.insert(v.shape);
  }
  return {shapes.begin(), shapes.end()};
}

}  // namespace topoplan
