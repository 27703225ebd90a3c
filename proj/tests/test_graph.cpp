#include <gtest/gtest.h>

#include "helpers.hpp"
#include "topoplan/error.hpp"
#include "topoplan/graph.hpp"
#include "topoplan/synthetic.hpp"

using namespace topoplan;

namespace {

const char* kTwoLayers = R"({
  "global_batch": 8, "micro_batch_size": 1, "schedule": "1f1b",
  "layers": [
    {"id": 0, "weight_bytes": 10, "optimizer_state_bytes": 20, "activation_bytes": 5,
     "boundary_activation_bytes": 2,
     "variants": [{"t": 1, "e": 1, "c": 1, "fwd_latency_s": 0.1, "bwd_latency_s": 0.2,
                   "sharded_weight_bytes": 10, "sharded_activation_bytes": 5}]},
    {"id": 1, "weight_bytes": 10, "optimizer_state_bytes": 20, "activation_bytes": 5,
     "boundary_activation_bytes": 2,
     "variants": [{"t": 1, "e": 1, "c": 1, "fwd_latency_s": 0.1, "bwd_latency_s": 0.2,
                   "sharded_weight_bytes": 10, "sharded_activation_bytes": 5}]}
  ]})";

}  // namespace

TEST(Graph, ParsesTwoLayerProfile) {
  const ModelGraph g = parse_model_spec(kTwoLayers);
  EXPECT_EQ(g.num_layers(), 2);
  for (const auto& l : g.layers) EXPECT_EQ(l.variants.size(), 1u);
  EXPECT_EQ(g.global_batch, 8);
  EXPECT_EQ(g.schedule, Schedule::OneFOneB);
}

TEST(Graph, NegativeLatencyNamesLayerAndField) {
  std::string text = kTwoLayers;
  const auto pos = text.rfind("\"fwd_latency_s\": 0.1");
  text.replace(pos, std::string("\"fwd_latency_s\": 0.1").size(), "\"fwd_latency_s\": -0.1");
  try {
    parse_model_spec(text);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("layer 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("fwd_latency_s"), std::string::npos) << msg;
  }
}

TEST(Graph, MalformedJsonIsParseError) {
  try {
    parse_model_spec("{ not json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
}

TEST(Graph, MissingFileIsIoError) {
  try {
    load_model_spec("/nonexistent/model.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

TEST(Graph, JsonRoundTrip) {
  const ModelGraph g = synthetic_model("gpt3_175b");
  const ModelGraph back = parse_model_spec(model_to_json(g));
  ASSERT_EQ(back.num_layers(), g.num_layers());
  EXPECT_EQ(model_to_json(back), model_to_json(g));
}

TEST(Graph, Gpt3ShapeHasEmbeddingAndHead) {
  const ModelGraph g = synthetic_model("gpt3_175b");
  EXPECT_EQ(g.num_layers(), 98);
  EXPECT_TRUE(g.layers.front().is_embedding);
  EXPECT_EQ(variant_shapes(g).size(), 4u);
}

TEST(Graph, DownsetCounts) {
  ModelGraph empty;
  EXPECT_EQ(enumerate_downsets(empty).size(), 1u);
  const auto three = enumerate_downsets(th::chain(3, 1, 1));
  ASSERT_EQ(three.size(), 4u);
  EXPECT_EQ(three[0].start, 3);
  EXPECT_EQ(three[3].start, 0);
  const ModelGraph big = th::chain(96, 1, 1);
  const auto ds = enumerate_downsets(big);
  EXPECT_EQ(ds.size(), 97u);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds[i].start, 96 - static_cast<int>(i));
}

TEST(Graph, SingleLayerAggregateIsIdentity) {
  const ModelGraph g = th::chain(1, 0.25, 0.5);
  const StageProfile sp = stage_aggregate(g, 0, 1, {});
  EXPECT_EQ(sp.fwd_latency, 0.25);
  EXPECT_EQ(sp.bwd_latency, 0.5);
  EXPECT_EQ(sp.weight_bytes, g.layers[0].weight_bytes);
  EXPECT_EQ(sp.optimizer_state_bytes, g.layers[0].optimizer_state_bytes);
  EXPECT_EQ(sp.activation_bytes, g.layers[0].activation_bytes);
  EXPECT_EQ(sp.boundary_activation_bytes, g.layers[0].boundary_activation_bytes);
  EXPECT_EQ(sp.input_activation_bytes, 0.0);
}

TEST(Graph, TwoIdenticalLayersDoubleAdditiveFields) {
  const ModelGraph g = th::chain(2, 0.25, 0.5);
  const StageProfile one = stage_aggregate(g, 0, 1, {});
  const StageProfile two = stage_aggregate(g, 0, 2, {});
  EXPECT_EQ(two.fwd_latency, 2 * one.fwd_latency);
  EXPECT_EQ(two.bwd_latency, 2 * one.bwd_latency);
  EXPECT_EQ(two.weight_bytes, 2 * one.weight_bytes);
  EXPECT_EQ(two.optimizer_state_bytes, 2 * one.optimizer_state_bytes);
  EXPECT_EQ(two.activation_bytes, 2 * one.activation_bytes);
  EXPECT_EQ(two.boundary_activation_bytes, one.boundary_activation_bytes);
}

TEST(Graph, HeterogeneousAggregateMatchesSummation) {
  ModelGraph g;
  for (int i = 0; i < 4; ++i) g.layers.push_back(th::layer(i, 0.1 * (i + 1), 0.3 * (i + 2), 7.0 * i + 1, 3.0 * i, 11.0 + i, 100.0 + i));
  double fwd = 0, bwd = 0, w = 0, opt = 0, act = 0;
  for (int i = 1; i < 4; ++i) {
    fwd += g.layers[i].variants[0].fwd_latency;
    bwd += g.layers[i].variants[0].bwd_latency;
    w += g.layers[i].weight_bytes;
    opt += g.layers[i].optimizer_state_bytes;
    act += g.layers[i].activation_bytes;
  }
  const StageProfile sp = stage_aggregate(g, 1, 4, {});
  EXPECT_DOUBLE_EQ(sp.fwd_latency, fwd);
  EXPECT_DOUBLE_EQ(sp.bwd_latency, bwd);
  EXPECT_DOUBLE_EQ(sp.weight_bytes, w);
  EXPECT_DOUBLE_EQ(sp.optimizer_state_bytes, opt);
  EXPECT_DOUBLE_EQ(sp.activation_bytes, act);
  EXPECT_EQ(sp.input_activation_bytes, 100.0);
  EXPECT_EQ(sp.boundary_activation_bytes, 103.0);
}

TEST(Graph, MissingVariantIsRejected) {
  const ModelGraph g = th::chain(2, 1, 1);
  EXPECT_THROW(stage_aggregate(g, 0, 2, {2, 1, 1, false}), Error);
}

TEST(Graph, RescaleIsLinearInMicrobatch) {
  const ModelGraph g = th::chain(2, 0.5, 1.0);
  const ModelGraph r = rescale_microbatch(g, 4);
  EXPECT_EQ(r.micro_batch_size, 4);
  EXPECT_EQ(r.layers[0].variants[0].fwd_latency, 2.0);
  EXPECT_EQ(r.layers[0].activation_bytes, 4 * g.layers[0].activation_bytes);
  EXPECT_EQ(r.layers[0].weight_bytes, g.layers[0].weight_bytes);
}
