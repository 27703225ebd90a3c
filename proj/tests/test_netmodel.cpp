#include <gtest/gtest.h>

#include "helpers.hpp"
#include "topoplan/error.hpp"
#include "topoplan/netmodel.hpp"

using namespace topoplan;

TEST(Netmodel, SingleLevelP2P) {
  TopologySpec t;
  t.total_devices = 4;
  t.levels.push_back({4, 1e9, 0.0, 1.0});
  const LevelCostMatrix m = build_level_matrix(t);
  EXPECT_EQ(m.num_levels(), 1);
  EXPECT_EQ(m.p2p_time(0, 1e9), 1.0);
}

TEST(Netmodel, P2PClosedForm) {
  const LevelCostMatrix zero = th::matrix({{8, 0.0, 1e-9}});
  EXPECT_EQ(zero.p2p_time(0, 0.0), 0.0);
  const LevelCostMatrix m = th::matrix({{8, 1e-6, 1e-9}});
  EXPECT_DOUBLE_EQ(m.p2p_time(0, 1e9), 1.000001);
}

TEST(Netmodel, CollectiveClosedForms) {
  const LevelCostMatrix m = th::matrix({{8, 0.0, 1e-9}});
  EXPECT_EQ(m.collective_time(CollectiveKind::AllReduce, 1, 5e9, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.collective_time(CollectiveKind::AllReduce, 2, 1e9, 0), 1.0);
  const LevelCostMatrix a = th::matrix({{8, 1e-6, 1e-9}});
  EXPECT_DOUBLE_EQ(a.collective_time(CollectiveKind::AllGather, 4, 4e9, 0), 3e-6 + 3.0);
  EXPECT_DOUBLE_EQ(a.collective_time(CollectiveKind::ReduceScatter, 4, 4e9, 0), 3e-6 + 3.0);
}

TEST(Netmodel, TightestLevel) {
  const LevelCostMatrix m = build_level_matrix(gen_topology("fat_tree", {}));
  EXPECT_EQ(m.tightest_level(1), 0);
  EXPECT_EQ(m.tightest_level(8), 0);
  EXPECT_EQ(m.tightest_level(9), 1);
  EXPECT_EQ(m.tightest_level(33), 2);
  EXPECT_THROW(m.tightest_level(0), Error);
  EXPECT_THROW(m.tightest_level(1025), Error);
}

TEST(Netmodel, SpanLevelFollowsBlockBoundaries) {
  const LevelCostMatrix m = th::matrix({{4, 0, 1}, {8, 0, 2}, {16, 0, 3}});
  EXPECT_EQ(m.span_level(0, 4), 0);
  EXPECT_EQ(m.span_level(2, 2), 0);
  EXPECT_EQ(m.span_level(3, 2), 1);
  EXPECT_EQ(m.span_level(6, 4), 2);
  EXPECT_EQ(m.span_level(0, 16), 2);
}

TEST(Netmodel, Generators) {
  const TopologySpec hgx = gen_topology("hgx_node", {});
  EXPECT_EQ(hgx.num_levels(), 1);
  EXPECT_EQ(hgx.levels[0].capacity, 8);

  const TopologySpec sl = gen_topology("spine_leaf", {{"node_size", 8}, {"nodes_per_leaf", 4}, {"leaf_GBps", 12.5}, {"oversub", 2}});
  ASSERT_EQ(sl.num_levels(), 3);
  EXPECT_DOUBLE_EQ(sl.levels[2].beta(), 2.0 * sl.levels[1].beta());

  const TopologySpec torus = gen_topology("torus", {{"x", 4}, {"y", 4}});
  EXPECT_EQ(torus.num_levels(), 3);
  EXPECT_EQ(torus.total_devices, 16);
  build_level_matrix(torus);
}

TEST(Netmodel, GeneratorRejectsUnknownParameter) {
  EXPECT_THROW(gen_topology("fat_tree", {{"nodes", 4}}), Error);
  EXPECT_THROW(gen_topology("ring", {}), Error);
}

TEST(Netmodel, NonMonotoneTopologyNamesBothLevels) {
  TopologySpec t;
  t.total_devices = 16;
  t.levels.push_back({8, 100e9, 1e-6, 1.0});
  t.levels.push_back({16, 900e9, 1e-6, 1.0});
  try {
    build_level_matrix(t);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("level 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("level 0"), std::string::npos) << msg;
  }
}

TEST(Netmodel, TopologyValidation) {
  TopologySpec t;
  t.total_devices = 16;
  t.levels.push_back({8, 1e9, 0, 1});
  t.levels.push_back({12, 1e9, 0, 1});
  EXPECT_THROW(t.validate(), Error);  // 12 is not a multiple of 8 and not the total
  t.levels.clear();
  EXPECT_THROW(t.validate(), Error);
}

TEST(Netmodel, TopologyJsonRoundTrip) {
  const TopologySpec t = gen_topology("spine_leaf", {});
  const TopologySpec back = parse_topology(topology_to_json(t));
  EXPECT_EQ(topology_to_json(back), topology_to_json(t));
  const TopologySpec templ = parse_topology(R"({"template": "hgx_node", "params": {"devices": 4}})");
  EXPECT_EQ(templ.total_devices, 4);
}

TEST(Netmodel, FlattenedUsesLevelZeroEverywhere) {
  const LevelCostMatrix m = th::matrix({{4, 1e-6, 1e-9}, {16, 1e-5, 1e-8}});
  const LevelCostMatrix f = m.flattened();
  EXPECT_EQ(f.num_levels(), 1);
  EXPECT_EQ(f.total_devices(), 16);
  EXPECT_EQ(f.p2p_time(0, 1e6), m.p2p_time(0, 1e6));
}
