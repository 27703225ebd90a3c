#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = TOPOPLAN_CLI;

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() /
          ("topoplan_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli.string() + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST(Cli, TrivialPlan) {
  Scratch s;
  const fs::path model = s.dir / "one.json";
  std::ofstream(model) << R"({"global_batch": 4, "micro_batch_size": 1, "schedule": "1f1b", "layers": [
    {"id": 0, "weight_bytes": 1e6, "optimizer_state_bytes": 2e6, "activation_bytes": 1e6,
     "boundary_activation_bytes": 1e5,
     "variants": [{"t": 1, "e": 1, "c": 1, "fwd_latency_s": 0.01, "bwd_latency_s": 0.02,
                   "sharded_weight_bytes": 1e6, "sharded_activation_bytes": 1e6}]}]})";
  ASSERT_EQ(run("topo-gen hgx_node --param devices=1 --out " + (s.dir / "t.json").string(), s.dir / "log"), 0)
      << slurp(s.dir / "log");
  ASSERT_EQ(run("plan --model " + model.string() + " --topology " + (s.dir / "t.json").string() + " --out-dir " +
                    (s.dir / "out").string(),
                s.dir / "log"),
            0)
      << slurp(s.dir / "log");
  EXPECT_NE(slurp(s.dir / "out" / "plan.json").find("\"p\": 1"), std::string::npos);
  EXPECT_NE(slurp(s.dir / "log").find("{1, 1, 1, 1, (1,1)}"), std::string::npos) << slurp(s.dir / "log");
}

TEST(Cli, MicrobatchSweepHasOneRowPerPoint) {
  Scratch s;
  ASSERT_EQ(run("topo-gen spine_leaf --out " + (s.dir / "t.json").string(), s.dir / "log"), 0);
  ASSERT_EQ(run("plan --model synthetic:uniform24 --topology " + (s.dir / "t.json").string() +
                    " --budget-bytes 16e9 --replication 1 --microbatch-sizes 1,2,4,8 --out-dir " + s.dir.string(),
                s.dir / "log"),
            0)
      << slurp(s.dir / "log");
  EXPECT_EQ(count_lines(slurp(s.dir / "report.csv")), 1 + 4);
}

TEST(Cli, MissingTopologyLeavesNoOutputs) {
  Scratch s;
  const fs::path out = s.dir / "out";
  EXPECT_NE(run("plan --model synthetic:uniform24 --topology " + (s.dir / "missing.json").string() + " --out-dir " +
                    out.string(),
                s.dir / "log"),
            0);
  EXPECT_FALSE(fs::exists(out / "plan.json"));
  EXPECT_FALSE(fs::exists(out / "report.csv"));
  EXPECT_NE(slurp(s.dir / "log").find("missing.json"), std::string::npos);
}

TEST(Cli, InfeasiblePlanExitsNonzero) {
  Scratch s;
  ASSERT_EQ(run("topo-gen hgx_node --out " + (s.dir / "t.json").string(), s.dir / "log"), 0);
  EXPECT_EQ(run("plan --model synthetic:uniform24 --topology " + (s.dir / "t.json").string() +
                    " --budget-bytes 1e9 --out-dir " + s.dir.string(),
                s.dir / "log"),
            1);
  EXPECT_NE(slurp(s.dir / "log").find("no feasible plan"), std::string::npos);
  EXPECT_FALSE(fs::exists(s.dir / "plan.json"));
}

TEST(Cli, CompareWritesFourAlgorithms) {
  Scratch s;
  ASSERT_EQ(run("topo-gen spine_leaf --out " + (s.dir / "t.json").string(), s.dir / "log"), 0);
  const std::string args = "compare --model synthetic:uniform24 --topology " + (s.dir / "t.json").string() +
                           " --budget-bytes 16e9 --manual-strategy 8,1,1,1,1 --mcmc-iterations 200 --seed 3";
  ASSERT_EQ(run(args + " --out-dir " + (s.dir / "a").string(), s.dir / "log"), 0) << slurp(s.dir / "log");
  ASSERT_EQ(run(args + " --threads 2 --out-dir " + (s.dir / "b").string(), s.dir / "log"), 0);
  const std::string plot = slurp(s.dir / "a" / "plot.csv");
  EXPECT_EQ(count_lines(plot), 5);
  EXPECT_NE(plot.find("manual,"), std::string::npos);
  EXPECT_EQ(slurp(s.dir / "a" / "compare.csv"), slurp(s.dir / "b" / "compare.csv"));
  EXPECT_EQ(plot, slurp(s.dir / "b" / "plot.csv"));
}

TEST(Cli, TopoGenKinds) {
  Scratch s;
  ASSERT_EQ(run("topo-gen spine_leaf --param node_GBps=900 --out " + (s.dir / "sl.json").string(), s.dir / "log"), 0);
  EXPECT_EQ(count_lines(slurp(s.dir / "sl.json")) > 0, true);
  ASSERT_EQ(run("topo-gen torus --param x=4 --param y=4 --out " + (s.dir / "torus.json").string(), s.dir / "log"), 0);
  ASSERT_EQ(run("topo-gen hgx_node --out " + (s.dir / "hgx.json").string(), s.dir / "log"), 0);
  auto levels = [](const std::string& text) {
    int n = 0;
    for (std::size_t p = text.find("\"capacity\""); p != std::string::npos; p = text.find("\"capacity\"", p + 1)) ++n;
    return n;
  };
  EXPECT_EQ(levels(slurp(s.dir / "sl.json")), 3);
  EXPECT_EQ(levels(slurp(s.dir / "torus.json")), 3);
  EXPECT_EQ(levels(slurp(s.dir / "hgx.json")), 1);
  EXPECT_EQ(run("topo-gen fat_tree --param nodes=3", s.dir / "log"), 2);
}

TEST(Cli, OracleCheckSingleInstance) {
  Scratch s;
  ASSERT_EQ(run("oracle-check --count 1 --seed 0", s.dir / "a"), 0) << slurp(s.dir / "a");
  ASSERT_EQ(run("oracle-check --count 1 --seed 0", s.dir / "b"), 0);
  EXPECT_EQ(slurp(s.dir / "a"), slurp(s.dir / "b"));
  EXPECT_EQ(run("oracle-check --count 30 --seed 0 --perturb 0.5 --no-baselines", s.dir / "c"), 1);
}
