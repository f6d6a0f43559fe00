#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "keldren/run.hpp"

using namespace keldren;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::path(::testing::TempDir()) / ("keldren_" + name);
  fs::remove_all(d);
  return d;
}

int quiet_run(const nlohmann::json& cfg) {
  std::ostringstream log, err;
  return run(cfg, log, err);
}

}  // namespace

TEST(Io, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(config_hash(nlohmann::json{{"a", 1}}), config_hash(nlohmann::json::parse(R"({"a":1})")));
}

TEST(Io, CsvCarriesProvenanceAndHeader) {
  const auto d = fresh_dir("csv");
  fs::create_directories(d);
  {
    CsvWriter w(d / "x.csv", {"a", "b"}, "00ff");
    w.row({0.1, "s"});
    EXPECT_THROW(w.row({1.0}), std::logic_error);
  }
  std::istringstream in(slurp(d / "x.csv"));
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  EXPECT_EQ(l1, std::string("# config_hash=00ff version=") + version);
  EXPECT_EQ(l2, "a,b");
  EXPECT_EQ(l3, "0.10000000000000001,s");
}

TEST(Io, OutputDirFromEnvironment) {
  const auto d = fresh_dir("env");
  ::setenv("KELDREN_OUT_DIR", d.c_str(), 1);
  EXPECT_EQ(output_dir(), d);
  EXPECT_TRUE(fs::is_directory(d));
  EXPECT_EQ(output_dir((d / "explicit").string()), d / "explicit");
  ::unsetenv("KELDREN_OUT_DIR");
}

TEST(Run, ZeroSigmaScanIsAllZero) {
  const auto d = fresh_dir("zero");
  const nlohmann::json cfg{{"command", "chains"}, {"action", "scan"}, {"output_dir", d.string()},
                           {"chains", {{"sigma", "zero"}}}};
  ASSERT_EQ(quiet_run(cfg), 0);
  std::istringstream in(slurp(d / "chains_scan.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# config_hash=", 0), 0u);
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_NE(line.find(",0,0,0,0"), std::string::npos) << line;
  }
  EXPECT_EQ(rows, 9);
}

TEST(Run, RepeatedRunIsByteIdentical) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  nlohmann::json cfg{{"command", "chains"}, {"action", "cancel"}, {"seed", 7}, {"chains", {{"samples", 2000}}}};
  cfg["output_dir"] = a.string();
  ASSERT_EQ(quiet_run(cfg), 0);
  cfg["output_dir"] = b.string();
  cfg["threads"] = 2;
  ASSERT_EQ(quiet_run(cfg), 0);
  for (const char* f : {"chains_cancel.csv", "chains_cancel_counterterm.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  // a different seed changes the Monte Carlo self-energy
  cfg["seed"] = 8;
  cfg["output_dir"] = b.string();
  ASSERT_EQ(quiet_run(cfg), 0);
  EXPECT_NE(slurp(a / "chains_cancel.csv"), slurp(b / "chains_cancel.csv"));
}

TEST(Run, MaxwellianBoundaryNullPasses) {
  const auto d = fresh_dir("null");
  const nlohmann::json cfg{{"command", "kinetics"},
                           {"action", "boundary-check"},
                           {"output_dir", d.string()},
                           {"boundary", {{"distributions", {{{"kind", "maxwellian"}}}}, {"R", {10.0}}}}};
  EXPECT_EQ(quiet_run(cfg), 0);
  EXPECT_NE(slurp(d / "kinetics_boundary.csv").find("maxwellian,10,"), std::string::npos);
}

TEST(Run, FailedCheckExitsOne) {
  const auto d = fresh_dir("fail");
  // a tolerance below rounding cannot be met
  const nlohmann::json cfg{{"command", "kinetics"}, {"action", "fixed-point"}, {"output_dir", d.string()},
                           {"kinetics", {{"alphas", {1.0}}, {"betas", {0.5}}, {"momenta", {0.5}}, {"tolerance", 0.0}}}};
  EXPECT_EQ(quiet_run(cfg), 1);
}

TEST(Run, SchemaViolationsAreUsageErrors) {
  const auto d = fresh_dir("usage");
  std::ostringstream log, err;
  EXPECT_EQ(run({{"command", "chains"}, {"action", "scan"}, {"colour", 1}}, log, err), 2);
  EXPECT_NE(err.str().find("/colour"), std::string::npos);
  EXPECT_EQ(quiet_run({{"command", "chains"}, {"action", "scan"}, {"eps_grid", {{"lo", -1.0}}}}), 2);
  EXPECT_EQ(quiet_run({{"command", "chains"}, {"action", "scan"}, {"chains", {{"p", "one"}}}}), 2);
  EXPECT_EQ(quiet_run({{"command", "trees"}, {"action", "scan"}}), 2);
  EXPECT_EQ(quiet_run({{"command", "chains"}, {"action", "scan"}, {"occupation", {{"kind", "fermi"}}},
                       {"output_dir", d.string()}}),
            2);
  EXPECT_FALSE(fs::exists(d / "chains_scan.csv"));
}

TEST(Run, TreesJsonCountsMatch) {
  const auto d = fresh_dir("trees");
  ASSERT_EQ(quiet_run({{"command", "trees"}, {"action", "enumerate"}, {"output_dir", d.string()},
                       {"trees", {{"vertices", 3}, {"shoots", 1}}}}),
            0);
  const auto j = nlohmann::json::parse(slurp(d / "trees.json"));
  EXPECT_EQ(j.at("data").at("count").get<int>(), 27);  // n^(n-1+shoots)
  EXPECT_EQ(j.at("data").at("trees").size(), 27u);
}
