#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dac/error.hpp"
#include "dac/harness.hpp"
#include "dac/report.hpp"
#include "test_util.hpp"

using namespace dac;
using nlohmann::json;

namespace {

json tiny_config() {
  return json::parse(R"({
    "name": "tiny", "model": "gaussian", "truth_natural": {"tau2": 1, "phi2": 3},
    "domain": [8, 8], "block": [4, 4], "B": 12, "R": 4, "seed": 5,
    "training": {"t1": 3, "t2": 3, "val_t1": 2, "val_t2": 2, "seeds": 1, "epochs": 2, "patience": 2,
                 "architecture": {"filters": [2], "kernels": [3], "dense": 4}}
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ReplicateRecord record(std::size_t i, double a, double b, double se) {
  ReplicateRecord r;
  r.index = i;
  r.ok = true;
  r.theta_m = r.theta_c = ParamVector{{a, b}, ModelTag::gaussian};
  r.se = {se, se};
  r.ci = {Interval{a - 2 * se, a + 2 * se}, Interval{b - 2 * se, b + 2 * se}};
  r.seconds = 0.5 + 0.1 * static_cast<double>(i);
  return r;
}

}  // namespace

TEST(StudyConfig, ParsesAndFillsNetworkPlan) {
  const StudyConfig c = parse_study_config(tiny_config());
  EXPECT_EQ(c.nx, 8u);
  EXPECT_EQ(c.block_nx, 4u);
  EXPECT_EQ(c.bootstrap_replicates, 12u);
  EXPECT_EQ(c.mc_replicates, 4u);
  EXPECT_NEAR(c.truth[0], 0.0, 1e-15);
  EXPECT_NEAR(c.truth[1], std::log(3.0), 1e-15);
  EXPECT_EQ(c.network.train_grid.t1, 3u);
  EXPECT_EQ(c.network.arch.conv_filters, std::vector<std::size_t>{2});
  EXPECT_EQ(c.network.train_grid.center, c.truth);
}

TEST(StudyConfig, RejectsUnknownAndAmbiguous) {
  json j = tiny_config();
  j["bootstrap"] = 5;
  EXPECT_THROW((void)parse_study_config(j), InvalidArgument);
  j = tiny_config();
  j["training"]["lr"] = 0.1;
  EXPECT_THROW((void)parse_study_config(j), InvalidArgument);
  j = tiny_config();
  j["truth"] = {0, 1};
  EXPECT_THROW((void)parse_study_config(j), InvalidArgument);
  j = tiny_config();
  j["simulation"] = "fast";
  EXPECT_THROW((void)parse_study_config(j), InvalidArgument);
  TempDir tmp;
  write_text_file(tmp / "bad.json", "{ not json");
  EXPECT_ANY_THROW((void)load_study_config(tmp / "bad.json"));
}

TEST(Coverage, Examples) {
  const ParamVector truth{{0, 0}, ModelTag::gaussian};
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::array<Interval, 2>> all(5, {Interval{-inf, inf}, Interval{-inf, inf}});
  EXPECT_EQ(coverage(all, truth)[0], 100.0);
  std::vector<std::array<Interval, 2>> none(4, {Interval{1, 2}, Interval{-2, -1}});
  EXPECT_EQ(coverage(none, truth)[1], 0.0);
  std::vector<std::array<Interval, 2>> nine(10, {Interval{-1, 1}, Interval{-1, 1}});
  nine[3][0] = Interval{0.5, 1};
  EXPECT_DOUBLE_EQ(coverage(nine, truth)[0], 90.0);
  EXPECT_DOUBLE_EQ(coverage(nine, truth)[1], 100.0);
}

TEST(Summarize, MetricsIdentities) {
  const ParamVector truth{{0, 1}, ModelTag::gaussian};
  std::vector<ReplicateRecord> r{record(0, 0.1, 1.2, 0.1), record(1, -0.3, 0.9, 0.2), record(2, 0.2, 1.0, 0.3)};
  r.push_back(ReplicateRecord{});  // failed replicate is skipped
  r.back().index = 3;
  const MetricsTable m = summarize(r, truth);
  EXPECT_EQ(m.replicates, 3u);
  EXPECT_EQ(m.failures, 1u);
  const ParameterMetrics& p = m.rows[0];
  EXPECT_NEAR(p.bias, 0.0, 1e-15);
  EXPECT_NEAR(p.ase, 0.2, 1e-15);
  EXPECT_NEAR(p.rmse * p.rmse, p.bias * p.bias + p.ese * p.ese, 1e-14);
  EXPECT_NEAR(m.rows[1].bias, (0.2 - 0.1 + 0.0) / 3, 1e-15);
  EXPECT_NEAR(m.time_mean, 0.6, 1e-12);
  EXPECT_EQ(parameter_names(ModelTag::gaussian)[0], m.rows[0].parameter);
}

TEST(Report, RefusesEmptyAndIsStable) {
  TempDir tmp;
  StudyResult res;
  res.config = parse_study_config(tiny_config());
  res.simulation_label = "exact";
  EXPECT_THROW(emit_report(res, tmp / "empty"), InvalidArgument);
  res.replicates = {record(0, 0.1, 1.2, 0.1), record(1, -0.1, 1.0, 0.1)};
  res.metrics = summarize(res.replicates, res.config.truth);
  emit_report(res, tmp / "a");
  emit_report(res, tmp / "b");
  for (const char* f : {"metrics.csv", "replicates.csv", "timing.csv", "table.txt"})
    EXPECT_EQ(slurp(tmp / "a" / f), slurp(tmp / "b" / f)) << f;
  const std::string metrics = slurp(tmp / "a" / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "parameter,BIAS,RMSE,ESE,ASE,CP");
  std::ifstream in(tmp / "a" / "manifest.json");
  const json man = json::parse(in);
  EXPECT_EQ(man["master_seed"], 5);
  for (const auto& f : man["files"]) EXPECT_EQ(f["sha256"], sha256_file(tmp / "a" / f["file"].get<std::string>()));
}

TEST(McStudy, WorkerCountDoesNotChangeResults) {
  StudyConfig c = parse_study_config(tiny_config());
  const SelectedNetwork net = prepare_network(c);
  c.workers = 1;
  const StudyResult a = run_mc_study(c, net);
  c.workers = 3;
  const StudyResult b = run_mc_study(c, net);
  ASSERT_EQ(a.replicates.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.replicates[i].theta_c, b.replicates[i].theta_c);
    EXPECT_EQ(a.replicates[i].se, b.replicates[i].se);
  }
  TempDir tmp;
  emit_report(a, tmp / "a");
  emit_report(b, tmp / "b");
  EXPECT_EQ(slurp(tmp / "a" / "metrics.csv"), slurp(tmp / "b" / "metrics.csv"));
  EXPECT_EQ(a.simulation_label, "exact");
}
