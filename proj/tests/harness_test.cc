#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "quantalm/harness.hpp"

namespace quantalm {
namespace {

std::string FirstLine(const std::string& text) { return text.substr(0, text.find('\n')); }

SolverSettings FastSettings() {
  SolverSettings s;
  s.n_samples = 1000;
  s.n_validation = 2000;
  return s;
}

RunRequest NonconvexRequest(double alpha, std::uint64_t seed) {
  RunRequest r;
  r.problem.example = Example::kNonconvex1D;
  r.problem.alpha = alpha;
  r.settings = FastSettings();
  r.seed = seed;
  return r;
}

TEST(ParseTest, RoundTrips) {
  for (Example e : {Example::kNonconvex1D, Example::kPortfolio, Example::kJointChance}) {
    EXPECT_EQ(ParseExample(ToString(e)), e);
  }
  for (GradientMethod m : {GradientMethod::kFiniteDifference, GradientMethod::kSmoothing}) {
    EXPECT_EQ(ParseMethod(ToString(m)), m);
  }
  for (OuterSampling s : {OuterSampling::kSingleBatch, OuterSampling::kPerIteration, OuterSampling::kIndependentUpdate}) {
    EXPECT_EQ(ParseOuterSampling(ToString(s)), s);
  }
  for (HessianModel h : {HessianModel::kDirect, HessianModel::kStructured}) {
    EXPECT_EQ(ParseHessianModel(ToString(h)), h);
  }
}

TEST(ParseTest, RejectsUnknownNames) {
  EXPECT_THROW(ParseExample("knapsack"), ConfigError);
  EXPECT_THROW(ParseMethod("newton"), ConfigError);
  EXPECT_THROW(ParseOuterSampling("twice"), ConfigError);
  EXPECT_THROW(ParseHessianModel("bfgs"), ConfigError);
}

TEST(SolverSettingsTest, MapsOntoAlmConfig) {
  SolverSettings s;
  s.beta = 5e-4;
  s.method = GradientMethod::kSmoothing;
  s.growing_samples = true;
  s.r_term = 2e-5;
  s.max_inner = 77;
  const AlmConfig c = s.ToAlmConfig(42);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.inner.beta, 5e-4);
  EXPECT_EQ(c.inner.gradient_method, GradientMethod::kSmoothing);
  EXPECT_EQ(c.inner.sample_schedule, SampleSchedule::kGrowing);
  EXPECT_EQ(c.inner.n_max, 10000);
  EXPECT_EQ(c.n_validation, 10000);
  EXPECT_EQ(c.r_schedule.initial, 2e-5);
  EXPECT_EQ(c.inner.max_iterations, 77);
}

ExperimentPlan SmallPlan() {
  ExperimentPlan plan;
  plan.examples = {Example::kNonconvex1D, Example::kPortfolio};
  plan.dims = {5, 10};
  plan.alphas = {0.1};
  plan.sample_sizes = {1000};
  plan.betas = {1e-3, 1e-4};
  plan.methods = {GradientMethod::kFiniteDifference};
  plan.replications = 3;
  plan.master_seed = 9;
  return plan;
}

TEST(ExpandPlanTest, CountsAndOrder) {
  const std::vector<RunRequest> requests = ExpandPlan(SmallPlan());
  // nonconvex ignores dims: 2 betas x 3 reps; portfolio: 2 dims x 2 betas x 3 reps.
  ASSERT_EQ(requests.size(), 18u);
  EXPECT_EQ(requests[0].problem.example, Example::kNonconvex1D);
  EXPECT_EQ(requests[5].settings.beta, 1e-4);
  EXPECT_EQ(requests[6].problem.example, Example::kPortfolio);
  EXPECT_EQ(requests[6].problem.dim, 5);
  EXPECT_EQ(requests[17].problem.dim, 10);
  for (std::size_t i = 0; i < requests.size(); ++i) EXPECT_EQ(requests[i].replication, static_cast<int>(i % 3));
}

// Cells that differ only in beta, dim or example share seeds per replication.
TEST(ExpandPlanTest, ReplicationSeedsArePaired) {
  const std::vector<RunRequest> requests = ExpandPlan(SmallPlan());
  for (const RunRequest& r : requests) {
    EXPECT_EQ(r.seed, DeriveSeed(9, {static_cast<std::uint64_t>(r.replication)}));
  }
  EXPECT_NE(requests[0].seed, requests[1].seed);
}

TEST(ExpandPlanTest, RejectsEmptyAxis) {
  ExperimentPlan plan = SmallPlan();
  plan.betas.clear();
  EXPECT_THROW(ExpandPlan(plan), ConfigError);
  plan = SmallPlan();
  plan.replications = 0;
  EXPECT_THROW(ExpandPlan(plan), ConfigError);
}

TEST(ReportCsvTest, SchemaAndFormatting) {
  std::ostringstream out;
  WriteReportHeader(out);
  RunReport r;
  r.example = "portfolio";
  r.dim = 50;
  r.alpha = 0.05;
  r.n_samples = 10000;
  r.beta = 1e-3;
  r.method = "fd";
  r.seed = 3;
  r.status = "error";
  r.objective = std::numeric_limits<double>::quiet_NaN();
  r.violation = 0.1;
  r.wall_seconds = 1.23456;
  r.message = "bad, \"quoted\"";
  WriteReportRow(out, r);
  EXPECT_EQ(out.str(),
            "example,dim,alpha,N,beta,method,replication,seed,status,objective,violation,sigma,"
            "outer_iterations,wall_seconds,message\n"
            "portfolio,50,0.05,10000,0.001,fd,0,3,error,nan,0.1,0,0,1.235,\"bad, \"\"quoted\"\"\"\n");
}

TEST(ReportCsvTest, ObjectiveRoundTripsExactly) {
  std::ostringstream out;
  RunReport r;
  r.objective = 1.0 / 3.0;
  WriteReportRow(out, r);
  const std::string row = out.str();
  std::size_t pos = 0;
  for (int field = 0; field < 9; ++field) pos = row.find(',', pos) + 1;
  EXPECT_EQ(std::stod(row.substr(pos, row.find(',', pos) - pos)), 1.0 / 3.0);
}

TEST(RunSolveTest, RejectsSmallValidationSample) {
  RunRequest r = NonconvexRequest(0.1, 1);
  r.settings.n_validation = 999;
  EXPECT_THROW(RunSolve(r), ConfigError);
}

TEST(RunSolveTest, ReportsValidatedSolution) {
  const SolveOutcome out = RunSolve(NonconvexRequest(0.1, 4));
  const RunReport& r = out.report;
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_EQ(r.example, "nonconvex1d");
  EXPECT_EQ(r.dim, 1);
  EXPECT_EQ(r.outer_iterations, static_cast<int>(out.result.outer_trace.size()));
  EXPECT_EQ(r.objective, out.result.x_star[1]);
  EXPECT_GE(r.violation, 0.0);
  EXPECT_LE(r.violation, 1.0);
}

TEST(RunAllTest, PreservesOrderAndCapturesErrors) {
  std::vector<RunRequest> requests = {NonconvexRequest(0.2, 1), NonconvexRequest(1.5, 1), NonconvexRequest(0.1, 2)};
  const std::vector<RunReport> reports = RunAll(requests, 2);
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[0].alpha, 0.2);
  EXPECT_EQ(reports[1].status, "error");
  EXPECT_TRUE(std::isnan(reports[1].objective));
  EXPECT_EQ(reports[2].seed, 2u);
  EXPECT_TRUE(reports[0].ok());
  // Threads do not change results.
  EXPECT_EQ(RunAll({requests[2]}, 1)[0].objective, reports[2].objective);
}

RunReport Row(const std::string& method, double objective, const std::string& status) {
  RunReport r;
  r.example = "portfolio";
  r.dim = 50;
  r.alpha = 0.1;
  r.n_samples = 10000;
  r.beta = 1e-3;
  r.method = method;
  r.status = status;
  r.objective = objective;
  r.violation = objective / 10.0;
  return r;
}

TEST(SummarizeReplicationsTest, MedianOverFinishedRuns) {
  const std::vector<CellSummary> s = SummarizeReplications(
      {Row("fd", 3.0, "converged"), Row("smoothing", 1.0, "converged"), Row("fd", 1.0, "max_outer"),
       Row("fd", 100.0, "error"), Row("fd", 2.0, "converged")});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].cell.method, "fd");
  EXPECT_EQ(s[0].runs, 4);
  EXPECT_EQ(s[0].failures, 1);
  EXPECT_EQ(s[0].median_objective, 2.0);
  EXPECT_EQ(s[0].min_objective, 1.0);
  EXPECT_EQ(s[0].max_objective, 3.0);
  EXPECT_DOUBLE_EQ(s[0].median_violation, 0.2);
  EXPECT_EQ(s[1].runs, 1);

  std::ostringstream out;
  WriteSummaryCsv(out, s);
  EXPECT_EQ(FirstLine(out.str()),
            "example,dim,alpha,N,beta,method,runs,failures,median_objective,min_objective,max_objective,"
            "median_violation");
}

TEST(SummarizeReplicationsTest, AllFailedGivesNan) {
  const std::vector<CellSummary> s = SummarizeReplications({Row("fd", 1.0, "inner_failure")});
  EXPECT_TRUE(std::isnan(s[0].median_objective));
  EXPECT_TRUE(std::isnan(s[0].min_objective));
}

TEST(PlanMetadataTest, FlatKeyValueLines) {
  ExperimentPlan plan = SmallPlan();
  plan.base.smoothing_epsilon = 0.25;
  std::ostringstream out;
  WritePlanMetadata(out, plan);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    const std::size_t eq = line.find(" = ");
    ASSERT_NE(eq, std::string::npos) << line;
    EXPECT_EQ(line.substr(0, eq).find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789-"), std::string::npos) << line;
  }
  EXPECT_GT(lines, 30);
  EXPECT_NE(out.str().find("examples = nonconvex1d,portfolio\n"), std::string::npos);
  EXPECT_NE(out.str().find("smoothing-epsilon = 0.25\n"), std::string::npos);
}

TEST(GapCheckTest, OneRowPerCellAgainstConvexOptimum) {
  SolverSettings s = FastSettings();
  s.n_samples = 2000;
  const std::vector<GapRow> rows = RunGapCheck({5}, {0.1, 0.15}, s, 1, 3, 1);
  ASSERT_EQ(rows.size(), 2u);
  for (const GapRow& row : rows) {
    EXPECT_EQ(row.failures, 0);
    EXPECT_EQ(row.optimum, SolvePortfolioConvexReformulation(5, row.alpha).objective);
    EXPECT_NEAR(row.gap_percent, (row.optimum - row.best) / row.optimum * 100.0, 1e-12);
    EXPECT_LT(std::abs(row.gap_percent), 5.0);
  }
  std::ostringstream out;
  WriteGapCsv(out, rows);
  EXPECT_EQ(FirstLine(out.str()), "dim,alpha,optimum,best,gap_percent,failures");
  EXPECT_THROW(RunGapCheck({}, {0.1}, s, 1, 3, 1), ConfigError);
}

}  // namespace
}  // namespace quantalm
