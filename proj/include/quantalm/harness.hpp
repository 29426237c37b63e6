#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "quantalm/alm.hpp"
#include "quantalm/problems.hpp"

namespace quantalm {

enum class Example { kNonconvex1D, kPortfolio, kJointChance };
const char* ToString(Example example);
// Accepts "nonconvex1d", "portfolio" and "jointchance". Throws ConfigError.
Example ParseExample(const std::string& name);

const char* ToString(GradientMethod method);  // "fd" or "smoothing"
GradientMethod ParseMethod(const std::string& name);
OuterSampling ParseOuterSampling(const std::string& name);
HessianModel ParseHessianModel(const std::string& name);
const char* ToString(HessianModel model);

struct ProblemChoice {
  Example example = Example::kPortfolio;
  Index dim = 50;  // ignored by nonconvex1d
  double alpha = 0.05;
  Index joint_m = 5;
  double joint_u = 100.0;
  bool nonconvex_variance = true;
};

BenchmarkProblem MakeProblem(const ProblemChoice& choice);

// Every tunable of the solver, with the benchmark defaults.
struct SolverSettings {
  Index n_samples = 10000;
  double beta = 1e-3;
  GradientMethod method = GradientMethod::kFiniteDifference;
  std::optional<double> smoothing_epsilon;

  double eta1 = 0.1;
  double eta2 = 0.25;
  double gamma_inc = 2.0;
  double gamma_dec = 0.5;
  double delta0 = 1.0;
  double r0 = 0.1;
  bool radius_scaled_beta = false;
  bool growing_samples = false;
  Index n0 = 100;
  int max_inner = 10000;
  HessianModel hessian_model = HessianModel::kStructured;
  Index fit_points = 0;

  double r_term = 1e-5;
  double r_factor = 1.0;
  double eta = 1e-5;
  double eta_factor = 1.0;
  double theta_rho = 2.0;
  double rho_init = 10.0;
  double mu_max = 1e4;
  int max_outer = 50;
  double stall_tolerance = 1e-6;
  OuterSampling sampling = OuterSampling::kSingleBatch;
  double epsilon = 0.1;
  double theta_r = 0.5;
  double theta_mu = 0.5;

  Index n_validation = 100000;

  AlmConfig ToAlmConfig(std::uint64_t seed) const;
};

struct RunRequest {
  ProblemChoice problem;
  SolverSettings settings;
  std::uint64_t seed = 1;
  int replication = 0;
};

// One solver run. The objective is in the benchmark's reported sense.
struct RunReport {
  std::string example;
  Index dim = 0;
  double alpha = 0.0;
  Index n_samples = 0;
  double beta = 0.0;
  std::string method;
  int replication = 0;
  std::uint64_t seed = 0;
  std::string status;  // AlmStatus name, or "error"
  double objective = 0.0;
  double violation = 0.0;
  double sigma = 0.0;
  int outer_iterations = 0;
  double wall_seconds = 0.0;
  std::string message;

  bool ok() const { return status == "converged" || status == "max_outer"; }
};

struct SolveOutcome {
  RunReport report;
  AlmResult result;
};

// Runs AlmSolve and validates x* on n_validation fresh scenarios drawn
// from DeriveSeed(seed, {2}). Configuration errors propagate; failures
// inside the solver come back as status "inner_failure" or "error".
SolveOutcome RunSolve(const RunRequest& request);

void WriteReportHeader(std::ostream& out);
void WriteReportRow(std::ostream& out, const RunReport& report);

struct ExperimentPlan {
  std::vector<Example> examples;
  std::vector<Index> dims;
  std::vector<double> alphas;
  std::vector<Index> sample_sizes;
  std::vector<double> betas;
  std::vector<GradientMethod> methods;
  int replications = 3;
  std::uint64_t master_seed = 1;
  std::string output_path;
  SolverSettings base;
  ProblemChoice problem_defaults;

  // Throws ConfigError on an empty axis or replications < 1.
  void Validate() const;
};

// Cells in row-major order over (example, dim, alpha, N, beta, method),
// replications innermost. Replication r of every cell uses seed
// DeriveSeed(master_seed, {r}), so cells that differ only in beta or
// method are compared on common samples.
std::vector<RunRequest> ExpandPlan(const ExperimentPlan& plan);

// Runs every request, `jobs` at a time; reports come back in request
// order. Exceptions of a single run are recorded in its row.
std::vector<RunReport> RunAll(const std::vector<RunRequest>& requests, int jobs);

// Replications of one cell, in first-seen order. Statistics are over the
// runs that finished (ok()); NaN when none did.
struct CellSummary {
  RunReport cell;  // key fields of the cell; per-run fields unset
  int runs = 0;
  int failures = 0;
  double median_objective = 0.0;
  double min_objective = 0.0;
  double max_objective = 0.0;
  double median_violation = 0.0;
};
std::vector<CellSummary> SummarizeReplications(const std::vector<RunReport>& reports);
void WriteSummaryCsv(std::ostream& out, const std::vector<CellSummary>& summary);

// Flat key = value record of the plan and every solver setting.
void WritePlanMetadata(std::ostream& out, const ExperimentPlan& plan);

struct GapRow {
  Index dim = 0;
  double alpha = 0.0;
  double optimum = 0.0;  // convex reformulation
  double best = 0.0;     // best objective over replications
  double gap_percent = 0.0;
  int failures = 0;
};

// (optimum - best) / optimum * 100 per (dim, alpha) of the portfolio.
std::vector<GapRow> RunGapCheck(const std::vector<Index>& dims, const std::vector<double>& alphas,
                                const SolverSettings& settings, int replications,
                                std::uint64_t master_seed, int jobs);
void WriteGapCsv(std::ostream& out, const std::vector<GapRow>& rows);

}  // namespace quantalm
