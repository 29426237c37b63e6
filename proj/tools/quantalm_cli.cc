#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quantalm/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitSolverFailure = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raw option values as parsed; converted to library types after parsing.
struct Options {
  std::string example = "portfolio";
  quantalm::Index dim = 50;
  double alpha = 0.05;
  std::string method = "fd";
  std::uint64_t seed = 1;
  quantalm::Index joint_m = 5;
  double joint_u = 100.0;
  bool nonconvex_variance = true;
  double smoothing_epsilon = 0.0;
  std::string beta_policy = "constant";
  std::string sample_schedule = "fixed";
  std::string hessian_model = "structured";
  std::string outer_sampling = "single";

  std::vector<std::string> examples;
  std::vector<quantalm::Index> dims;
  std::vector<double> alphas;
  std::vector<quantalm::Index> sample_sizes;
  std::vector<double> betas;
  std::vector<std::string> methods;
  int replications = 0;  // 0: subcommand default
  int jobs = 1;
  std::string output;
  std::string trace;

  quantalm::SolverSettings settings;
};

void AddOptions(CLI::App& app, Options& o) {
  quantalm::SolverSettings& s = o.settings;

  app.add_option("--example", o.example, "nonconvex1d, portfolio or jointchance")->capture_default_str();
  app.add_option("--dim", o.dim, "Problem dimension (portfolio, jointchance)")->capture_default_str();
  app.add_option("--alpha", o.alpha, "Risk level in (0, 1)")->capture_default_str();
  app.add_option("--N,--samples", s.n_samples, "SAA sample size")->capture_default_str();
  app.add_option("--beta", s.beta, "Finite-difference step")->capture_default_str();
  app.add_option("--method", o.method, "Quantile gradient: fd or smoothing")->capture_default_str();
  app.add_option("--seed", o.seed, "Master seed")->capture_default_str();
  app.add_option("--joint-m", o.joint_m, "Constraint rows of jointchance")->capture_default_str();
  app.add_option("--joint-u", o.joint_u, "Bound U of jointchance")->capture_default_str();
  app.add_option("--nonconvex-variance", o.nonconvex_variance,
                 "Read the nonconvex1d noise parameters as variances")
      ->capture_default_str();
  app.add_option("--smoothing-epsilon", o.smoothing_epsilon, "Kernel bandwidth (default: 0.1 IQR)");

  app.add_option("--eta1", s.eta1, "Sufficient model decrease")->capture_default_str();
  app.add_option("--eta2", s.eta2, "Acceptance ratio")->capture_default_str();
  app.add_option("--gamma-inc", s.gamma_inc)->capture_default_str();
  app.add_option("--gamma-dec", s.gamma_dec)->capture_default_str();
  app.add_option("--delta0", s.delta0, "Initial trust-region radius")->capture_default_str();
  app.add_option("--r0", s.r0, "beta / delta under the radius policy")->capture_default_str();
  app.add_option("--beta-policy", o.beta_policy, "constant or radius")->capture_default_str();
  app.add_option("--sample-schedule", o.sample_schedule, "fixed or growing")->capture_default_str();
  app.add_option("--n0", s.n0, "First sample size of the growing schedule")->capture_default_str();
  app.add_option("--max-inner", s.max_inner, "Trust-region iteration cap")->capture_default_str();
  app.add_option("--hessian-model", o.hessian_model, "structured or direct")->capture_default_str();
  app.add_option("--fit-points", s.fit_points, "Hessian fit points (0: automatic)")->capture_default_str();

  app.add_option("--r-term", s.r_term, "Inner termination radius")->capture_default_str();
  app.add_option("--r-factor", s.r_factor, "Per-iteration factor on r")->capture_default_str();
  app.add_option("--eta-term", s.eta, "Feasibility tolerance")->capture_default_str();
  app.add_option("--eta-factor", s.eta_factor, "Per-iteration factor on eta")->capture_default_str();
  app.add_option("--theta-rho", s.theta_rho, "Penalty growth")->capture_default_str();
  app.add_option("--rho-init", s.rho_init)->capture_default_str();
  app.add_option("--mu-max", s.mu_max, "Multiplier safeguard")->capture_default_str();
  app.add_option("--max-outer", s.max_outer)->capture_default_str();
  app.add_option("--stall-tolerance", s.stall_tolerance)->capture_default_str();
  app.add_option("--outer-sampling", o.outer_sampling, "single, per-iteration or independent")
      ->capture_default_str();
  app.add_option("--epsilon", s.epsilon, "Recorded only")->capture_default_str();
  app.add_option("--theta-r", s.theta_r, "Recorded only")->capture_default_str();
  app.add_option("--theta-mu", s.theta_mu, "Recorded only")->capture_default_str();
  app.add_option("--n-val", s.n_validation, "Out-of-sample validation size")->capture_default_str();

  app.add_option("--examples", o.examples, "Grid axis (bench)")->delimiter(',');
  app.add_option("--dims", o.dims, "Grid axis (bench, gapcheck)")->delimiter(',');
  app.add_option("--alphas", o.alphas, "Grid axis (bench, gapcheck)")->delimiter(',');
  app.add_option("--sample-sizes", o.sample_sizes, "Grid axis (bench, sweep-beta)")->delimiter(',');
  app.add_option("--betas", o.betas, "Grid axis (bench, sweep-beta)")->delimiter(',');
  app.add_option("--methods", o.methods, "Grid axis (bench)")->delimiter(',');
  app.add_option("--replications", o.replications, "Runs per cell (bench 3, others 1)");
  app.add_option("--jobs", o.jobs, "Cells run in parallel")->capture_default_str();
  app.add_option("--output", o.output, "CSV path (solve, gapcheck: standard output if empty)");
  app.add_option("--trace", o.trace, "Outer iteration CSV (solve)");
}

quantalm::ProblemChoice ToChoice(const Options& o) {
  quantalm::ProblemChoice choice;
  choice.example = quantalm::ParseExample(o.example);
  choice.dim = o.dim;
  choice.alpha = o.alpha;
  choice.joint_m = o.joint_m;
  choice.joint_u = o.joint_u;
  choice.nonconvex_variance = o.nonconvex_variance;
  return choice;
}

void CheckCommon(const Options& o) {
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
  for (double a : o.alphas) {
    if (!(a > 0.0 && a < 1.0)) throw UsageError("--alphas entries must lie in (0, 1)");
  }
  if (o.settings.n_samples < 1) throw UsageError("--N must be >= 1");
  for (quantalm::Index n : o.sample_sizes) {
    if (n < 1) throw UsageError("--sample-sizes entries must be >= 1");
  }
  if (o.jobs < 1) throw UsageError("--jobs must be >= 1");
  if (o.replications < 0) throw UsageError("--replications must be >= 1");
}

quantalm::SolverSettings ToSettings(const CLI::App& app, const Options& o) {
  quantalm::SolverSettings s = o.settings;
  s.method = quantalm::ParseMethod(o.method);
  if (app.count("--smoothing-epsilon") > 0) s.smoothing_epsilon = o.smoothing_epsilon;
  if (o.beta_policy != "constant" && o.beta_policy != "radius") {
    throw UsageError("--beta-policy must be constant or radius");
  }
  s.radius_scaled_beta = o.beta_policy == "radius";
  if (o.sample_schedule != "fixed" && o.sample_schedule != "growing") {
    throw UsageError("--sample-schedule must be fixed or growing");
  }
  s.growing_samples = o.sample_schedule == "growing";
  s.hessian_model = quantalm::ParseHessianModel(o.hessian_model);
  s.sampling = quantalm::ParseOuterSampling(o.outer_sampling);
  return s;
}

template <typename T>
std::vector<T> OrDefault(const std::vector<T>& given, std::vector<T> fallback) {
  return given.empty() ? fallback : given;
}

// Opens `path`, or returns standard output when it is empty.
std::ostream& OpenOutput(const std::string& path, std::ofstream& file) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw UsageError("cannot write " + path);
  return file;
}

std::string Stem(const std::string& path) {
  const std::string ext = ".csv";
  if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
    return path.substr(0, path.size() - ext.size());
  }
  return path;
}

int RunSolveCommand(const CLI::App& app, const Options& o) {
  quantalm::RunRequest request;
  request.problem = ToChoice(o);
  request.settings = ToSettings(app, o);
  request.seed = o.seed;
  const quantalm::SolveOutcome outcome = quantalm::RunSolve(request);

  std::ofstream file;
  std::ostream& out = OpenOutput(o.output, file);
  quantalm::WriteReportHeader(out);
  quantalm::WriteReportRow(out, outcome.report);
  if (!o.trace.empty()) {
    std::ofstream trace(o.trace);
    if (!trace) throw UsageError("cannot write " + o.trace);
    quantalm::WriteOuterTraceCsv(trace, outcome.result.outer_trace);
  }
  if (!outcome.report.ok()) {
    std::cerr << "solver failure: " << outcome.report.status << ' ' << outcome.report.message << '\n';
    return kExitSolverFailure;
  }
  return kExitOk;
}

int RunPlan(const quantalm::ExperimentPlan& plan, int jobs) {
  plan.Validate();
  const std::vector<quantalm::RunReport> reports = quantalm::RunAll(quantalm::ExpandPlan(plan), jobs);

  std::ofstream rows(plan.output_path);
  if (!rows) throw UsageError("cannot write " + plan.output_path);
  quantalm::WriteReportHeader(rows);
  int failures = 0;
  for (const quantalm::RunReport& r : reports) {
    quantalm::WriteReportRow(rows, r);
    if (!r.ok()) ++failures;
  }
  const std::string stem = Stem(plan.output_path);
  std::ofstream summary(stem + ".summary.csv");
  quantalm::WriteSummaryCsv(summary, quantalm::SummarizeReplications(reports));
  std::ofstream meta(stem + ".meta");
  quantalm::WritePlanMetadata(meta, plan);

  std::cerr << reports.size() << " runs, " << failures << " failed; rows in " << plan.output_path << '\n';
  return failures > 0 ? kExitSolverFailure : kExitOk;
}

quantalm::ExperimentPlan BasePlan(const CLI::App& app, const Options& o) {
  quantalm::ExperimentPlan plan;
  plan.base = ToSettings(app, o);
  plan.problem_defaults = ToChoice(o);
  plan.master_seed = o.seed;
  plan.methods = {plan.base.method};
  return plan;
}

int RunBenchCommand(const CLI::App& app, const Options& o) {
  quantalm::ExperimentPlan plan = BasePlan(app, o);
  for (const std::string& e : OrDefault(o.examples, {o.example})) {
    plan.examples.push_back(quantalm::ParseExample(e));
  }
  plan.dims = OrDefault(o.dims, {o.dim});
  plan.alphas = OrDefault(o.alphas, {o.alpha});
  plan.sample_sizes = OrDefault(o.sample_sizes, {o.settings.n_samples});
  plan.betas = OrDefault(o.betas, {o.settings.beta});
  if (!o.methods.empty()) {
    plan.methods.clear();
    for (const std::string& m : o.methods) plan.methods.push_back(quantalm::ParseMethod(m));
  }
  plan.replications = o.replications > 0 ? o.replications : 3;
  plan.output_path = o.output.empty() ? "bench.csv" : o.output;
  return RunPlan(plan, o.jobs);
}

int RunSweepBetaCommand(const CLI::App& app, const Options& o) {
  quantalm::ExperimentPlan plan = BasePlan(app, o);
  plan.examples = {quantalm::ParseExample(o.example)};
  plan.dims = {o.dim};
  plan.alphas = {app.count("--alpha") > 0 ? o.alpha : 0.1};
  plan.sample_sizes = OrDefault(o.sample_sizes, {5000, 10000});
  plan.betas = OrDefault(o.betas, {1e-4, 5e-4, 1e-3, 5e-3, 1e-2});
  plan.replications = o.replications > 0 ? o.replications : 1;
  plan.output_path = o.output.empty() ? "sweep_beta.csv" : o.output;
  return RunPlan(plan, o.jobs);
}

int RunGapCheckCommand(const CLI::App& app, const Options& o) {
  if (app.count("--example") > 0 && o.example != "portfolio") {
    throw UsageError("gapcheck runs the portfolio example only");
  }
  const std::vector<quantalm::Index> dims = OrDefault(o.dims, {50, 100});
  const std::vector<double> alphas = OrDefault(o.alphas, {0.05, 0.1, 0.15});
  const int replications = o.replications > 0 ? o.replications : 1;
  const std::vector<quantalm::GapRow> rows =
      quantalm::RunGapCheck(dims, alphas, ToSettings(app, o), replications, o.seed, o.jobs);

  std::ofstream file;
  quantalm::WriteGapCsv(OpenOutput(o.output, file), rows);
  for (const quantalm::GapRow& r : rows) {
    if (r.failures == replications) return kExitSolverFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained optimization by empirical quantiles"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value file; command-line flags override it");
  app.get_config_formatter_base()->arrayDelimiter(',');
  Options options;
  AddOptions(app, options);

  CLI::App* solve = app.add_subcommand("solve", "Solve one problem and print its report row");
  CLI::App* bench = app.add_subcommand("bench", "Run an experiment grid");
  CLI::App* gapcheck = app.add_subcommand("gapcheck", "Portfolio optimality gap against the convex oracle");
  CLI::App* sweep = app.add_subcommand("sweep-beta", "Finite-difference step sweep");
  for (CLI::App* sub : {solve, bench, gapcheck, sweep}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    CheckCommon(options);
    if (solve->parsed()) return RunSolveCommand(app, options);
    if (bench->parsed()) return RunBenchCommand(app, options);
    if (gapcheck->parsed()) return RunGapCheckCommand(app, options);
    return RunSweepBetaCommand(app, options);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const quantalm::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const quantalm::ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kExitSolverFailure;
  }
}
