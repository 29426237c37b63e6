#include "quantalm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <thread>
#include <tuple>

namespace quantalm {
namespace {

// Shortest text that reads back to the same double.
std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, result.ptr);
}

std::string CsvField(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c == '\n' ? ' ' : c;
  }
  return quoted + "\"";
}

Index ReportedDim(const ProblemChoice& choice) {
  return choice.example == Example::kNonconvex1D ? 1 : choice.dim;
}

double Median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

template <typename T, typename F>
std::string JoinList(const std::vector<T>& items, F format) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + format(items[i]);
  return out;
}

}  // namespace

const char* ToString(Example example) {
  switch (example) {
    case Example::kNonconvex1D: return "nonconvex1d";
    case Example::kPortfolio: return "portfolio";
    case Example::kJointChance: return "jointchance";
  }
  return "unknown";
}

Example ParseExample(const std::string& name) {
  if (name == "nonconvex1d") return Example::kNonconvex1D;
  if (name == "portfolio") return Example::kPortfolio;
  if (name == "jointchance") return Example::kJointChance;
  throw ConfigError("unknown example '" + name + "' (nonconvex1d, portfolio, jointchance)");
}

const char* ToString(GradientMethod method) {
  return method == GradientMethod::kFiniteDifference ? "fd" : "smoothing";
}

GradientMethod ParseMethod(const std::string& name) {
  if (name == "fd") return GradientMethod::kFiniteDifference;
  if (name == "smoothing") return GradientMethod::kSmoothing;
  throw ConfigError("unknown method '" + name + "' (fd, smoothing)");
}

OuterSampling ParseOuterSampling(const std::string& name) {
  if (name == "single") return OuterSampling::kSingleBatch;
  if (name == "per-iteration") return OuterSampling::kPerIteration;
  if (name == "independent") return OuterSampling::kIndependentUpdate;
  throw ConfigError("unknown outer sampling '" + name + "' (single, per-iteration, independent)");
}

const char* ToString(HessianModel model) {
  return model == HessianModel::kStructured ? "structured" : "direct";
}

HessianModel ParseHessianModel(const std::string& name) {
  if (name == "structured") return HessianModel::kStructured;
  if (name == "direct") return HessianModel::kDirect;
  throw ConfigError("unknown Hessian model '" + name + "' (structured, direct)");
}

BenchmarkProblem MakeProblem(const ProblemChoice& choice) {
  switch (choice.example) {
    case Example::kNonconvex1D:
      return MakeNonconvex1D(choice.alpha, NonconvexOptions{.second_parameter_is_variance = choice.nonconvex_variance});
    case Example::kPortfolio:
      return MakePortfolio(choice.dim, choice.alpha);
    case Example::kJointChance:
      return MakeJointChance(choice.dim, choice.joint_m, choice.joint_u, choice.alpha);
  }
  throw ConfigError("unknown example");
}

AlmConfig SolverSettings::ToAlmConfig(std::uint64_t seed) const {
  AlmConfig config;
  config.theta_rho = theta_rho;
  config.mu_max = mu_max;
  config.rho_init = rho_init;
  config.r_schedule = Schedule{r_term, r_factor, 0.0};
  config.eta_schedule = Schedule{eta, eta_factor, 0.0};
  config.n_validation = n_samples;
  config.max_outer = max_outer;
  config.sampling = sampling;
  config.stall_tolerance = stall_tolerance;
  config.epsilon = epsilon;
  config.theta_r = theta_r;
  config.theta_mu = theta_mu;
  config.seed = seed;

  TrustRegionOptions& inner = config.inner;
  inner.eta1 = eta1;
  inner.eta2 = eta2;
  inner.gamma_inc = gamma_inc;
  inner.gamma_dec = gamma_dec;
  inner.delta0 = delta0;
  inner.r0 = r0;
  inner.beta_policy = radius_scaled_beta ? BetaPolicy::kRadiusScaled : BetaPolicy::kConstant;
  inner.beta = beta;
  inner.sample_schedule = growing_samples ? SampleSchedule::kGrowing : SampleSchedule::kFixed;
  inner.n_max = n_samples;
  inner.n0 = n0;
  inner.gradient_method = method;
  inner.smoothing_epsilon = smoothing_epsilon;
  inner.hessian_model = hessian_model;
  inner.fit_points = fit_points;
  inner.max_iterations = max_inner;
  return config;
}

SolveOutcome RunSolve(const RunRequest& request) {
  const BenchmarkProblem problem = MakeProblem(request.problem);
  const AlmConfig config = request.settings.ToAlmConfig(request.seed);
  config.Validate();
  if (request.settings.n_validation < 1000) throw ConfigError("validation needs at least 1000 scenarios");

  SolveOutcome outcome;
  RunReport& report = outcome.report;
  report.example = ToString(request.problem.example);
  report.dim = ReportedDim(request.problem);
  report.alpha = request.problem.alpha;
  report.n_samples = request.settings.n_samples;
  report.beta = request.settings.beta;
  report.method = ToString(request.settings.method);
  report.replication = request.replication;
  report.seed = request.seed;

  const auto start = std::chrono::steady_clock::now();
  try {
    outcome.result = AlmSolve(problem.spec, problem.spec.x_start, config);
    report.status = ToString(outcome.result.status);
    report.message = outcome.result.failure_message;
    report.outer_iterations = static_cast<int>(outcome.result.outer_trace.size());
    if (!outcome.result.outer_trace.empty()) report.sigma = outcome.result.outer_trace.back().sigma;
    const ValidationReport check =
        ValidateSolution(problem.spec, outcome.result.x_star, request.settings.n_validation,
                         request.problem.alpha, DeriveSeed(request.seed, {2}));
    report.objective = check.objective;
    report.violation = check.violation;
  } catch (const std::exception& e) {
    report.status = "error";
    report.message = e.what();
    report.objective = std::numeric_limits<double>::quiet_NaN();
    report.violation = std::numeric_limits<double>::quiet_NaN();
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

void WriteReportHeader(std::ostream& out) {
  out << "example,dim,alpha,N,beta,method,replication,seed,status,objective,violation,sigma,"
         "outer_iterations,wall_seconds,message\n";
}

void WriteReportRow(std::ostream& out, const RunReport& r) {
  out << r.example << ',' << r.dim << ',' << FormatDouble(r.alpha) << ',' << r.n_samples << ','
      << FormatDouble(r.beta) << ',' << r.method << ',' << r.replication << ',' << r.seed << ','
      << r.status << ',' << FormatDouble(r.objective) << ',' << FormatDouble(r.violation) << ','
      << FormatDouble(r.sigma) << ',' << r.outer_iterations << ','
      << FormatDouble(std::round(r.wall_seconds * 1000.0) / 1000.0) << ',' << CsvField(r.message) << '\n';
}

void ExperimentPlan::Validate() const {
  if (examples.empty() || dims.empty() || alphas.empty() || sample_sizes.empty() || betas.empty() ||
      methods.empty()) {
    throw ConfigError("experiment grid has an empty axis");
  }
  if (replications < 1) throw ConfigError("replications must be >= 1");
}

std::vector<RunRequest> ExpandPlan(const ExperimentPlan& plan) {
  plan.Validate();
  std::vector<RunRequest> requests;
  for (Example example : plan.examples) {
    // The dimension axis does not apply to the one-dimensional example.
    const std::vector<Index> dims = example == Example::kNonconvex1D ? std::vector<Index>{1} : plan.dims;
    for (Index dim : dims) {
      for (double alpha : plan.alphas) {
        for (Index n : plan.sample_sizes) {
          for (double beta : plan.betas) {
            for (GradientMethod method : plan.methods) {
              for (int r = 0; r < plan.replications; ++r) {
                RunRequest request;
                request.problem = plan.problem_defaults;
                request.problem.example = example;
                request.problem.dim = dim;
                request.problem.alpha = alpha;
                request.settings = plan.base;
                request.settings.n_samples = n;
                request.settings.beta = beta;
                request.settings.method = method;
                request.seed = DeriveSeed(plan.master_seed, {static_cast<std::uint64_t>(r)});
                request.replication = r;
                requests.push_back(std::move(request));
              }
            }
          }
        }
      }
    }
  }
  return requests;
}

std::vector<RunReport> RunAll(const std::vector<RunRequest>& requests, int jobs) {
  std::vector<RunReport> reports(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        reports[i] = RunSolve(requests[i]).report;
      } catch (const std::exception& e) {
        RunReport& r = reports[i];
        r.example = ToString(requests[i].problem.example);
        r.dim = ReportedDim(requests[i].problem);
        r.alpha = requests[i].problem.alpha;
        r.n_samples = requests[i].settings.n_samples;
        r.beta = requests[i].settings.beta;
        r.method = ToString(requests[i].settings.method);
        r.replication = requests[i].replication;
        r.seed = requests[i].seed;
        r.status = "error";
        r.objective = r.violation = std::numeric_limits<double>::quiet_NaN();
        r.message = e.what();
      }
    }
  };
  const int n_threads = std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(1, requests.size())));
  if (n_threads == 1) {
    worker();
    return reports;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return reports;
}

std::vector<CellSummary> SummarizeReplications(const std::vector<RunReport>& reports) {
  using Key = std::tuple<std::string, Index, double, Index, double, std::string>;
  std::map<Key, std::size_t> index;
  std::vector<CellSummary> cells;
  std::vector<std::vector<double>> objectives, violations;
  for (const RunReport& r : reports) {
    const Key key{r.example, r.dim, r.alpha, r.n_samples, r.beta, r.method};
    auto [it, inserted] = index.emplace(key, cells.size());
    if (inserted) {
      CellSummary cell;
      cell.cell = r;
      cell.cell.replication = -1;
      cells.push_back(cell);
      objectives.emplace_back();
      violations.emplace_back();
    }
    CellSummary& cell = cells[it->second];
    ++cell.runs;
    if (!r.ok()) {
      ++cell.failures;
      continue;
    }
    objectives[it->second].push_back(r.objective);
    violations[it->second].push_back(r.violation);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::vector<double>& obj = objectives[i];
    cells[i].median_objective = Median(obj);
    cells[i].median_violation = Median(violations[i]);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    cells[i].min_objective = obj.empty() ? nan : *std::min_element(obj.begin(), obj.end());
    cells[i].max_objective = obj.empty() ? nan : *std::max_element(obj.begin(), obj.end());
  }
  return cells;
}

void WriteSummaryCsv(std::ostream& out, const std::vector<CellSummary>& summary) {
  out << "example,dim,alpha,N,beta,method,runs,failures,median_objective,min_objective,"
         "max_objective,median_violation\n";
  for (const CellSummary& s : summary) {
    const RunReport& c = s.cell;
    out << c.example << ',' << c.dim << ',' << FormatDouble(c.alpha) << ',' << c.n_samples << ','
        << FormatDouble(c.beta) << ',' << c.method << ',' << s.runs << ',' << s.failures << ','
        << FormatDouble(s.median_objective) << ',' << FormatDouble(s.min_objective) << ','
        << FormatDouble(s.max_objective) << ',' << FormatDouble(s.median_violation) << '\n';
  }
}

void WritePlanMetadata(std::ostream& out, const ExperimentPlan& plan) {
  const SolverSettings& s = plan.base;
  auto d = [](double v) { return FormatDouble(v); };
  auto i = [](Index v) { return std::to_string(v); };
  out << "examples = " << JoinList(plan.examples, [](Example e) { return std::string(ToString(e)); }) << '\n'
      << "dims = " << JoinList(plan.dims, i) << '\n'
      << "alphas = " << JoinList(plan.alphas, d) << '\n'
      << "sample-sizes = " << JoinList(plan.sample_sizes, i) << '\n'
      << "betas = " << JoinList(plan.betas, d) << '\n'
      << "methods = " << JoinList(plan.methods, [](GradientMethod m) { return std::string(ToString(m)); }) << '\n'
      << "replications = " << plan.replications << '\n'
      << "seed = " << plan.master_seed << '\n'
      << "output = " << plan.output_path << '\n'
      << "joint-m = " << plan.problem_defaults.joint_m << '\n'
      << "joint-u = " << d(plan.problem_defaults.joint_u) << '\n'
      << "nonconvex-variance = " << (plan.problem_defaults.nonconvex_variance ? "true" : "false") << '\n'
      << "eta1 = " << d(s.eta1) << '\n'
      << "eta2 = " << d(s.eta2) << '\n'
      << "gamma-inc = " << d(s.gamma_inc) << '\n'
      << "gamma-dec = " << d(s.gamma_dec) << '\n'
      << "delta0 = " << d(s.delta0) << '\n'
      << "r0 = " << d(s.r0) << '\n'
      << "beta-policy = " << (s.radius_scaled_beta ? "radius" : "constant") << '\n'
      << "sample-schedule = " << (s.growing_samples ? "growing" : "fixed") << '\n'
      << "n0 = " << s.n0 << '\n'
      << "max-inner = " << s.max_inner << '\n'
      << "hessian-model = " << ToString(s.hessian_model) << '\n'
      << "fit-points = " << s.fit_points << '\n'
      << "r-term = " << d(s.r_term) << '\n'
      << "r-factor = " << d(s.r_factor) << '\n'
      << "eta-term = " << d(s.eta) << '\n'
      << "eta-factor = " << d(s.eta_factor) << '\n'
      << "theta-rho = " << d(s.theta_rho) << '\n'
      << "rho-init = " << d(s.rho_init) << '\n'
      << "mu-max = " << d(s.mu_max) << '\n'
      << "max-outer = " << s.max_outer << '\n'
      << "stall-tolerance = " << d(s.stall_tolerance) << '\n'
      << "outer-sampling = " << ToString(s.sampling) << '\n'
      << "epsilon = " << d(s.epsilon) << '\n'
      << "theta-r = " << d(s.theta_r) << '\n'
      << "theta-mu = " << d(s.theta_mu) << '\n'
      << "n-val = " << s.n_validation << '\n';
  if (s.smoothing_epsilon) out << "smoothing-epsilon = " << d(*s.smoothing_epsilon) << '\n';
}

std::vector<GapRow> RunGapCheck(const std::vector<Index>& dims, const std::vector<double>& alphas,
                                const SolverSettings& settings, int replications,
                                std::uint64_t master_seed, int jobs) {
  if (dims.empty() || alphas.empty()) throw ConfigError("gap check needs at least one dim and alpha");
  if (replications < 1) throw ConfigError("replications must be >= 1");
  std::vector<RunRequest> requests;
  for (Index dim : dims) {
    for (double alpha : alphas) {
      for (int r = 0; r < replications; ++r) {
        RunRequest request;
        request.problem.example = Example::kPortfolio;
        request.problem.dim = dim;
        request.problem.alpha = alpha;
        request.settings = settings;
        request.seed = DeriveSeed(master_seed, {static_cast<std::uint64_t>(r)});
        request.replication = r;
        requests.push_back(request);
      }
    }
  }
  const std::vector<RunReport> reports = RunAll(requests, jobs);

  std::vector<GapRow> rows;
  std::size_t k = 0;
  for (Index dim : dims) {
    for (double alpha : alphas) {
      GapRow row;
      row.dim = dim;
      row.alpha = alpha;
      row.optimum = SolvePortfolioConvexReformulation(dim, alpha).objective;
      row.best = -std::numeric_limits<double>::infinity();
      for (int r = 0; r < replications; ++r, ++k) {
        if (reports[k].ok()) {
          row.best = std::max(row.best, reports[k].objective);
        } else {
          ++row.failures;
        }
      }
      if (row.failures == replications) row.best = std::numeric_limits<double>::quiet_NaN();
      row.gap_percent = (row.optimum - row.best) / row.optimum * 100.0;
      rows.push_back(row);
    }
  }
  return rows;
}

void WriteGapCsv(std::ostream& out, const std::vector<GapRow>& rows) {
  out << "dim,alpha,optimum,best,gap_percent,failures\n";
  for (const GapRow& r : rows) {
    out << r.dim << ',' << FormatDouble(r.alpha) << ',' << FormatDouble(r.optimum) << ','
        << FormatDouble(r.best) << ',' << FormatDouble(r.gap_percent) << ',' << r.failures << '\n';
  }
}

}  // namespace quantalm
