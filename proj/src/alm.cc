#include "quantalm/alm.hpp"

#include <cmath>
#include <iomanip>

#include "quantalm/quantile.hpp"

namespace quantalm {

double Schedule::At(int k) const {
  return std::max(floor, initial * std::pow(factor, static_cast<double>(k - 1)));
}

void AlmConfig::Validate() const {
  if (!(theta_rho > 1.0)) throw ConfigError("theta_rho must be > 1");
  if (!(mu_max > 0.0)) throw ConfigError("mu_max must be positive");
  if (!(rho_init > 0.0)) throw ConfigError("initial penalty must be positive");
  if (!(r_schedule.initial > 0.0) || !(eta_schedule.initial > 0.0) || !(r_schedule.factor > 0.0) ||
      !(eta_schedule.factor > 0.0)) {
    throw ConfigError("schedules must be positive");
  }
  if (n_validation < 1) throw ConfigError("validation sample size must be >= 1");
  if (max_outer < 1) throw ConfigError("max_outer must be >= 1");
  if (stall_iterations < 1) throw ConfigError("stall_iterations must be >= 1");
  inner.Validate();
}

const char* ToString(AlmStatus status) {
  switch (status) {
    case AlmStatus::kConverged: return "converged";
    case AlmStatus::kMaxOuter: return "max_outer";
    case AlmStatus::kInnerFailure: return "inner_failure";
  }
  return "unknown";
}

const char* ToString(OuterSampling sampling) {
  switch (sampling) {
    case OuterSampling::kSingleBatch: return "single";
    case OuterSampling::kPerIteration: return "per-iteration";
    case OuterSampling::kIndependentUpdate: return "independent";
  }
  return "unknown";
}

AlmResult AlmSolve(const ProblemSpec& problem, const Vector& x0, const AlmConfig& config) {
  config.Validate();
  if (x0.size() != problem.n || !x0.allFinite()) throw ConfigError("bad initial point");

  MeritParams params = MeritParams::Initial(problem.constraint_count(), config.rho_init, config.mu_max);
  AlmResult result;
  result.x_star = x0;
  int stalled = 0;

  for (int k = 1; k <= config.max_outer; ++k) {
    const double r_k = config.r_schedule.At(k);
    const double eta_k = config.eta_schedule.At(k);
    TrResult inner;
    ConstraintVector g;
    try {
      const auto outer = static_cast<std::uint64_t>(config.sampling == OuterSampling::kSingleBatch ? 1 : k);
      const std::uint64_t inner_seed = DeriveSeed(config.seed, {outer, 0});
      const std::uint64_t update_seed =
          config.sampling == OuterSampling::kIndependentUpdate ? DeriveSeed(config.seed, {outer, 1}) : inner_seed;
      inner = TrMinimize(problem, result.x_star, params, r_k, config.inner, inner_seed);
      const SampleBatch batch = DrawBatch(problem.dist, config.n_validation, update_seed);
      g = problem.Constraints(inner.x, batch);
    } catch (const std::exception& e) {
      result.status = AlmStatus::kInnerFailure;
      result.failure_message = e.what();
      break;
    }

    OuterTraceRow row;
    row.iteration = k;
    row.rho = params.rho;
    row.inner_iterations = static_cast<int>(inner.trace.size());
    row.inner_truncated = inner.truncated;
    row.step_norm = (inner.x - result.x_star).norm();
    row.objective = problem.ReportedObjective(inner.x);
    row.g0 = g.g0;

    params = UpdateMultipliers(g, params);
    row.sigma = FeasibilitySigma(g, params.mu);
    row.mu_norm = params.mu.norm();
    params = UpdatePenalty(row.sigma, eta_k, params, config.theta_rho);
    result.outer_trace.push_back(row);

    const bool moved_little = row.step_norm <= config.stall_tolerance * (1.0 + inner.x.norm());
    result.x_star = inner.x;
    stalled = (row.sigma <= eta_k && !inner.truncated && moved_little) ? stalled + 1 : 0;
    if (stalled >= config.stall_iterations) {
      result.status = AlmStatus::kConverged;
      break;
    }
  }
  result.mu_final = params.mu;
  result.mu_bar_final = params.mu_bar;
  result.rho_final = params.rho;
  return result;
}

ValidationReport ValidateSolution(const ProblemSpec& problem, const Vector& x, Index n_samples,
                                  double alpha, std::uint64_t seed, const std::optional<Vector>& mu) {
  if (n_samples < 1000) throw ArgumentError("validation needs at least 1000 scenarios");
  const SampleBatch batch = DrawBatch(problem.dist, n_samples, seed);
  Vector values = EvaluateScenarios(*problem.chance, x, batch);

  ValidationReport report;
  report.objective = problem.ReportedObjective(x);
  report.violation = static_cast<double>((values.array() > 0.0).count()) / static_cast<double>(n_samples);
  report.quantile =
      EmpiricalQuantileInPlace({values.data(), static_cast<std::size_t>(values.size())}, alpha);
  ConstraintVector g;
  g.g0 = report.quantile;
  if (problem.n_deterministic > 0) g.g_det = problem.deterministic(x);
  report.sigma = FeasibilitySigma(g, mu ? *mu : Vector::Zero(g.size()));
  return report;
}

void WriteOuterTraceCsv(std::ostream& out, const std::vector<OuterTraceRow>& trace) {
  out << "iter,objective,g0,sigma,rho,mu_norm,inner_iterations,inner_truncated,step_norm\n";
  out << std::setprecision(17);
  for (const OuterTraceRow& r : trace) {
    out << r.iteration << ',' << r.objective << ',' << r.g0 << ',' << r.sigma << ',' << r.rho << ','
        << r.mu_norm << ',' << r.inner_iterations << ',' << (r.inner_truncated ? 1 : 0) << ','
        << r.step_norm << '\n';
  }
}

}  // namespace quantalm
