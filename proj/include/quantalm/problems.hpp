#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "quantalm/common.hpp"
#include "quantalm/merit.hpp"
#include "quantalm/quantile.hpp"
#include "quantalm/sampling.hpp"

namespace quantalm {

// minimize f(x) s.t. P[c1(x, xi) <= 0] >= 1 - alpha, c2(x) <= 0.
// Equalities are expected to be split into two inequalities before they
// get here. Immutable once built.
struct ProblemSpec {
  std::string id;
  Index n = 0;
  double alpha = 0.05;
  std::function<double(const Vector&)> objective;
  std::function<Vector(const Vector&)> objective_gradient;
  std::shared_ptr<const ScenarioConstraint> chance;
  Index n_deterministic = 0;
  std::function<Vector(const Vector&)> deterministic;            // c2(x), length n_deterministic
  std::function<Matrix(const Vector&)> deterministic_jacobian;   // n_deterministic x n
  DistributionSpec dist;
  Vector x_start;
  // Benchmarks stated as maximization report -f.
  bool report_negated = false;

  double ReportedObjective(const Vector& x) const {
    return report_negated ? -objective(x) : objective(x);
  }
  Index constraint_count() const { return 1 + n_deterministic; }
  // (g0 = empirical quantile on `batch`, c2(x)).
  ConstraintVector Constraints(const Vector& x, const SampleBatch& batch) const;
};

struct LocalOptimum {
  Vector x;
  double objective = 0.0;  // reported sense
};

// Closed-form references where the benchmark admits them.
struct OracleBundle {
  std::function<double(const Vector&)> quantile;
  std::function<Vector(const Vector&)> quantile_gradient;
  std::optional<double> optimum;  // reported sense
  std::optional<Vector> optimum_point;
  std::string optimum_provenance;
  std::vector<LocalOptimum> local_optima;

  bool has_quantile() const { return static_cast<bool>(quantile); }
};

struct BenchmarkProblem {
  ProblemSpec spec;
  OracleBundle oracle;
};

struct NonconvexOptions {
  // true: N(0, 3) / N(0, 144) give variances; false: standard deviations.
  bool second_parameter_is_variance = true;
  Index grid_points = 100000;
};

// Decision (x, y), minimize y s.t. P[c(x, xi) <= y] >= 1 - alpha with
// c(x, xi) = x^4/4 - x^3/3 - x^2 + 0.2 x - 19.5 + xi1 x + xi2.
BenchmarkProblem MakeNonconvex1D(double alpha, const NonconvexOptions& options = {});

// Deterministic part of the nonconvex constraint.
double NonconvexQuartic(double x);

// Decision (x_1..x_n, t), maximize t s.t. P[xi^T x >= t] >= 1 - alpha,
// sum x = 1, x >= 0. Throws ConfigError for n < 2.
BenchmarkProblem MakePortfolio(Index n, double alpha);

struct PortfolioData {
  Vector means;
  Vector std_devs;
};
PortfolioData PortfolioParameters(Index n);

struct PortfolioOptimum {
  double objective = 0.0;
  Vector x;
  double stationarity = 0.0;
  int iterations = 0;
};

// Maximizes mu^T x + q_alpha ||sigma o x|| over the simplex by projected
// gradient ascent with backtracking (alpha < 0.5 makes it concave).
PortfolioOptimum SolvePortfolioConvexReformulation(Index n, double alpha, double tol = 1e-8);

// Euclidean projection onto {x >= 0, sum x = 1}.
Vector ProjectOntoSimplex(const Vector& v);

// Decision x in R^n, maximize sum x s.t.
// P[sum_i xi_ij^2 x_i^2 <= U for all j] >= 1 - alpha, x >= 0.
BenchmarkProblem MakeJointChance(Index n, Index m, double bound_u, double alpha);

// Gaussian inverse CDF.
double NormalQuantile(double p);

struct OracleCrossCheck {
  double analytic = 0.0;
  double empirical = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares the analytic quantile with the empirical one on a fresh batch,
// tolerance 4 sqrt(alpha (1 - alpha)) / (density sqrt(N)) with the density
// at the quantile estimated by a symmetric difference of order statistics.
OracleCrossCheck CrossCheckOracle(const BenchmarkProblem& problem, const Vector& x,
                                  Index n_samples, std::uint64_t seed);

}  // namespace quantalm
