#include "quantalm/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace quantalm {
namespace {

class NonconvexConstraint final : public ScenarioConstraint {
 public:
  // z = (x, y), scenario = (xi1, xi2).
  double Value(const Vector& z, std::span<const double> xi) const override {
    return NonconvexQuartic(z[0]) + xi[0] * z[0] + xi[1] - z[1];
  }
  bool HasScenarioGradient() const override { return true; }
  Vector ScenarioGradient(const Vector& z, std::span<const double> xi) const override {
    const double x = z[0];
    Vector g(2);
    g << x * x * x - x * x - 2.0 * x + 0.2 + xi[0], -1.0;
    return g;
  }
  void EvaluateCoordinateShift(const Vector& z, const SampleBatch& batch, const Vector& base,
                               Index k, double step, Eigen::Ref<Vector> out) const override {
    if (k == 1) {
      out = base.array() - step;
      return;
    }
    ScenarioConstraint::EvaluateCoordinateShift(z, batch, base, k, step, out);
  }
};

// z = (x_1..x_n, t), c1 = t - xi^T x.
class PortfolioConstraint final : public ScenarioConstraint {
 public:
  explicit PortfolioConstraint(Index n) : n_(n) {}

  double Value(const Vector& z, std::span<const double> xi) const override {
    double r = 0.0;
    for (Index i = 0; i < n_; ++i) r += xi[static_cast<std::size_t>(i)] * z[i];
    return z[n_] - r;
  }
  bool HasScenarioGradient() const override { return true; }
  Vector ScenarioGradient(const Vector&, std::span<const double> xi) const override {
    Vector g(n_ + 1);
    for (Index i = 0; i < n_; ++i) g[i] = -xi[static_cast<std::size_t>(i)];
    g[n_] = 1.0;
    return g;
  }
  Vector WeightedScenarioGradient(const Vector&, const SampleBatch& batch,
                                  const Vector& weights) const override {
    Vector g(n_ + 1);
    g.head(n_).noalias() = -(batch.columns().transpose() * weights);
    g[n_] = weights.sum();
    return g;
  }
  void EvaluateBatch(const Vector& z, const SampleBatch& batch,
                     Eigen::Ref<Vector> out) const override {
    out.noalias() = -(batch.scenarios() * z.head(n_));
    out.array() += z[n_];
  }
  void EvaluateCoordinateShift(const Vector&, const SampleBatch& batch, const Vector& base,
                               Index k, double step, Eigen::Ref<Vector> out) const override {
    if (k == n_) {
      out = base.array() + step;
    } else {
      out = base - step * batch.columns().col(k);
    }
  }

 private:
  Index n_;
};

// c1 = max_j sum_i xi_ij^2 x_i^2 - U; scenario layout i * m + j.
class JointChanceConstraint final : public ScenarioConstraint {
 public:
  JointChanceConstraint(Index n, Index m, double bound_u) : n_(n), m_(m), bound_u_(bound_u) {}

  double Value(const Vector& x, std::span<const double> xi) const override {
    return RowSum(x, xi, ArgMax(x, xi)) - bound_u_;
  }
  bool HasScenarioGradient() const override { return true; }
  Vector ScenarioGradient(const Vector& x, std::span<const double> xi) const override {
    const Index j = ArgMax(x, xi);
    Vector g(n_);
    for (Index i = 0; i < n_; ++i) {
      const double e = xi[static_cast<std::size_t>(i * m_ + j)];
      g[i] = 2.0 * e * e * x[i];
    }
    return g;
  }
  void EvaluateBatch(const Vector& x, const SampleBatch& batch,
                     Eigen::Ref<Vector> out) const override {
    const Vector x2 = x.cwiseAbs2();
    std::vector<double> sums(static_cast<std::size_t>(m_));
    for (Index s = 0; s < batch.size(); ++s) {
      const double* row = batch.scenarios().data() + s * batch.scenario_dimension();
      std::fill(sums.begin(), sums.end(), 0.0);
      for (Index i = 0; i < n_; ++i) {
        for (Index j = 0; j < m_; ++j) {
          const double e = row[i * m_ + j];
          sums[static_cast<std::size_t>(j)] += e * e * x2[i];
        }
      }
      out[s] = *std::max_element(sums.begin(), sums.end()) - bound_u_;
    }
  }

 private:
  double RowSum(const Vector& x, std::span<const double> xi, Index j) const {
    double sum = 0.0;
    for (Index i = 0; i < n_; ++i) {
      const double e = xi[static_cast<std::size_t>(i * m_ + j)];
      sum += e * e * x[i] * x[i];
    }
    return sum;
  }
  // Lowest index wins ties.
  Index ArgMax(const Vector& x, std::span<const double> xi) const {
    Index best = 0;
    double best_value = RowSum(x, xi, 0);
    for (Index j = 1; j < m_; ++j) {
      const double v = RowSum(x, xi, j);
      if (v > best_value) {
        best_value = v;
        best = j;
      }
    }
    return best;
  }

  Index n_;
  Index m_;
  double bound_u_;
};

void CheckAlpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

double GoldenSectionMinimize(const std::function<double(double)>& f, double lo, double hi,
                             double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

ConstraintVector ProblemSpec::Constraints(const Vector& x, const SampleBatch& batch) const {
  ConstraintVector g;
  g.g0 = QuantileOfConstraint(*chance, x, batch, alpha);
  g.g_det = n_deterministic > 0 ? deterministic(x) : Vector();
  return g;
}

double NormalQuantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double NonconvexQuartic(double x) {
  const double x2 = x * x;
  return 0.25 * x2 * x2 - x2 * x / 3.0 - x2 + 0.2 * x - 19.5;
}

BenchmarkProblem MakeNonconvex1D(double alpha, const NonconvexOptions& options) {
  CheckAlpha(alpha);
  Vector means = Vector::Zero(2);
  Vector params(2);
  params << 3.0, 144.0;
  IndependentGaussian gauss = options.second_parameter_is_variance
                                  ? IndependentGaussian{means, params}
                                  : IndependentGaussian::FromStdDevs(means, params);
  const double var1 = gauss.variances[0];
  const double var2 = gauss.variances[1];

  ProblemSpec spec{
      .id = "nonconvex1d",
      .n = 2,
      .alpha = alpha,
      .objective = [](const Vector& z) { return z[1]; },
      .objective_gradient = [](const Vector&) { return Vector::Unit(2, 1).eval(); },
      .chance = std::make_shared<NonconvexConstraint>(),
      .n_deterministic = 0,
      .deterministic = {},
      .deterministic_jacobian = {},
      .dist = DistributionSpec(std::move(gauss)),
      .x_start = Vector::Zero(2),
      .report_negated = false,
  };

  const double z = NormalQuantile(1.0 - alpha);
  auto quantile_of_x = [=](double x) { return NonconvexQuartic(x) + z * std::sqrt(var1 * x * x + var2); };

  OracleBundle oracle;
  oracle.quantile = [=](const Vector& v) { return quantile_of_x(v[0]) - v[1]; };
  oracle.quantile_gradient = [=](const Vector& v) {
    const double x = v[0];
    Vector g(2);
    g << x * x * x - x * x - 2.0 * x + 0.2 + z * var1 * x / std::sqrt(var1 * x * x + var2), -1.0;
    return g;
  };

  // Grid over [-5, 5], every interior local minimum refined by golden section.
  const Index n_grid = std::max<Index>(options.grid_points, 3);
  const double lo = -5.0, hi = 5.0, h = (hi - lo) / static_cast<double>(n_grid - 1);
  std::vector<double> values(static_cast<std::size_t>(n_grid));
  for (Index k = 0; k < n_grid; ++k) values[static_cast<std::size_t>(k)] = quantile_of_x(lo + h * static_cast<double>(k));
  for (Index k = 1; k + 1 < n_grid; ++k) {
    const auto u = static_cast<std::size_t>(k);
    if (values[u] <= values[u - 1] && values[u] < values[u + 1]) {
      const double xk = lo + h * static_cast<double>(k);
      const double x_best = GoldenSectionMinimize(quantile_of_x, xk - h, xk + h, 1e-12);
      const double q = quantile_of_x(x_best);
      Vector point(2);
      point << x_best, q;
      oracle.local_optima.push_back({point, q});
    }
  }
  const auto best = std::min_element(oracle.local_optima.begin(), oracle.local_optima.end(),
                                     [](const auto& a, const auto& b) { return a.objective < b.objective; });
  if (best != oracle.local_optima.end()) {
    oracle.optimum = best->objective;
    oracle.optimum_point = best->x;
    oracle.optimum_provenance = "1-D grid search over [-5, 5] with golden-section refinement";
  }
  return {std::move(spec), std::move(oracle)};
}

PortfolioData PortfolioParameters(Index n) {
  if (n < 2) throw ConfigError("portfolio needs at least two assets");
  PortfolioData d{Vector(n), Vector(n)};
  for (Index i = 1; i <= n; ++i) {
    const double frac = static_cast<double>(n - i) / static_cast<double>(n - 1);
    d.means[i - 1] = 1.05 + 0.3 * frac;
    d.std_devs[i - 1] = (0.05 + 0.6 * frac) / 3.0;
  }
  return d;
}

Vector ProjectOntoSimplex(const Vector& v) {
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0).matrix();
}

PortfolioOptimum SolvePortfolioConvexReformulation(Index n, double alpha, double tol) {
  CheckAlpha(alpha);
  if (!(alpha < 0.5)) throw ConfigError("convex reformulation requires alpha < 0.5");
  const PortfolioData d = PortfolioParameters(n);
  const double q = NormalQuantile(alpha);
  const Vector var = d.std_devs.cwiseAbs2();

  auto value = [&](const Vector& x) { return d.means.dot(x) + q * std::sqrt(var.dot(x.cwiseAbs2())); };
  auto gradient = [&](const Vector& x) -> Vector {
    const double s = std::sqrt(var.dot(x.cwiseAbs2()));
    return d.means + (q / s) * var.cwiseProduct(x);
  };

  PortfolioOptimum out;
  Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
  double step = 1.0;
  double fx = value(x);
  for (int it = 0; it < 1000000; ++it) {
    const Vector g = gradient(x);
    out.stationarity = (x - ProjectOntoSimplex(x + g)).norm();
    out.iterations = it;
    if (out.stationarity <= tol) break;
    // Backtracking on the projection arc (ascent form of the sufficient
    // increase condition for the projected gradient method).
    for (;;) {
      const Vector trial = ProjectOntoSimplex(x + step * g);
      const Vector diff = trial - x;
      const double f_trial = value(trial);
      if (f_trial >= fx + g.dot(diff) - diff.squaredNorm() / (2.0 * step) || step < 1e-16) {
        x = trial;
        fx = f_trial;
        break;
      }
      step *= 0.5;
    }
    step *= 2.0;
  }
  out.objective = fx;
  out.x = x;
  return out;
}

BenchmarkProblem MakePortfolio(Index n, double alpha) {
  CheckAlpha(alpha);
  const PortfolioData d = PortfolioParameters(n);

  Vector start = Vector::Zero(n + 1);
  start.head(n).setConstant(1.0 / static_cast<double>(n));

  ProblemSpec spec{
      .id = "portfolio",
      .n = n + 1,
      .alpha = alpha,
      .objective = [n](const Vector& z) { return -z[n]; },
      .objective_gradient = [n](const Vector&) { return (-Vector::Unit(n + 1, n)).eval(); },
      .chance = std::make_shared<PortfolioConstraint>(n),
      // -x_i <= 0, sum x - 1 <= 0, 1 - sum x <= 0.
      .n_deterministic = n + 2,
      .deterministic =
          [n](const Vector& z) {
            Vector g(n + 2);
            g.head(n) = -z.head(n);
            const double s = z.head(n).sum();
            g[n] = s - 1.0;
            g[n + 1] = 1.0 - s;
            return g;
          },
      .deterministic_jacobian =
          [n](const Vector&) {
            Matrix j = Matrix::Zero(n + 2, n + 1);
            j.topLeftCorner(n, n) = -Matrix::Identity(n, n);
            j.block(n, 0, 1, n).setOnes();
            j.block(n + 1, 0, 1, n).setConstant(-1.0);
            return j;
          },
      .dist = DistributionSpec(IndependentGaussian{d.means, d.std_devs.cwiseAbs2()}),
      .x_start = start,
      .report_negated = true,
  };

  const double q = NormalQuantile(alpha);
  const Vector means = d.means;
  const Vector var = d.std_devs.cwiseAbs2();
  OracleBundle oracle;
  // (1 - alpha)-quantile of t - xi^T x is t - (alpha-quantile of xi^T x).
  oracle.quantile = [=](const Vector& z) {
    const Vector x = z.head(n);
    return z[n] - means.dot(x) - q * std::sqrt(var.dot(x.cwiseAbs2()));
  };
  oracle.quantile_gradient = [=](const Vector& z) {
    const Vector x = z.head(n);
    const double s = std::sqrt(var.dot(x.cwiseAbs2()));
    Vector g(n + 1);
    g.head(n) = -means - (q / s) * var.cwiseProduct(x);
    g[n] = 1.0;
    return g;
  };
  if (alpha < 0.5) {
    const PortfolioOptimum opt = SolvePortfolioConvexReformulation(n, alpha);
    Vector point(n + 1);
    point << opt.x, opt.objective;
    oracle.optimum = opt.objective;
    oracle.optimum_point = point;
    oracle.optimum_provenance = "second-order-cone reformulation, projected gradient over the simplex";
  }
  return {std::move(spec), std::move(oracle)};
}

BenchmarkProblem MakeJointChance(Index n, Index m, double bound_u, double alpha) {
  CheckAlpha(alpha);
  if (n < 1 || m < 1) throw ConfigError("joint chance problem needs n >= 1 and m >= 1");
  if (!(bound_u > 0.0)) throw ConfigError("joint chance bound U must be positive");

  ProblemSpec spec{
      .id = "jointchance",
      .n = n,
      .alpha = alpha,
      .objective = [](const Vector& x) { return -x.sum(); },
      .objective_gradient = [n](const Vector&) { return Vector::Constant(n, -1.0).eval(); },
      .chance = std::make_shared<JointChanceConstraint>(n, m, bound_u),
      .n_deterministic = n,
      .deterministic = [](const Vector& x) { return (-x).eval(); },
      .deterministic_jacobian = [n](const Vector&) { return (-Matrix::Identity(n, n)).eval(); },
      .dist = DistributionSpec(JointChanceCorrelated{n, m}),
      .x_start = Vector::Zero(n),
      .report_negated = true,
  };
  return {std::move(spec), OracleBundle{}};
}

OracleCrossCheck CrossCheckOracle(const BenchmarkProblem& problem, const Vector& x,
                                  Index n_samples, std::uint64_t seed) {
  if (!problem.oracle.has_quantile()) throw ConfigError("problem has no analytic quantile");
  const ProblemSpec& spec = problem.spec;
  const SampleBatch batch = DrawBatch(spec.dist, n_samples, seed);
  Vector values = EvaluateScenarios(*spec.chance, x, batch);
  const std::span<double> view{values.data(), static_cast<std::size_t>(values.size())};

  OracleCrossCheck out;
  out.analytic = problem.oracle.quantile(x);
  out.empirical = EmpiricalQuantileInPlace(view, spec.alpha);
  const double h = std::min({0.01, spec.alpha / 2.0, (1.0 - spec.alpha) / 2.0});
  const double upper = EmpiricalQuantileInPlace(view, spec.alpha - h);
  const double lower = EmpiricalQuantileInPlace(view, spec.alpha + h);
  const double density = 2.0 * h / std::max(upper - lower, 1e-300);
  const double a = spec.alpha;
  out.tolerance = 4.0 * std::sqrt(a * (1.0 - a)) / (density * std::sqrt(static_cast<double>(n_samples)));
  out.passed = std::abs(out.analytic - out.empirical) <= out.tolerance;
  return out;
}

}  // namespace quantalm
