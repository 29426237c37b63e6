#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "quantalm/problems.hpp"

namespace quantalm {
namespace {

TEST(NormalQuantileTest, KnownValues) {
  EXPECT_NEAR(NormalQuantile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(NormalQuantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(NormalQuantile(0.9), 1.2815515655446004, 1e-12);
  EXPECT_NEAR(NormalQuantile(0.05), -1.6448536269514722, 1e-12);
}

TEST(ProjectOntoSimplexTest, PropertyFeasibleIdempotentAndOptimal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo;
  for (int trial = 0; trial < 300; ++trial) {
    const Index n = 1 + trial % 9;
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = 2.0 * normal(rng);
    const Vector p = ProjectOntoSimplex(v);
    ASSERT_NEAR(p.sum(), 1.0, 1e-12);
    ASSERT_TRUE((p.array() >= 0.0).all());
    ASSERT_LT((ProjectOntoSimplex(p) - p).norm(), 1e-12);
    // Variational inequality (v - p)^T (y - p) <= 0 for y in the simplex.
    for (int k = 0; k < 5; ++k) {
      Vector y(n);
      for (Index i = 0; i < n; ++i) y[i] = expo(rng);
      y /= y.sum();
      ASSERT_LE((v - p).dot(y - p), 1e-10);
    }
  }
}

TEST(PortfolioTest, ParametersFollowLinearSpread) {
  const PortfolioData d = PortfolioParameters(5);
  EXPECT_DOUBLE_EQ(d.means[0], 1.35);
  EXPECT_DOUBLE_EQ(d.means[4], 1.05);
  EXPECT_NEAR(d.std_devs[0], 0.65 / 3.0, 1e-15);
  EXPECT_NEAR(d.std_devs[4], 0.05 / 3.0, 1e-15);
  EXPECT_THROW(PortfolioParameters(1), ConfigError);
}

struct Table2Row {
  Index dim;
  double alpha;
  double opt;
};

// Published optimal objectives of the convex reformulation, four decimals.
TEST(PortfolioTest, ConvexOptimumMatchesReferenceValues) {
  for (const Table2Row& row : {Table2Row{50, 0.05, 1.2291}, Table2Row{50, 0.1, 1.2468}, Table2Row{50, 0.15, 1.2600},
                               Table2Row{100, 0.05, 1.2521}, Table2Row{100, 0.1, 1.2666},
                               Table2Row{100, 0.15, 1.2773}}) {
    const PortfolioOptimum opt = SolvePortfolioConvexReformulation(row.dim, row.alpha);
    EXPECT_NEAR(opt.objective, row.opt, 5e-5) << row.dim << " " << row.alpha;
    EXPECT_LE(opt.stationarity, 1e-8);
  }
}

// Property: no point of the simplex beats the convex optimum.
TEST(PortfolioTest, ConvexOptimumDominatesRandomPortfolios) {
  const Index n = 20;
  const double alpha = 0.1;
  const PortfolioOptimum opt = SolvePortfolioConvexReformulation(n, alpha);
  const PortfolioData d = PortfolioParameters(n);
  const double q = NormalQuantile(alpha);
  auto value = [&](const Vector& x) { return d.means.dot(x) + q * d.std_devs.cwiseProduct(x).norm(); };
  EXPECT_NEAR(value(opt.x), opt.objective, 1e-12);
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> expo;
  for (int trial = 0; trial < 2000; ++trial) {
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = std::pow(expo(rng), 1 + trial % 4);
    y /= y.sum();
    ASSERT_LE(value(y), opt.objective + 1e-12);
    // Also along the segment towards the optimum (concavity).
    ASSERT_LE(value(0.5 * (y + opt.x)), opt.objective + 1e-12);
  }
}

TEST(PortfolioTest, ConvexReformulationNeedsSmallAlpha) {
  EXPECT_THROW(SolvePortfolioConvexReformulation(10, 0.6), ConfigError);
}

TEST(PortfolioTest, ProblemShape) {
  const BenchmarkProblem p = MakePortfolio(4, 0.1);
  EXPECT_EQ(p.spec.n, 5);
  EXPECT_EQ(p.spec.n_deterministic, 6);
  EXPECT_TRUE(p.spec.report_negated);
  Vector z(5);
  z << 0.1, 0.2, 0.3, 0.4, 1.2;
  EXPECT_DOUBLE_EQ(p.spec.ReportedObjective(z), 1.2);
  const Vector g = p.spec.deterministic(z);
  EXPECT_NEAR(g[4], 0.0, 1e-15);
  EXPECT_NEAR(g[5], 0.0, 1e-15);
  EXPECT_EQ(g[0], -0.1);
  // Scenario value: t - xi^T x.
  std::vector<double> xi = {1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(p.spec.chance->Value(z, xi), 1.2 - 3.0, 1e-12);
  EXPECT_THROW(MakePortfolio(1, 0.1), ConfigError);
  EXPECT_THROW(MakePortfolio(5, 0.0), ConfigError);
}

TEST(PortfolioTest, JacobianMatchesFiniteDifferences) {
  const BenchmarkProblem p = MakePortfolio(3, 0.1);
  Vector z(4);
  z << 0.2, 0.5, 0.3, 1.0;
  const Matrix jac = p.spec.deterministic_jacobian(z);
  for (Index k = 0; k < 4; ++k) {
    const Vector e = Vector::Unit(4, k) * 1e-6;
    const Vector fd = (p.spec.deterministic(z + e) - p.spec.deterministic(z - e)) / 2e-6;
    EXPECT_LT((jac.col(k) - fd).norm(), 1e-8);
  }
}

TEST(PortfolioTest, OracleQuantileGradientMatchesFiniteDifferences) {
  const BenchmarkProblem p = MakePortfolio(6, 0.05);
  Vector z = p.spec.x_start;
  z[6] = 1.1;
  const Vector g = p.oracle.quantile_gradient(z);
  for (Index k = 0; k < 7; ++k) {
    const Vector e = Vector::Unit(7, k) * 1e-6;
    EXPECT_NEAR(g[k], (p.oracle.quantile(z + e) - p.oracle.quantile(z - e)) / 2e-6, 1e-7);
  }
}

TEST(PortfolioTest, OracleAgreesWithSampling) {
  const BenchmarkProblem p = MakePortfolio(10, 0.1);
  Vector z = p.spec.x_start;
  z[10] = 1.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) EXPECT_TRUE(CrossCheckOracle(p, z, 20000, seed).passed);
}

// Closed form with variances 3 and 144 at alpha = 0.1: the local minimum
// in x < 0 sits near -0.963 with value -4.5808; the global one is -5.817.
TEST(NonconvexTest, LocalAndGlobalOptima) {
  const BenchmarkProblem p = MakeNonconvex1D(0.1);
  ASSERT_EQ(p.oracle.local_optima.size(), 2u);
  const LocalOptimum& left = p.oracle.local_optima[0];
  EXPECT_NEAR(left.x[0], -0.963, 2e-3);
  EXPECT_NEAR(left.objective, -4.5808, 1e-4);
  EXPECT_NEAR(*p.oracle.optimum, -5.8173, 1e-4);
  EXPECT_GT(p.oracle.optimum_point->x(), 1.8);
}

TEST(NonconvexTest, LocalMinimumSatisfiesStationarity) {
  const BenchmarkProblem p = MakeNonconvex1D(0.1);
  for (const LocalOptimum& opt : p.oracle.local_optima) {
    Vector z = opt.x;
    z[1] = 0.0;
    EXPECT_NEAR(p.oracle.quantile_gradient(z)[0], 0.0, 1e-6);
  }
}

// Reading both parameters as standard deviations: Q(x) = d(x) + z sqrt(9 x^2 + 144^2).
TEST(NonconvexTest, StdDevReadingIsAvailable) {
  const BenchmarkProblem p = MakeNonconvex1D(0.1, NonconvexOptions{.second_parameter_is_variance = false});
  const double z = NormalQuantile(0.9);
  auto q = [z](double x) { return NonconvexQuartic(x) + z * std::sqrt(9.0 * x * x + 144.0 * 144.0); };
  ASSERT_FALSE(p.oracle.local_optima.empty());
  for (const LocalOptimum& opt : p.oracle.local_optima) {
    const double x = opt.x[0];
    EXPECT_NEAR(opt.objective, q(x), 1e-9);
    EXPECT_LE(q(x), q(x - 1e-3));
    EXPECT_LE(q(x), q(x + 1e-3));
  }
  EXPECT_GT(*p.oracle.optimum, 100.0);
}

TEST(NonconvexTest, OracleAgreesWithSampling) {
  const BenchmarkProblem p = MakeNonconvex1D(0.1);
  Vector z(2);
  z << -0.9, 0.0;
  EXPECT_TRUE(CrossCheckOracle(p, z, 50000, 1).passed);
  z << 1.5, 0.0;
  EXPECT_TRUE(CrossCheckOracle(p, z, 50000, 2).passed);
}

TEST(NonconvexTest, ScenarioGradientMatchesFiniteDifferences) {
  const BenchmarkProblem p = MakeNonconvex1D(0.1);
  const std::vector<double> xi = {0.7, -3.0};
  for (double x : {-1.5, 0.0, 0.4, 2.2}) {
    Vector z(2);
    z << x, 0.3;
    const Vector g = p.spec.chance->ScenarioGradient(z, xi);
    for (Index k = 0; k < 2; ++k) {
      const Vector e = Vector::Unit(2, k) * 1e-6;
      EXPECT_NEAR(g[k], (p.spec.chance->Value(z + e, xi) - p.spec.chance->Value(z - e, xi)) / 2e-6, 1e-6);
    }
  }
}

TEST(JointChanceTest, ValueIsWorstRowMinusBound) {
  const BenchmarkProblem p = MakeJointChance(2, 2, 10.0, 0.1);
  // Layout xi[i * m + (j - 1)].
  const std::vector<double> xi = {1.0, 2.0, 3.0, 0.5};
  Vector x(2);
  x << 1.0, 2.0;
  // Row j=1: 1 * 1 + 9 * 4 = 37; row j=2: 4 * 1 + 0.25 * 4 = 5.
  EXPECT_DOUBLE_EQ(p.spec.chance->Value(x, xi), 27.0);
  const Vector g = p.spec.chance->ScenarioGradient(x, xi);
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 36.0);
}

TEST(JointChanceTest, BatchEvaluationMatchesScalar) {
  const BenchmarkProblem p = MakeJointChance(4, 3, 100.0, 0.05);
  const SampleBatch batch = DrawBatch(p.spec.dist, 50, 2);
  Vector x(4);
  x << 0.5, 1.0, 1.5, 2.0;
  Vector out(50);
  p.spec.chance->EvaluateBatch(x, batch, out);
  for (Index s = 0; s < 50; ++s) EXPECT_DOUBLE_EQ(out[s], p.spec.chance->Value(x, batch.scenario(s)));
}

TEST(JointChanceTest, RejectsBadParameters) {
  EXPECT_THROW(MakeJointChance(0, 5, 100.0, 0.1), ConfigError);
  EXPECT_THROW(MakeJointChance(3, 5, 0.0, 0.1), ConfigError);
}

// Structured coordinate shifts must agree with re-evaluation.
TEST(CoordinateShiftTest, MatchesDefaultEvaluation) {
  for (const BenchmarkProblem& p : {MakePortfolio(5, 0.1), MakeNonconvex1D(0.1), MakeJointChance(3, 2, 50.0, 0.1)}) {
    const SampleBatch batch = DrawBatch(p.spec.dist, 64, 5);
    const Vector x = p.spec.x_start + Vector::Constant(p.spec.n, 0.25);
    const Vector base = EvaluateScenarios(*p.spec.chance, x, batch);
    for (Index k = 0; k < p.spec.n; ++k) {
      Vector shifted(64), direct(64);
      p.spec.chance->EvaluateCoordinateShift(x, batch, base, k, 1e-3, shifted);
      p.spec.chance->EvaluateBatch(x + 1e-3 * Vector::Unit(p.spec.n, k), batch, direct);
      EXPECT_LT((shifted - direct).cwiseAbs().maxCoeff(), 1e-12) << p.spec.id << " k=" << k;
    }
  }
}

}  // namespace
}  // namespace quantalm
