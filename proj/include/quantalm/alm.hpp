#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "quantalm/common.hpp"
#include "quantalm/merit.hpp"
#include "quantalm/problems.hpp"
#include "quantalm/trust_region.hpp"

namespace quantalm {

// value_k = max(floor, initial * factor^(k-1)) for outer iteration k >= 1.
struct Schedule {
  double initial = 1e-5;
  double factor = 1.0;
  double floor = 0.0;

  double At(int k) const;
};

// Which scenarios the inner solve and the multiplier update of outer
// iteration k see.
//   kSingleBatch:       one batch, seed {1, 0}, for the whole run.
//   kPerIteration:      fresh batch {k, 0} per outer iteration, shared by the
//                       inner solve and the multiplier update.
//   kIndependentUpdate: inner solve on {k, 0}, update on a separate {k, 1}.
enum class OuterSampling { kSingleBatch, kPerIteration, kIndependentUpdate };
const char* ToString(OuterSampling sampling);

struct AlmConfig {
  double theta_rho = 2.0;
  double mu_max = 1e4;
  double rho_init = 10.0;
  Schedule r_schedule{1e-5};
  Schedule eta_schedule{1e-5};
  Index n_validation = 10000;  // N^k for the multiplier update
  int max_outer = 50;
  OuterSampling sampling = OuterSampling::kSingleBatch;
  // Stop once sigma <= eta and ||x^k - x^{k-1}|| <= stall_tolerance (1 + ||x^k||)
  // on `stall_iterations` consecutive outer iterations.
  double stall_tolerance = 1e-6;
  int stall_iterations = 2;
  // Recorded for provenance only; not read by the iteration.
  double epsilon = 0.1;
  double theta_r = 0.5;
  double theta_mu = 0.5;
  TrustRegionOptions inner;
  std::uint64_t seed = 1;

  void Validate() const;
};

enum class AlmStatus { kConverged, kMaxOuter, kInnerFailure };
const char* ToString(AlmStatus status);

struct OuterTraceRow {
  int iteration = 0;
  double objective = 0.0;  // reported sense
  double g0 = 0.0;         // empirical quantile on the validation batch
  double sigma = 0.0;
  double rho = 0.0;  // penalty used by this iteration's inner solve
  double mu_norm = 0.0;
  int inner_iterations = 0;
  bool inner_truncated = false;
  double step_norm = 0.0;
};

struct AlmResult {
  Vector x_star;
  Vector mu_final;
  Vector mu_bar_final;
  double rho_final = 0.0;
  std::vector<OuterTraceRow> outer_trace;
  AlmStatus status = AlmStatus::kMaxOuter;
  std::string failure_message;
};

// Outer augmented Lagrangian loop with mu = mu_bar = 1 initially. Batch
// seeds are DeriveSeed(seed, {iteration, purpose}) as listed for
// OuterSampling.
AlmResult AlmSolve(const ProblemSpec& problem, const Vector& x0, const AlmConfig& config);

struct ValidationReport {
  double objective = 0.0;  // reported sense
  double violation = 0.0;  // fraction of scenarios with c1 > 0
  double quantile = 0.0;
  double sigma = 0.0;  // with mu = 0 unless multipliers are given
};

// Out-of-sample check on a fresh batch of n_samples >= 1000 scenarios.
ValidationReport ValidateSolution(const ProblemSpec& problem, const Vector& x, Index n_samples,
                                  double alpha, std::uint64_t seed,
                                  const std::optional<Vector>& mu = std::nullopt);

void WriteOuterTraceCsv(std::ostream& out, const std::vector<OuterTraceRow>& trace);

}  // namespace quantalm
