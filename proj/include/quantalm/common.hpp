#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace quantalm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Scenario storage: one scenario per row, contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Invalid distribution, problem or algorithm parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad call-site arguments (empty sample, out-of-range risk level).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A constraint evaluation produced a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, std::size_t scenario_index)
      : std::runtime_error(what), scenario_index_(scenario_index) {}

  std::size_t scenario_index() const { return scenario_index_; }

 private:
  std::size_t scenario_index_;
};

// Smoothing kernel put zero weight on every scenario.
class DegenerateBandwidthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace quantalm
