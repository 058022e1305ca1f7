#pragma once

#include "latentrob/models.hpp"

#include "json.hpp"

#include <stdexcept>
#include <vector>

namespace latentrob {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StepRule { Fixed, Backtracking };
enum class InitRule { ZeroPlusJitter, ClassMeanDifference };

struct RobustErmConfig {
  double epsilon = 0.0;
  double p = 2.0;
  int max_iterations = 20000;
  double gradient_tolerance = 1e-8;
  StepRule step_rule = StepRule::Backtracking;
  /// Step for StepRule::Fixed, initial trial step for backtracking.
  double step_size = 1.0;
  InitRule init = InitRule::ClassMeanDifference;
  double init_norm = 1e-3;

  void validate() const;
};

struct TrainedModel {
  Vector theta;
  double final_objective = 0.0;
  double gradient_norm = 0.0;
  int iterations_used = 0;
  bool converged = false;
  /// Objective after each accepted step, starting with the initial point.
  std::vector<double> objective_trace;
};

/// (1/n) sum_i log(1 + exp(-(y_i x_i^T theta - eps ||theta||_q))), q dual to p.
double robust_objective(const Vector& theta, const std::vector<LabeledSample>& data, double epsilon,
                        double p = 2.0);

/// Gradient of robust_objective. The norm term uses theta/||theta|| for
/// ||theta|| > 1e-12 and zero otherwise.
Vector robust_objective_gradient(const Vector& theta, const std::vector<LabeledSample>& data,
                                 double epsilon, double p = 2.0);

/// Full-batch gradient descent on robust_objective. Hitting the iteration
/// cap is reported through `converged`, not as an error.
TrainedModel robust_erm_fit(const std::vector<LabeledSample>& data, const RobustErmConfig& config, Rng& rng);

/// ||P_{Ker(W^T)} theta|| / ||theta||.
double kernel_component_ratio(const Vector& theta, const Matrix& w);

nlohmann::json to_json(const TrainedModel& model);

}  // namespace latentrob
