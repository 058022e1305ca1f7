#include "latentrob/training.hpp"

#include <cmath>

namespace latentrob {

namespace {

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Rows are y_i x_i^T.
Matrix signed_design(const std::vector<LabeledSample>& data) {
  if (data.empty()) throw std::invalid_argument("robust ERM: empty data set");
  const Index d = data.front().x.size();
  Matrix m(static_cast<Index>(data.size()), d);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].x.size() != d) throw std::invalid_argument("robust ERM: ragged data set");
    m.row(static_cast<Index>(i)) = static_cast<double>(data[i].y) * data[i].x.transpose();
  }
  return m;
}

double norm_q(const Vector& theta, double p) { return lp_norm(theta, dual_exponent(p)); }

Vector norm_q_gradient(const Vector& theta, double p) {
  const double q = dual_exponent(p);
  const double nrm = norm_q(theta, p);
  if (!(nrm > 1e-12)) return Vector::Zero(theta.size());
  if (q == 2.0) return theta / nrm;
  if (q == 1.0) return theta.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  return theta.unaryExpr([q, nrm](double v) {
    const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    return s * std::pow(std::abs(v) / nrm, q - 1.0);
  });
}

struct Problem {
  Matrix signed_x;
  double epsilon;
  double p;

  double value(const Vector& theta) const {
    const double shrink = epsilon * norm_q(theta, p);
    const Vector margins = signed_x * theta;
    double acc = 0.0;
    for (Index i = 0; i < margins.size(); ++i) acc += softplus(-(margins(i) - shrink));
    return acc / static_cast<double>(margins.size());
  }

  Vector gradient(const Vector& theta) const {
    const double shrink = epsilon * norm_q(theta, p);
    const Vector margins = signed_x * theta;
    Vector weights(margins.size());
    for (Index i = 0; i < margins.size(); ++i) weights(i) = sigmoid(-(margins(i) - shrink));
    const double n = static_cast<double>(margins.size());
    Vector g = -(signed_x.transpose() * weights) / n;
    if (epsilon > 0.0) g += (epsilon * weights.sum() / n) * norm_q_gradient(theta, p);
    return g;
  }
};

}  // namespace

void RobustErmConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("RobustErmConfig: epsilon must be >= 0");
  if (!(p >= 2.0)) throw std::invalid_argument("RobustErmConfig: p must be >= 2");
  if (!(gradient_tolerance > 0.0)) throw std::invalid_argument("RobustErmConfig: gradient_tolerance must be > 0");
  if (max_iterations < 0) throw std::invalid_argument("RobustErmConfig: max_iterations must be >= 0");
  if (!(step_size > 0.0)) throw std::invalid_argument("RobustErmConfig: step_size must be > 0");
}

double robust_objective(const Vector& theta, const std::vector<LabeledSample>& data, double epsilon, double p) {
  return Problem{signed_design(data), epsilon, p}.value(theta);
}

Vector robust_objective_gradient(const Vector& theta, const std::vector<LabeledSample>& data, double epsilon,
                                 double p) {
  return Problem{signed_design(data), epsilon, p}.gradient(theta);
}

TrainedModel robust_erm_fit(const std::vector<LabeledSample>& data, const RobustErmConfig& config, Rng& rng) {
  config.validate();
  const Problem problem{signed_design(data), config.epsilon, config.p};
  const Index d = problem.signed_x.cols();

  Vector theta;
  if (config.init == InitRule::ClassMeanDifference) {
    // sum_i y_i x_i is proportional to the class-mean difference for balanced data
    theta = problem.signed_x.colwise().sum().transpose();
  }
  if (theta.size() == 0 || theta.norm() == 0.0) theta = rng.normal_vector(d);
  theta *= config.init_norm / theta.norm();

  TrainedModel out;
  double f = problem.value(theta);
  Vector g = problem.gradient(theta);
  out.objective_trace.push_back(f);
  double step = config.step_size;

  int it = 0;
  for (; it < config.max_iterations; ++it) {
    const double gnorm = g.norm();
    if (gnorm <= config.gradient_tolerance) {
      out.converged = true;
      break;
    }
    Vector next;
    double f_next;
    if (config.step_rule == StepRule::Fixed) {
      next = theta - config.step_size * g;
      f_next = problem.value(next);
    } else {
      step *= 2.0;
      for (;;) {
        next = theta - step * g;
        f_next = problem.value(next);
        if (f_next <= f - 1e-4 * step * gnorm * gnorm) break;
        step *= 0.5;
        if (step < 1e-30) break;
      }
      if (step < 1e-30) break;  // no descent possible at machine precision
    }
    if (!std::isfinite(f_next)) {
      throw DivergenceError("robust_erm_fit: objective became non-finite at iteration " + std::to_string(it));
    }
    theta = std::move(next);
    f = f_next;
    g = problem.gradient(theta);
    out.objective_trace.push_back(f);
  }
  if (!out.converged && g.norm() <= config.gradient_tolerance) out.converged = true;

  out.theta = theta;
  out.final_objective = f;
  out.gradient_norm = g.norm();
  out.iterations_used = it;
  if (!theta.allFinite() || !std::isfinite(f)) throw DivergenceError("robust_erm_fit: non-finite solution");
  return out;
}

double kernel_component_ratio(const Vector& theta, const Matrix& w) {
  const double nrm = theta.norm();
  if (nrm == 0.0) throw std::invalid_argument("kernel_component_ratio: theta must be nonzero");
  return project_onto_left_kernel(w, theta).norm() / nrm;
}

nlohmann::json to_json(const TrainedModel& model) {
  return {{"theta", std::vector<double>(model.theta.data(), model.theta.data() + model.theta.size())},
          {"final_objective", model.final_objective},
          {"gradient_norm", model.gradient_norm},
          {"iterations_used", model.iterations_used},
          {"converged", model.converged}};
}

}  // namespace latentrob
