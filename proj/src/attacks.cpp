#include "latentrob/attacks.hpp"

#include <cmath>
#include <stdexcept>

namespace latentrob {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be >= 0");
  if (kind == AttackKind::PGD && steps < 1) throw std::invalid_argument("AttackConfig: PGD needs steps >= 1");
  if (clip && !(clip->first < clip->second)) throw std::invalid_argument("AttackConfig: clip.low must be < clip.high");
}

double AttackConfig::effective_step_size() const {
  if (step_size > 0.0) return step_size;
  return 2.5 * epsilon / static_cast<double>(std::max(steps, 1));
}

LossFunction margin_loss(std::function<double(const Vector&)> score,
                         std::function<Vector(const Vector&)> score_gradient) {
  LossFunction f;
  f.value = [score](const Vector& x, int y) { return -static_cast<double>(y) * score(x); };
  f.gradient = [score_gradient](const Vector& x, int y) {
    return Vector(-static_cast<double>(y) * score_gradient(x));
  };
  return f;
}

Vector project_l2_ball(const Vector& point, const Vector& center, double radius) {
  const Vector delta = point - center;
  const double norm = delta.norm();
  if (norm <= radius) return point;
  return center + (radius / norm) * delta;
}

namespace {

void clip_in_place(Vector& x, const AttackConfig& config) {
  if (config.clip) x = x.cwiseMax(config.clip->first).cwiseMin(config.clip->second);
}

}  // namespace

AttackResult fgm(const Vector& x, int y, const LossFunction& loss, const AttackConfig& config) {
  config.validate();
  AttackResult out;
  const Vector g = loss.gradient(x, y);
  const double gnorm = g.norm();
  if (gnorm == 0.0 || !std::isfinite(gnorm)) {
    out.x = x;
    out.zero_gradient = true;
  } else {
    out.x = x + (config.epsilon / gnorm) * g;
  }
  clip_in_place(out.x, config);
  out.loss = loss.value(out.x, y);
  return out;
}

AttackResult pgd(const Vector& x, int y, const LossFunction& loss, const AttackConfig& config) {
  config.validate();
  const double step = config.effective_step_size();
  AttackResult best{x, loss.value(x, y), false};
  Vector current = x;
  double current_loss = best.loss;
  for (int t = 0; t < config.steps; ++t) {
    const Vector g = loss.gradient(current, y);
    const double gnorm = g.norm();
    if (gnorm == 0.0 || !std::isfinite(gnorm)) {
      if (t == 0) best.zero_gradient = true;
      break;
    }
    current = project_l2_ball(current + (step / gnorm) * g, x, config.epsilon);
    clip_in_place(current, config);
    current_loss = loss.value(current, y);
    if (!config.keep_best || current_loss > best.loss) {
      best.x = current;
      best.loss = current_loss;
    }
  }
  if (!config.keep_best) {
    best.x = current;
    best.loss = current_loss;
  }
  return best;
}

AttackResult run_attack(const Vector& x, int y, const LossFunction& loss, const AttackConfig& config) {
  return config.kind == AttackKind::FGM ? fgm(x, y, loss, config) : pgd(x, y, loss, config);
}

RadiusResult minimal_adversarial_radius(const Vector& x, int y, const LossFunction& loss,
                                        const std::function<int(const Vector&)>& classify,
                                        const RadiusSearchConfig& config) {
  if (!(config.grid_step > 0.0)) throw std::invalid_argument("radius search: grid_step must be > 0");
  AttackConfig probe = config.attack;
  auto flips = [&](double eps) {
    probe.epsilon = eps;
    return classify(run_attack(x, y, loss, probe).x) != y;
  };

  const auto steps = static_cast<long>(std::floor(config.epsilon_max / config.grid_step + 1e-9));
  for (long i = 1; i <= steps; ++i) {
    const double eps = static_cast<double>(i) * config.grid_step;
    if (!flips(eps)) continue;
    double lo = eps - config.grid_step, hi = eps;
    for (int b = 0; b < config.bisection_steps; ++b) {
      const double mid = 0.5 * (lo + hi);
      (flips(mid) ? hi : lo) = mid;
    }
    return {true, hi};
  }
  return {false, config.epsilon_max};
}

}  // namespace latentrob
