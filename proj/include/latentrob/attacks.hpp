#pragma once

#include "latentrob/numerics.hpp"

#include <functional>
#include <optional>
#include <utility>

namespace latentrob {

enum class AttackKind { FGM, PGD };

struct AttackConfig {
  AttackKind kind = AttackKind::PGD;
  double epsilon = 0.0;
  int steps = 40;
  /// <= 0 selects the default 2.5 * epsilon / steps.
  double step_size = 0.0;
  std::optional<std::pair<double, double>> clip;
  bool keep_best = true;

  void validate() const;
  double effective_step_size() const;
};

/// Loss to be maximized by the attacker, with its gradient in x.
struct LossFunction {
  std::function<double(const Vector&, int)> value;
  std::function<Vector(const Vector&, int)> gradient;
};

/// Margin loss -y * score(x) for a real-valued decision score.
LossFunction margin_loss(std::function<double(const Vector&)> score,
                         std::function<Vector(const Vector&)> score_gradient);

struct AttackResult {
  Vector x;
  double loss = 0.0;
  bool zero_gradient = false;
};

AttackResult fgm(const Vector& x, int y, const LossFunction& loss, const AttackConfig& config);
AttackResult pgd(const Vector& x, int y, const LossFunction& loss, const AttackConfig& config);
/// Dispatches on config.kind.
AttackResult run_attack(const Vector& x, int y, const LossFunction& loss, const AttackConfig& config);

Vector project_l2_ball(const Vector& point, const Vector& center, double radius);

struct RadiusSearchConfig {
  AttackConfig attack;   // epsilon is overwritten per probe
  double grid_step = 0.1;
  double epsilon_max = 10.0;
  /// Bisection rounds after the first flipping grid point (0 = grid only).
  int bisection_steps = 0;
};

struct RadiusResult {
  bool found = false;
  /// Smallest flipping epsilon when found, else epsilon_max.
  double radius = 0.0;
};

/// Smallest epsilon on the grid step, 2*step, ... <= epsilon_max at which the
/// attack changes the predicted label away from y.
RadiusResult minimal_adversarial_radius(const Vector& x, int y, const LossFunction& loss,
                                        const std::function<int(const Vector&)>& classify,
                                        const RadiusSearchConfig& config);

}  // namespace latentrob
