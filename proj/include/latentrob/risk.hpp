#pragma once

#include "latentrob/attacks.hpp"
#include "latentrob/classifiers.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string_view>

namespace latentrob {

/// An operation was asked for a closed form or bound it cannot provide
/// (non-identity feature map, map without a derivative lower bound, ...).
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// l_p ball of radius epsilon, p >= 2 (p = inf allowed).
struct AdversaryBudget {
  double p = 2.0;
  double epsilon = 0.0;

  void validate() const;
};

enum class RiskMethod { ClosedForm, MonteCarloExact, MonteCarloSandwich };
std::string_view method_name(RiskMethod m);

/// Standard / adversarial / boundary risk. Exact methods report
/// ar_lower == ar_upper; the sandwich method reports an interval.
struct RiskReport {
  double sr = 0.0;
  double ar_lower = 0.0;
  double ar_upper = 0.0;
  double br_lower = 0.0;
  double br_upper = 0.0;
  double sr_se = 0.0;
  double ar_se = 0.0;
  double br_se = 0.0;
  std::size_t n_samples = 0;
  RiskMethod method = RiskMethod::ClosedForm;
  /// False when the sandwich oracle ran attack-only (no certificate).
  bool certified = true;

  double ar() const { return ar_upper; }
  double br() const { return br_upper; }
};

double effective_l2_radius(const AdversaryBudget& budget, Index d);

/// epsilon * ||theta||_q, the exact worst-case decrease of a linear score
/// under an l_p perturbation of size epsilon.
double dual_norm_margin(const Vector& theta, const AdversaryBudget& budget);

/// Closed-form risks of the linear rule sign(v^T x - b) under an identity-map
/// GMM. Throws UnsupportedError when the model's map is not the identity.
RiskReport linear_gmm_risks_closed(const LatentGMM& model, const LinearClassifier& c,
                                   const AdversaryBudget& budget);
RiskReport linear_gmm_risks_closed(const LatentGMM& model, const PullbackRule& rule,
                                   const AdversaryBudget& budget);

/// Per-sample verdict of an adversarial oracle. For exact oracles
/// robust_lower == robust_upper.
struct Verdict {
  bool clean_correct = false;
  bool robust_lower = false;
  bool robust_upper = false;
};

using Sampler = std::function<LabeledSample(Rng&)>;
using AdversarialOracle = std::function<Verdict(const LabeledSample&)>;

/// Number of independent sub-streams a Monte Carlo run is split into. Fixed,
/// so estimates do not depend on the worker count.
inline constexpr std::size_t kMonteCarloChunks = 64;

/// `method` labels the report; pass MonteCarloSandwich for interval oracles.
RiskReport monte_carlo_risks(const Sampler& sampler, const AdversarialOracle& oracle,
                             std::size_t n, std::uint64_t seed,
                             RiskMethod method = RiskMethod::MonteCarloExact);

/// Exact oracle for sign(v^T x - b): robust-correct iff y (v^T x - b) > eps ||v||_q.
AdversarialOracle exact_linear_oracle(const LinearClassifier& c, const AdversaryBudget& budget);
AdversarialOracle exact_linear_oracle(const PullbackRule& rule, const AdversaryBudget& budget);

/// Paired verdicts for a nonlinear pull-back rule: the lower side certifies
/// robustness in the pulled-back space at radius eps_eff / c; the upper side
/// is "the attack failed". Without a derivative bound (tanh) both sides
/// collapse to the attack result.
AdversarialOracle pgd_sandwich_oracle(const PullbackRule& rule, const AdversaryBudget& budget,
                                      const AttackConfig& attack);

/// Monte Carlo for linear rules under identity-map models, sampling the
/// score directly from the latent code: score = (W^T v)^T z - b. Exact
/// inner adversary. Distributionally identical to sampling x = W z.
RiskReport latent_monte_carlo_gmm(const LatentGMM& model, const PullbackRule& rule,
                                  const AdversaryBudget& budget, std::size_t n, std::uint64_t seed);
RiskReport latent_monte_carlo_gmm(const LatentGMM& model, const LinearClassifier& c,
                                  const AdversaryBudget& budget, std::size_t n, std::uint64_t seed);
RiskReport latent_monte_carlo_glm(const LatentGLM& model, const PullbackRule& rule,
                                  const AdversaryBudget& budget, std::size_t n, std::uint64_t seed);

struct BoundReport {
  double bound = 0.0;
  /// eps_p d^{1/2 - 1/p} / sigma_min(W)
  double condition_ratio = 0.0;
};

struct GlmBoundReport {
  double lipschitz_bound = 0.0;
  double two_phi_bound = 0.0;
  double condition_ratio = 0.0;
};

/// eps_eff / (c sqrt(2 pi) sigma_min(W)).
BoundReport gmm_br_bound(const LatentGMM& model, const AdversaryBudget& budget);
/// 2 eps_eff / (c sqrt(2 pi) sigma_min(W)) and the sharper two-Phi form.
GlmBoundReport glm_br_bound(const LatentGLM& model, const AdversaryBudget& budget);
/// eps_eff / (sqrt(2 pi) sigma_min(W)) * (1 - ||P_ker theta||^2/||theta||^2)^{-1/2};
/// +inf when theta lies entirely in Ker(W^T).
double linear_br_bound(const Vector& theta, const Matrix& w, const AdversaryBudget& budget);

/// g(sigma) = E_z[Phi(eps + sigma z) - Phi(sigma z)] = Phi(eps / sqrt(1 + sigma^2)) - 1/2.
double lemma_g(double sigma, double epsilon);
/// Dimension-free lower bound on the boundary risk of sign(e1^T x).
double prop2_constant(const AdversaryBudget& budget);
/// Boundary risk of sign(e1^T x) with unit-norm rows of W, averaged over
/// mu ~ N(0, I/k): Phi(eps / sqrt(1 + 1/k)) - 1/2.
double e1_classifier_br_closed(const AdversaryBudget& budget, Index k);

}  // namespace latentrob
