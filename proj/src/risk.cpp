#include "latentrob/risk.hpp"

#include "latentrob/parallel.hpp"

#include <cmath>
#include <string>

namespace latentrob {

namespace {

const double kSqrt2Pi = std::sqrt(2.0 * M_PI);

double binomial_se(double p, std::size_t n) {
  if (n == 0) return 0.0;
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

// Counts accumulated per chunk; merged by summation so the result is
// independent of the order chunks finish in.
struct Tally {
  std::size_t n = 0;
  std::size_t clean_wrong = 0;
  std::size_t ar_lower = 0;  // attack found an error (or clean error)
  std::size_t ar_upper = 0;  // not certified robust
  std::size_t br_lower = 0;
  std::size_t br_upper = 0;

  void add(Verdict v) {
    v.robust_upper = v.robust_upper && v.clean_correct;
    v.robust_lower = v.robust_lower && v.robust_upper;
    ++n;
    if (!v.clean_correct) ++clean_wrong;
    if (!v.robust_upper) ++ar_lower;
    if (!v.robust_lower) ++ar_upper;
    if (v.clean_correct && !v.robust_upper) ++br_lower;
    if (v.clean_correct && !v.robust_lower) ++br_upper;
  }

  void merge(const Tally& o) {
    n += o.n;
    clean_wrong += o.clean_wrong;
    ar_lower += o.ar_lower;
    ar_upper += o.ar_upper;
    br_lower += o.br_lower;
    br_upper += o.br_upper;
  }
};

RiskReport report_from(const Tally& t, RiskMethod method) {
  RiskReport r;
  r.method = method;
  r.n_samples = t.n;
  const double n = static_cast<double>(std::max<std::size_t>(t.n, 1));
  r.sr = static_cast<double>(t.clean_wrong) / n;
  r.ar_lower = static_cast<double>(t.ar_lower) / n;
  r.ar_upper = static_cast<double>(t.ar_upper) / n;
  r.br_lower = static_cast<double>(t.br_lower) / n;
  r.br_upper = static_cast<double>(t.br_upper) / n;
  r.sr_se = binomial_se(r.sr, t.n);
  r.ar_se = std::max(binomial_se(r.ar_lower, t.n), binomial_se(r.ar_upper, t.n));
  r.br_se = std::max(binomial_se(r.br_lower, t.n), binomial_se(r.br_upper, t.n));
  return r;
}

// Runs per_sample(rng, index) over n draws split into fixed chunks.
template <class PerSample>
Tally chunked_tally(std::size_t n, std::uint64_t seed, PerSample&& per_sample) {
  const std::size_t chunks = std::min(kMonteCarloChunks, std::max<std::size_t>(n, 1));
  std::vector<Tally> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    Rng rng(mix64(seed, c));
    Tally& t = partial[c];
    for (std::size_t i = begin; i < end; ++i) t.add(per_sample(rng, i));
  });
  Tally total;
  for (const auto& t : partial) total.merge(t);
  return total;
}

Verdict linear_verdict(int y, double score, double shrink) {
  Verdict v;
  v.clean_correct = sign_label(score) == y;
  const bool robust = shrink == 0.0 ? v.clean_correct : static_cast<double>(y) * score > shrink;
  v.robust_lower = v.robust_upper = v.clean_correct && robust;
  return v;
}

void require_identity(const FeatureMap& phi, const char* what) {
  if (phi.kind() != FeatureMapKind::Identity) {
    throw UnsupportedError(std::string(what) + ": requires the identity feature map");
  }
}

double derivative_bound_or_throw(const FeatureMap& phi, const char* what) {
  const auto c = phi.derivative_lower_bound();
  if (!c) throw UnsupportedError(std::string(what) + ": feature map has no derivative lower bound");
  return *c;
}

// Probability that the score for class y lands on the wrong side once the
// margin is reduced by `shrink`; score | y ~ N(y m - b, s^2).
double wrong_side_probability(int y, double m, double s, double b, double shrink) {
  if (y > 0) {
    if (s > 0.0) return normal_cdf((b + shrink - m) / s);
    return (shrink == 0.0 ? (m - b < 0.0) : (m - b <= shrink)) ? 1.0 : 0.0;
  }
  if (s > 0.0) return normal_cdf((shrink - m - b) / s);
  return (-m - b >= -shrink) ? 1.0 : 0.0;
}

RiskReport closed_form(const LatentGMM& model, const Vector& v, double b, const AdversaryBudget& budget) {
  budget.validate();
  require_identity(model.phi, "linear_gmm_risks_closed");
  if (v.size() != model.ambient_dim()) throw std::invalid_argument("linear_gmm_risks_closed: dimension mismatch");
  const double m = v.dot(model.w * model.mu);
  const double s = (model.w.transpose() * v).norm();
  const double shrink = dual_norm_margin(v, budget);
  const double pi = model.pi;

  RiskReport r;
  r.method = RiskMethod::ClosedForm;
  r.sr = pi * wrong_side_probability(1, m, s, b, 0.0) + (1.0 - pi) * wrong_side_probability(-1, m, s, b, 0.0);
  const double ar = pi * wrong_side_probability(1, m, s, b, shrink) +
                    (1.0 - pi) * wrong_side_probability(-1, m, s, b, shrink);
  r.ar_lower = r.ar_upper = std::max(ar, r.sr);
  r.br_lower = r.br_upper = r.ar_upper - r.sr;
  return r;
}

RiskReport latent_linear_mc(const Matrix& w, const Vector& v, double b, double shrink, std::size_t n,
                            std::uint64_t seed,
                            const std::function<std::pair<int, Vector>(Rng&)>& draw_latent) {
  const Vector a = w.transpose() * v;
  const Tally t = chunked_tally(n, seed, [&](Rng& rng, std::size_t) {
    auto [y, z] = draw_latent(rng);
    return linear_verdict(y, a.dot(z) - b, shrink);
  });
  return report_from(t, RiskMethod::MonteCarloExact);
}

}  // namespace

void AdversaryBudget::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("AdversaryBudget: epsilon must be >= 0");
  if (!(p >= 2.0)) throw std::invalid_argument("AdversaryBudget: p must be >= 2");
}

std::string_view method_name(RiskMethod m) {
  switch (m) {
    case RiskMethod::ClosedForm: return "closed_form";
    case RiskMethod::MonteCarloExact: return "monte_carlo_exact";
    case RiskMethod::MonteCarloSandwich: return "monte_carlo_sandwich";
  }
  return "closed_form";
}

double effective_l2_radius(const AdversaryBudget& budget, Index d) {
  budget.validate();
  if (d < 1) throw std::invalid_argument("effective_l2_radius: d must be >= 1");
  const double dd = static_cast<double>(d);
  if (std::isinf(budget.p)) return budget.epsilon * std::sqrt(dd);
  return budget.epsilon * std::pow(dd, 0.5 - 1.0 / budget.p);
}

double dual_norm_margin(const Vector& theta, const AdversaryBudget& budget) {
  budget.validate();
  if (budget.epsilon == 0.0) return 0.0;
  return budget.epsilon * lp_norm(theta, dual_exponent(budget.p));
}

RiskReport linear_gmm_risks_closed(const LatentGMM& model, const LinearClassifier& c,
                                   const AdversaryBudget& budget) {
  return closed_form(model, c.theta, 0.0, budget);
}

RiskReport linear_gmm_risks_closed(const LatentGMM& model, const PullbackRule& rule,
                                   const AdversaryBudget& budget) {
  require_identity(rule.phi, "linear_gmm_risks_closed");
  return closed_form(model, rule.direction, rule.threshold, budget);
}

RiskReport monte_carlo_risks(const Sampler& sampler, const AdversarialOracle& oracle, std::size_t n,
                             std::uint64_t seed, RiskMethod method) {
  if (n < 1) throw std::invalid_argument("monte_carlo_risks: n must be >= 1");
  const Tally t = chunked_tally(n, seed, [&](Rng& rng, std::size_t i) {
    try {
      return oracle(sampler(rng));
    } catch (const std::exception& e) {
      throw std::runtime_error("monte_carlo_risks: sample " + std::to_string(i) + ": " + e.what());
    }
  });
  return report_from(t, method);
}

AdversarialOracle exact_linear_oracle(const LinearClassifier& c, const AdversaryBudget& budget) {
  const double shrink = dual_norm_margin(c.theta, budget);
  return [c, shrink](const LabeledSample& s) { return linear_verdict(s.y, c.score(s.x), shrink); };
}

AdversarialOracle exact_linear_oracle(const PullbackRule& rule, const AdversaryBudget& budget) {
  require_identity(rule.phi, "exact_linear_oracle");
  const double shrink = dual_norm_margin(rule.direction, budget);
  return [rule, shrink](const LabeledSample& s) { return linear_verdict(s.y, rule.score(s.x), shrink); };
}

AdversarialOracle pgd_sandwich_oracle(const PullbackRule& rule, const AdversaryBudget& budget,
                                      const AttackConfig& attack) {
  budget.validate();
  const auto c = rule.phi.derivative_lower_bound();
  const double cert_shrink =
      c ? effective_l2_radius(budget, rule.direction.size()) / *c * rule.direction.norm() : 0.0;

  AttackConfig cfg = attack;
  // An l2 ball of radius eps_p sits inside the l_p ball of the same radius
  // for p >= 2, so attack successes stay valid for every p.
  cfg.epsilon = budget.epsilon;
  if (rule.phi.kind() == FeatureMapKind::Tanh && !cfg.clip) cfg.clip = std::make_pair(-1.0, 1.0);
  const LossFunction loss = margin_loss([rule](const Vector& x) { return rule.score(x); },
                                        [rule](const Vector& x) { return rule.score_gradient(x); });
  const bool certified = c.has_value();
  const double eps = budget.epsilon;

  return [rule, cert_shrink, cfg, loss, certified, eps](const LabeledSample& s) {
    Verdict v;
    const double score = rule.score(s.x);
    v.clean_correct = sign_label(score) == s.y;
    if (!v.clean_correct) return v;
    if (eps == 0.0) {
      v.robust_lower = v.robust_upper = true;
      return v;
    }
    const AttackResult adv = run_attack(s.x, s.y, loss, cfg);
    v.robust_upper = rule.classify(adv.x) == s.y;
    if (certified) {
      v.robust_lower = static_cast<double>(s.y) * score > cert_shrink;
    } else {
      v.robust_lower = v.robust_upper;
    }
    return v;
  };
}

RiskReport latent_monte_carlo_gmm(const LatentGMM& model, const PullbackRule& rule,
                                  const AdversaryBudget& budget, std::size_t n, std::uint64_t seed) {
  require_identity(model.phi, "latent_monte_carlo_gmm");
  require_identity(rule.phi, "latent_monte_carlo_gmm");
  const Index k = model.latent_dim();
  const double pi = model.pi;
  const Vector mu = model.mu;
  return latent_linear_mc(model.w, rule.direction, rule.threshold, dual_norm_margin(rule.direction, budget), n,
                          seed, [&](Rng& rng) {
                            const int y = rng.bernoulli(pi) ? 1 : -1;
                            Vector z = rng.normal_vector(k) + static_cast<double>(y) * mu;
                            return std::make_pair(y, std::move(z));
                          });
}

RiskReport latent_monte_carlo_gmm(const LatentGMM& model, const LinearClassifier& c,
                                  const AdversaryBudget& budget, std::size_t n, std::uint64_t seed) {
  PullbackRule rule{c.theta, 0.0, FeatureMap()};
  return latent_monte_carlo_gmm(model, rule, budget, n, seed);
}

RiskReport latent_monte_carlo_glm(const LatentGLM& model, const PullbackRule& rule,
                                  const AdversaryBudget& budget, std::size_t n, std::uint64_t seed) {
  require_identity(model.phi, "latent_monte_carlo_glm");
  require_identity(rule.phi, "latent_monte_carlo_glm");
  const Index k = model.latent_dim();
  const Vector beta = model.beta;
  const Link link = model.link;
  return latent_linear_mc(model.w, rule.direction, rule.threshold, dual_norm_margin(rule.direction, budget), n,
                          seed, [&](Rng& rng) {
                            Vector z = rng.normal_vector(k);
                            const int y = rng.bernoulli(link_cdf(link, z.dot(beta))) ? 1 : -1;
                            return std::make_pair(y, std::move(z));
                          });
}

BoundReport gmm_br_bound(const LatentGMM& model, const AdversaryBudget& budget) {
  const double c = derivative_bound_or_throw(model.phi, "gmm_br_bound");
  const double eps = effective_l2_radius(budget, model.ambient_dim());
  const double smin = sigma_min(model.w);
  return {eps / (c * kSqrt2Pi * smin), eps / smin};
}

GlmBoundReport glm_br_bound(const LatentGLM& model, const AdversaryBudget& budget) {
  const double c = derivative_bound_or_throw(model.phi, "glm_br_bound");
  const double eps = effective_l2_radius(budget, model.ambient_dim());
  const double smin = sigma_min(model.w);
  GlmBoundReport r;
  r.lipschitz_bound = 2.0 * eps / (c * kSqrt2Pi * smin);
  r.condition_ratio = eps / smin;

  const Matrix gram = model.w.transpose() * model.w;
  const Vector gamma = model.w * gram.ldlt().solve(model.beta);
  const double c0 = link_inverse(model.link, 0.5);
  const double bnorm = model.beta.norm();
  if (bnorm == 0.0) {
    r.two_phi_bound = 1.0;
  } else {
    const double half_width = eps * gamma.norm() / c;
    r.two_phi_bound = normal_cdf((c0 + half_width) / bnorm) - normal_cdf((c0 - half_width) / bnorm);
  }
  return r;
}

double linear_br_bound(const Vector& theta, const Matrix& w, const AdversaryBudget& budget) {
  if (theta.size() != w.rows()) throw std::invalid_argument("linear_br_bound: dimension mismatch");
  const double tnorm2 = theta.squaredNorm();
  if (tnorm2 == 0.0) throw std::invalid_argument("linear_br_bound: theta must be nonzero");
  const double eps = effective_l2_radius(budget, w.rows());
  const double kernel2 = project_onto_left_kernel(w, theta).squaredNorm();
  const double remaining = 1.0 - kernel2 / tnorm2;
  if (remaining <= 1e-14) return std::numeric_limits<double>::infinity();
  return eps / (kSqrt2Pi * sigma_min(w)) / std::sqrt(remaining);
}

double lemma_g(double sigma, double epsilon) {
  if (!(sigma > 0.0)) throw std::invalid_argument("lemma_g: sigma must be > 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("lemma_g: epsilon must be >= 0");
  return normal_cdf(epsilon / std::sqrt(1.0 + sigma * sigma)) - 0.5;
}

double prop2_constant(const AdversaryBudget& budget) {
  budget.validate();
  return lemma_g(1.0, budget.epsilon);
}

double e1_classifier_br_closed(const AdversaryBudget& budget, Index k) {
  budget.validate();
  if (k < 1) throw std::invalid_argument("e1_classifier_br_closed: k must be >= 1");
  return lemma_g(1.0 / std::sqrt(static_cast<double>(k)), budget.epsilon);
}

}  // namespace latentrob
