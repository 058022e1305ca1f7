#include "latentrob/classifiers.hpp"

#include <cmath>
#include <stdexcept>

namespace latentrob {

double LinearClassifier::score(const Vector& x) const {
  if (x.size() != theta.size()) throw std::invalid_argument("LinearClassifier: dimension mismatch");
  return x.dot(theta);
}

int classify_linear(const LinearClassifier& c, const Vector& x) { return c.classify(x); }

double PullbackRule::score(const Vector& x) const {
  if (x.size() != direction.size()) throw std::invalid_argument("PullbackRule: dimension mismatch");
  return phi.inverse(x).dot(direction) - threshold;
}

Vector PullbackRule::score_gradient(const Vector& x) const {
  if (x.size() != direction.size()) throw std::invalid_argument("PullbackRule: dimension mismatch");
  if (phi.kind() == FeatureMapKind::Identity) return direction;
  return direction.cwiseProduct(phi.inverse_derivative(x));
}

BayesGmmClassifier bayes_gmm(const LatentGMM& model) {
  model.validate();
  BayesGmmClassifier c;
  // (W W^T)^+ W = (W^T)^+ for full column rank W.
  const Matrix wt_pinv = pseudo_inverse(model.w.transpose());
  c.direction = wt_pinv * model.mu;
  c.threshold = 0.5 * std::log((1.0 - model.pi) / model.pi);
  c.phi = model.phi;
  return c;
}

BayesGlmClassifier bayes_glm(const LatentGLM& model) {
  model.validate();
  BayesGlmClassifier c;
  const Matrix gram = model.w.transpose() * model.w;
  c.direction = model.w * gram.ldlt().solve(model.beta);
  c.threshold = link_inverse(model.link, 0.5);
  c.phi = model.phi;
  return c;
}

double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double gmm_posterior(const BayesGmmClassifier& bayes, double pi, const Vector& x) {
  const double q = std::log((1.0 - pi) / pi);
  const double t = 2.0 * bayes.phi.inverse(x).dot(bayes.direction) - q;
  return logistic(t);
}

double gmm_posterior(const LatentGMM& model, const Vector& x) {
  return gmm_posterior(bayes_gmm(model), model.pi, x);
}

}  // namespace latentrob
