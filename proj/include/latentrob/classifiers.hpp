#pragma once

#include "latentrob/models.hpp"

namespace latentrob {

/// sign with the tie rule sign(0) = +1.
inline int sign_label(double score) { return score >= 0.0 ? 1 : -1; }

/// h(x) = sign(x^T theta).
struct LinearClassifier {
  Vector theta;

  double score(const Vector& x) const;
  int classify(const Vector& x) const { return sign_label(score(x)); }
};

int classify_linear(const LinearClassifier& c, const Vector& x);

/// Decision rule sign(direction^T phi^{-1}(x) - threshold). Both Bayes
/// classifiers reduce to this form once their direction and threshold are
/// precomputed.
struct PullbackRule {
  Vector direction;
  double threshold = 0.0;
  FeatureMap phi;

  double score(const Vector& x) const;
  int classify(const Vector& x) const { return sign_label(score(x)); }
  /// Gradient of score(x) with respect to x.
  Vector score_gradient(const Vector& x) const;
};

/// direction = (W W^T)^+ W mu, threshold = q/2 with q = log((1 - pi)/pi).
struct BayesGmmClassifier : PullbackRule {};

/// direction = W (W^T W)^{-1} beta, threshold = f^{-1}(1/2).
struct BayesGlmClassifier : PullbackRule {};

BayesGmmClassifier bayes_gmm(const LatentGMM& model);
BayesGlmClassifier bayes_glm(const LatentGLM& model);

/// P(y = +1 | x) under the GMM, evaluated in log-odds space.
double gmm_posterior(const LatentGMM& model, const Vector& x);

/// Same as above with a precomputed classifier for repeated evaluation.
double gmm_posterior(const BayesGmmClassifier& bayes, double pi, const Vector& x);

/// Numerically stable logistic 1/(1 + e^{-t}).
double logistic(double t);

}  // namespace latentrob
