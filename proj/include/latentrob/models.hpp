#pragma once

#include "latentrob/numerics.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace latentrob {

enum class FeatureMapKind { Identity, LeakyAbs, SignQuadratic, Tanh };

/// Entrywise strictly increasing map applied to the lifted latent code.
///
///   Identity       t
///   LeakyAbs       t for t >= 0, t/4 for t < 0          (slope >= 1/4)
///   SignQuadratic  t + sign(t) t^2                      (slope >= 1)
///   Tanh           tanh(t)                              (no global slope bound)
class FeatureMap {
 public:
  static constexpr double kTanhClamp = 1.0 - 1e-12;

  FeatureMap() = default;
  explicit FeatureMap(FeatureMapKind kind) : kind_(kind) {}

  FeatureMapKind kind() const { return kind_; }
  std::string_view name() const;
  static FeatureMap parse(std::string_view name);

  double forward(double t) const;
  double inverse(double x) const;
  /// d/dx of the inverse map.
  double inverse_derivative(double x) const;
  /// Lower bound c on d(phi)/dt; empty for Tanh.
  std::optional<double> derivative_lower_bound() const;

  Vector forward(const Vector& t) const;
  Vector inverse(const Vector& x) const;
  Vector inverse_derivative(const Vector& x) const;

  bool operator==(const FeatureMap&) const = default;

 private:
  FeatureMapKind kind_ = FeatureMapKind::Identity;
};

enum class Link { Logistic, Probit };

std::string_view link_name(Link link);
Link parse_link(std::string_view name);
double link_cdf(Link link, double t);
/// f^{-1}(p); for both supported links f^{-1}(1/2) = 0.
double link_inverse(Link link, double p);

/// z ~ N(y mu, I_k), y = +1 w.p. pi, x = phi(W z).
struct LatentGMM {
  Matrix w;
  Vector mu;
  double pi = 0.5;
  FeatureMap phi;

  Index ambient_dim() const { return w.rows(); }
  Index latent_dim() const { return w.cols(); }
  void validate() const;

  /// W and mu with i.i.d. N(0, 1/k) entries.
  static LatentGMM random(Index d, Index k, double pi, FeatureMap phi, Rng& rng);
  /// Rows of W drawn uniformly from the unit sphere in R^k; mu ~ N(0, I/k).
  static LatentGMM random_unit_rows(Index d, Index k, FeatureMap phi, Rng& rng);
};

/// z ~ N(0, I_k), P(y = +1 | z) = f(z^T beta), x = phi(W z).
struct LatentGLM {
  Matrix w;
  Vector beta;
  Link link = Link::Logistic;
  FeatureMap phi;

  Index ambient_dim() const { return w.rows(); }
  Index latent_dim() const { return w.cols(); }
  void validate() const;

  /// W and beta with i.i.d. N(0, 1/k) entries.
  static LatentGLM random(Index d, Index k, Link link, FeatureMap phi, Rng& rng);
};

struct LabeledSample {
  Vector x;
  int y = 1;
  std::optional<Vector> z;
};

std::vector<LabeledSample> sample_gmm(const LatentGMM& model, std::size_t n, Rng& rng,
                                      bool keep_latent = false);
std::vector<LabeledSample> sample_glm(const LatentGLM& model, std::size_t n, Rng& rng,
                                      bool keep_latent = false);

/// Single draws, used by the Monte Carlo estimators.
LabeledSample draw_gmm(const LatentGMM& model, Rng& rng, bool keep_latent = false);
LabeledSample draw_glm(const LatentGLM& model, Rng& rng, bool keep_latent = false);

// Parameter files: JSON objects with fields d, k, pi, phi, W, mu (GMM) or
// d, k, phi, W, beta, link (GLM). W is stored as a list of rows.
nlohmann::json to_json(const LatentGMM& model);
nlohmann::json to_json(const LatentGLM& model);
LatentGMM gmm_from_json(const nlohmann::json& j);
LatentGLM glm_from_json(const nlohmann::json& j);

}  // namespace latentrob
