#pragma once

#include "latentrob/numerics.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentrob {

inline constexpr double kVarianceFloor = 1e-6;

class ModelDegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One factor analyzer: N(mean, loading loading^T + diag(noise)).
struct FactorComponent {
  double weight = 1.0;
  Vector mean;
  Matrix loading;  // d x ell
  Vector noise;    // d, diagonal of D
};

/// x ~ sum_k alpha_k N(mu_k, A_k A_k^T + D_k); every component shares d and ell.
struct MfaModel {
  std::vector<FactorComponent> components;

  Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }
  Index latent_dim() const { return components.empty() ? 0 : components.front().loading.cols(); }
  void validate(double variance_floor = kVarianceFloor) const;
};

namespace detail {
/// Per-component factorization shared by the density and EM code.
struct FactorCache {
  Vector mean;
  Matrix loading;
  Vector noise_inv;
  Matrix noise_inv_loading;  // D^{-1} A
  Eigen::LLT<Matrix> inner;  // L = I + A^T D^{-1} A
  double log_norm = 0.0;     // -1/2 (d log 2 pi + log det Sigma)

  /// u^T Sigma^{-1} u, optionally also Sigma^{-1} u.
  double quad(const Vector& u, Vector* sigma_inv_u = nullptr) const;
  /// Row-wise quadratic forms of U (n x d); `posterior_means` receives L^{-1} A^T D^{-1} u_i as rows.
  Vector quad_rows(const Matrix& u, Matrix* posterior_means = nullptr) const;
};
FactorCache prepare_factor(const Vector& mu, const Matrix& a, const Vector& d);
}  // namespace detail

/// log N(x; mu, A A^T + D) through the Woodbury and determinant-lemma
/// identities with L = I + A^T D^{-1} A; never forms a d x d matrix.
double component_loglik(const Vector& x, const Vector& mu, const Matrix& a, const Vector& d);

/// Factorized mixture density, prepared once and evaluated many times.
class MfaDensity {
 public:
  explicit MfaDensity(const MfaModel& model);

  double loglik(const Vector& x) const;
  /// Gradient of loglik in x: sum_k r_k(x) Sigma_k^{-1} (mu_k - x).
  Vector loglik_gradient(const Vector& x) const;
  /// log alpha_k + log N_k(x) for every row of `xs` (n x K).
  Matrix weighted_component_logliks(const Matrix& xs) const;
  Index dim() const { return dim_; }

 private:
  std::vector<detail::FactorCache> factors_;
  std::vector<double> log_weights_;
  Index dim_ = 0;
};

double mixture_loglik(const MfaModel& model, const Vector& x);

struct EmConfig {
  int max_iterations = 100;
  double tolerance = 1e-6;  // relative improvement of the average log-likelihood
  double variance_floor = kVarianceFloor;
  int projection_dim = 20;  // random projection used by the k-means initializer
  int kmeans_iterations = 25;
};

struct EmTrace {
  std::vector<double> average_loglik;  // one entry per evaluated parameter set
  std::vector<int> reseeded_at;        // iterations where a component was re-seeded
  int iterations = 0;
  bool converged = false;
};

/// EM for a mixture of factor analyzers on the rows of `data` (n x d).
MfaModel mfa_fit_em(const Matrix& data, Index k, Index ell, const EmConfig& config, Rng& rng,
                    EmTrace* trace = nullptr);

/// Draws n samples (rows of the result). `components`, when given, receives
/// the drawn component index of every row.
Matrix mfa_sample(const MfaModel& model, std::size_t n, Rng& rng, std::vector<int>* components = nullptr);

struct MfaBayesClassifier {
  MfaModel positive;
  MfaModel negative;
  double log_prior_ratio = 0.0;
};

/// Precomputed log-likelihood-ratio score of an MfaBayesClassifier.
class MfaBayesScorer {
 public:
  explicit MfaBayesScorer(const MfaBayesClassifier& c);

  double score(const Vector& x) const;
  int classify(const Vector& x) const { return score(x) >= 0.0 ? 1 : -1; }
  Vector score_gradient(const Vector& x) const;

 private:
  MfaDensity positive_;
  MfaDensity negative_;
  double log_prior_ratio_;
};

int mfa_bayes_classify(const MfaBayesClassifier& c, const Vector& x);
Vector mfa_score_gradient(const MfaBayesClassifier& c, const Vector& x);

// Binary model container: "MFA1", u16 version, u32 d, u32 ell, u16 K (16
// bytes), then per component alpha, mu (d), A (d x ell, row-major), D (d),
// all little-endian float64.
void write_mfa(const MfaModel& model, std::ostream& out);
MfaModel read_mfa(std::istream& in);
void save_mfa(const MfaModel& model, const std::filesystem::path& path);
MfaModel load_mfa(const std::filesystem::path& path);

}  // namespace latentrob
