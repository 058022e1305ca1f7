#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace latentrob {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when an iterative decomposition does not converge.
class DecompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit seed mixing (splitmix64 finalizer folded over the inputs).
std::uint64_t mix64(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

/// A seeded random stream. Owned by one caller at a time; parallel callers
/// create their own streams from `mix64(base, worker)`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  Vector normal_vector(Index n);
  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct SvdResult {
  Matrix u;                 // d x r
  Vector singular_values;   // nonincreasing
  Matrix v;                 // k x r
  Index numerical_rank = 0;
  double rank_tolerance = 0.0;
};

/// Thin SVD with numerical rank under max(d,k)*sigma_max*eps (floor 1e-12).
SvdResult svd(const Matrix& m);

/// Smallest singular value above the rank tolerance.
/// Throws std::domain_error for an all-zero matrix.
double sigma_min(const Matrix& m);

Matrix pseudo_inverse(const Matrix& m);

/// Orthonormal basis (d x r) of the column space of `m`.
Matrix column_space_basis(const Matrix& m);

/// Component of `v` in Ker(m^T), i.e. orthogonal to the column space of `m`.
Vector project_onto_left_kernel(const Matrix& m, const Vector& v);

/// Draws from N(mean, cov) through a factor L with L L^T = cov. Singular
/// covariances are factored after clipping negative eigenvalues at zero.
class GaussianSampler {
 public:
  GaussianSampler(const Matrix& cov, Vector mean);

  Vector sample(Rng& rng) const;
  const Matrix& factor() const { return factor_; }

 private:
  Matrix factor_;  // d x r
  Vector mean_;
};

Vector cholesky_sampler(const Matrix& cov, const Vector& mean, Rng& rng);

/// Standard normal cdf and pdf.
double normal_cdf(double x);
double normal_pdf(double x);

/// ||v||_p for p in [1, inf].
double lp_norm(const Vector& v, double p);

/// Conjugate exponent q with 1/p + 1/q = 1 (p=inf -> 1, p=1 -> inf).
double dual_exponent(double p);

bool all_finite(const Matrix& m);

}  // namespace latentrob
