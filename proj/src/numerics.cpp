#include "latentrob/numerics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace latentrob {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix64(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ splitmix(a + 0x632be59bd9b4e019ULL));
  h = splitmix(h ^ splitmix(b + 0x85157af5a3c2a6c1ULL));
  return h;
}

Vector Rng::normal_vector(Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

SvdResult svd(const Matrix& m) {
  if (!m.allFinite()) throw std::invalid_argument("svd: non-finite input");
  SvdResult out;
  const Index r = std::min(m.rows(), m.cols());
  if (r == 0) return out;

  Eigen::BDCSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) {
    throw DecompositionError("svd: decomposition did not converge");
  }
  out.u = solver.matrixU();
  out.v = solver.matrixV();
  out.singular_values = solver.singularValues();

  const double smax = out.singular_values.size() > 0 ? out.singular_values(0) : 0.0;
  const double scale = static_cast<double>(std::max(m.rows(), m.cols()));
  out.rank_tolerance = std::max(scale * smax * std::numeric_limits<double>::epsilon(), 1e-12);
  out.numerical_rank = 0;
  for (Index i = 0; i < out.singular_values.size(); ++i) {
    if (out.singular_values(i) > out.rank_tolerance) ++out.numerical_rank;
  }
  return out;
}

double sigma_min(const Matrix& m) {
  const SvdResult s = svd(m);
  if (s.numerical_rank == 0) {
    throw std::domain_error("sigma_min: matrix has no nonzero singular value");
  }
  return s.singular_values(s.numerical_rank - 1);
}

Matrix pseudo_inverse(const Matrix& m) {
  const SvdResult s = svd(m);
  Matrix out = Matrix::Zero(m.cols(), m.rows());
  for (Index i = 0; i < s.numerical_rank; ++i) {
    out.noalias() += (s.v.col(i) / s.singular_values(i)) * s.u.col(i).transpose();
  }
  return out;
}

Matrix column_space_basis(const Matrix& m) {
  const SvdResult s = svd(m);
  return s.u.leftCols(s.numerical_rank);
}

Vector project_onto_left_kernel(const Matrix& m, const Vector& v) {
  const Matrix basis = column_space_basis(m);
  return v - basis * (basis.transpose() * v);
}

GaussianSampler::GaussianSampler(const Matrix& cov, Vector mean) : mean_(std::move(mean)) {
  if (cov.rows() != cov.cols() || cov.rows() != mean_.size()) {
    throw std::invalid_argument("GaussianSampler: dimension mismatch");
  }
  if (!cov.allFinite()) throw std::domain_error("GaussianSampler: non-finite covariance");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::domain_error("GaussianSampler: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (cov + cov.transpose()));
  if (eig.info() != Eigen::Success) throw DecompositionError("GaussianSampler: eigensolver failed");
  const Vector& lambda = eig.eigenvalues();
  const double tol = 1e-10 * scale;
  if (lambda.size() > 0 && lambda.minCoeff() < -tol) {
    throw std::domain_error("GaussianSampler: covariance is not positive semidefinite");
  }
  Index kept = 0;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > tol) ++kept;
  }
  factor_.resize(cov.rows(), kept);
  Index col = 0;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > tol) {
      factor_.col(col++) = eig.eigenvectors().col(i) * std::sqrt(lambda(i));
    }
  }
}

Vector GaussianSampler::sample(Rng& rng) const {
  if (factor_.cols() == 0) return mean_;
  return mean_ + factor_ * rng.normal_vector(factor_.cols());
}

Vector cholesky_sampler(const Matrix& cov, const Vector& mean, Rng& rng) {
  return GaussianSampler(cov, mean).sample(rng);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double lp_norm(const Vector& v, double p) {
  if (std::isinf(p)) return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  if (p == 1.0) return v.cwiseAbs().sum();
  if (p == 2.0) return v.norm();
  const double vmax = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  if (vmax == 0.0) return 0.0;
  double acc = 0.0;
  for (Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v(i)) / vmax, p);
  return vmax * std::pow(acc, 1.0 / p);
}

double dual_exponent(double p) {
  if (std::isinf(p)) return 1.0;
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  return p / (p - 1.0);
}

}  // namespace latentrob
