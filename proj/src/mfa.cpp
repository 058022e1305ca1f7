#include "latentrob/mfa.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

namespace latentrob {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

void MfaModel::validate(double variance_floor) const {
  if (components.empty()) throw std::invalid_argument("MfaModel: no components");
  const Index d = dim();
  const Index ell = latent_dim();
  if (d == 0) throw std::invalid_argument("MfaModel: zero dimension");
  if (ell > d) throw std::invalid_argument("MfaModel: ell exceeds d");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) throw std::invalid_argument("MfaModel: weights must be positive");
    total += c.weight;
    if (c.mean.size() != d || c.loading.rows() != d || c.loading.cols() != ell || c.noise.size() != d) {
      throw std::invalid_argument("MfaModel: component shapes disagree");
    }
    if (!c.mean.allFinite() || !c.loading.allFinite()) throw std::invalid_argument("MfaModel: non-finite parameter");
    if (!((c.noise.array() >= variance_floor).all() && c.noise.allFinite())) {
      throw std::invalid_argument("MfaModel: noise variance below floor");
    }
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("MfaModel: weights must sum to 1");
}

namespace detail {

FactorCache prepare_factor(const Vector& mu, const Matrix& a, const Vector& d) {
  if (a.rows() != mu.size() || d.size() != mu.size()) {
    throw std::invalid_argument("component_loglik: dimension mismatch");
  }
  if (!((d.array() > 0.0).all() && d.allFinite())) {
    throw std::invalid_argument("component_loglik: noise variances must be positive");
  }
  FactorCache f;
  f.mean = mu;
  f.loading = a;
  f.noise_inv = d.cwiseInverse();
  f.noise_inv_loading = f.noise_inv.asDiagonal() * a;
  Matrix inner = a.transpose() * f.noise_inv_loading;
  inner.diagonal().array() += 1.0;
  f.inner.compute(inner);
  if (f.inner.info() != Eigen::Success) {
    throw ModelDegeneracyError("component_loglik: I + A^T D^-1 A is not positive definite");
  }
  double logdet = d.array().log().sum();
  const Matrix& l = f.inner.matrixLLT();
  for (Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  f.log_norm = -0.5 * (static_cast<double>(mu.size()) * kLog2Pi + logdet);
  return f;
}

double FactorCache::quad(const Vector& u, Vector* sigma_inv_u) const {
  const Vector w = noise_inv.cwiseProduct(u);
  double q = u.dot(w);
  if (loading.cols() == 0) {
    if (sigma_inv_u) *sigma_inv_u = w;
    return q;
  }
  const Vector t = noise_inv_loading.transpose() * u;
  const Vector s = inner.solve(t);
  q -= t.dot(s);
  if (sigma_inv_u) *sigma_inv_u = w - noise_inv_loading * s;
  return q;
}

Vector FactorCache::quad_rows(const Matrix& u, Matrix* posterior_means) const {
  Vector q = (u.array().square().rowwise() * noise_inv.transpose().array()).rowwise().sum();
  if (loading.cols() == 0) {
    if (posterior_means) posterior_means->resize(u.rows(), 0);
    return q;
  }
  const Matrix t = u * noise_inv_loading;                    // n x ell
  Matrix s = inner.solve(t.transpose()).transpose();         // n x ell
  q -= (t.array() * s.array()).rowwise().sum().matrix();
  if (posterior_means) *posterior_means = std::move(s);
  return q;
}

}  // namespace detail

double component_loglik(const Vector& x, const Vector& mu, const Matrix& a, const Vector& d) {
  if (x.size() != mu.size()) throw std::invalid_argument("component_loglik: dimension mismatch");
  const auto f = detail::prepare_factor(mu, a, d);
  return f.log_norm - 0.5 * f.quad(x - mu);
}

MfaDensity::MfaDensity(const MfaModel& model) : dim_(model.dim()) {
  if (model.components.empty()) throw std::invalid_argument("MfaDensity: empty model");
  for (const auto& c : model.components) {
    factors_.push_back(detail::prepare_factor(c.mean, c.loading, c.noise));
    log_weights_.push_back(std::log(c.weight));
  }
}

double MfaDensity::loglik(const Vector& x) const {
  if (x.size() != dim_) throw std::invalid_argument("MfaDensity: dimension mismatch");
  Vector terms(static_cast<Index>(factors_.size()));
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const auto& f = factors_[k];
    terms(static_cast<Index>(k)) = log_weights_[k] + f.log_norm - 0.5 * f.quad(x - f.mean);
  }
  return log_sum_exp(terms);
}

Vector MfaDensity::loglik_gradient(const Vector& x) const {
  if (x.size() != dim_) throw std::invalid_argument("MfaDensity: dimension mismatch");
  const Index kk = static_cast<Index>(factors_.size());
  Vector terms(kk);
  std::vector<Vector> directions(factors_.size());
  for (Index k = 0; k < kk; ++k) {
    const auto& f = factors_[static_cast<std::size_t>(k)];
    const double q = f.quad(x - f.mean, &directions[static_cast<std::size_t>(k)]);
    terms(k) = log_weights_[static_cast<std::size_t>(k)] + f.log_norm - 0.5 * q;
  }
  const double total = log_sum_exp(terms);
  Vector g = Vector::Zero(dim_);
  for (Index k = 0; k < kk; ++k) {
    const double r = std::exp(terms(k) - total);
    if (r > 0.0) g -= r * directions[static_cast<std::size_t>(k)];
  }
  return g;
}

Matrix MfaDensity::weighted_component_logliks(const Matrix& xs) const {
  if (xs.cols() != dim_) throw std::invalid_argument("MfaDensity: dimension mismatch");
  Matrix out(xs.rows(), static_cast<Index>(factors_.size()));
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    const auto& f = factors_[k];
    const Matrix u = xs.rowwise() - f.mean.transpose();
    out.col(static_cast<Index>(k)) = (log_weights_[k] + f.log_norm - 0.5 * f.quad_rows(u).array()).matrix();
  }
  return out;
}

double mixture_loglik(const MfaModel& model, const Vector& x) { return MfaDensity(model).loglik(x); }

namespace {

// k-means++ seeding followed by Lloyd iterations; returns cluster labels.
std::vector<Index> kmeans(const Matrix& y, Index k, int iterations, Rng& rng) {
  const Index n = y.rows();
  Matrix centers(k, y.cols());
  centers.row(0) = y.row(static_cast<Index>(rng.uniform() * static_cast<double>(n)) % n);
  Vector dist2 = (y.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Index pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        r -= dist2(pick);
        if (r < 0.0) break;
      }
    } else {
      pick = static_cast<Index>(rng.uniform() * static_cast<double>(n)) % n;
    }
    centers.row(c) = y.row(pick);
    dist2 = dist2.cwiseMin((y.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<Index> labels(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      (centers.rowwise() - y.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != best) changed = true;
      labels[static_cast<std::size_t>(i)] = best;
    }
    Matrix sums = Matrix::Zero(k, y.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += y.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // empty cluster takes the point farthest from its center
        Vector far(n);
        for (Index i = 0; i < n; ++i) far(i) = (y.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
        Index idx = 0;
        far.maxCoeff(&idx);
        centers.row(c) = y.row(idx);
        labels[static_cast<std::size_t>(idx)] = c;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
  }
  return labels;
}

Vector coordinate_variance(const Matrix& x, double floor) {
  const Vector mean = x.colwise().mean().transpose();
  Vector var = (x.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  return var.cwiseMax(floor);
}

// Mean, coordinate variance and PPCA-style scaled principal directions of one cluster.
FactorComponent init_component(const Matrix& x, Index ell, double floor, const Vector& fallback_var, Rng& rng) {
  const Index n = x.rows();
  const Index d = x.cols();
  FactorComponent c;
  c.mean = x.colwise().mean().transpose();
  c.loading = Matrix::Zero(d, ell);
  const double jitter = 1e-3 * std::sqrt(fallback_var.mean());
  if (n < 2) {
    c.noise = fallback_var;
    for (Index j = 0; j < ell; ++j) c.loading.col(j) = jitter * rng.normal_vector(d);
    return c;
  }
  const Matrix centered = x.rowwise() - c.mean.transpose();
  Vector var = centered.array().square().colwise().mean().transpose();
  if (ell > 0) {
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector eig = svd.singularValues().array().square() / static_cast<double>(n);
    const Index avail = std::min<Index>(ell, eig.size());
    const double residual = std::max(0.0, var.sum() - eig.head(avail).sum()) /
                            static_cast<double>(std::max<Index>(1, d - avail));
    for (Index j = 0; j < ell; ++j) {
      if (j < avail && eig(j) > residual) {
        c.loading.col(j) = std::sqrt(eig(j) - residual) * svd.matrixV().col(j);
      } else {
        c.loading.col(j) = jitter * rng.normal_vector(d);
      }
    }
    var -= c.loading.rowwise().squaredNorm();
  }
  c.noise = var.cwiseMax(floor);
  return c;
}

}  // namespace

MfaModel mfa_fit_em(const Matrix& data, Index k, Index ell, const EmConfig& config, Rng& rng, EmTrace* trace) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (k < 1) throw std::invalid_argument("mfa_fit_em: K must be >= 1");
  if (n < k) throw std::invalid_argument("mfa_fit_em: need at least K samples");
  if (ell < 0 || ell > d) throw std::invalid_argument("mfa_fit_em: ell must be in [0, d]");
  if (!data.allFinite()) throw std::invalid_argument("mfa_fit_em: non-finite data");
  if (!(config.variance_floor > 0.0)) throw std::invalid_argument("mfa_fit_em: variance floor must be > 0");

  EmTrace local;
  EmTrace& tr = trace ? *trace : local;
  tr = EmTrace{};

  const Vector global_var = coordinate_variance(data, config.variance_floor);

  // initialization: k-means on a random projection
  std::vector<Index> labels(static_cast<std::size_t>(n), 0);
  if (k > 1) {
    const Index r = std::min<Index>(config.projection_dim, d);
    Matrix proj(d, r);
    for (Index j = 0; j < r; ++j) proj.col(j) = rng.normal_vector(d);
    labels = kmeans(data * proj, k, config.kmeans_iterations, rng);
  }
  MfaModel model;
  for (Index c = 0; c < k; ++c) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i) {
      if (labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
    }
    Matrix sub(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Index>(i)) = data.row(rows[i]);
    auto comp = init_component(sub, ell, config.variance_floor, global_var, rng);
    comp.weight = std::max<double>(1.0, static_cast<double>(rows.size())) / static_cast<double>(n);
    model.components.push_back(std::move(comp));
  }
  {
    double total = 0.0;
    for (const auto& c : model.components) total += c.weight;
    for (auto& c : model.components) c.weight /= total;
  }

  const Matrix data_sq = data.array().square();
  double previous = 0.0;
  bool check = false;
  for (int it = 0;; ++it) {
    // E-step
    std::vector<detail::FactorCache> caches;
    std::vector<Matrix> post_means(static_cast<std::size_t>(k));
    Matrix logp(n, k);
    for (Index c = 0; c < k; ++c) {
      const auto& comp = model.components[static_cast<std::size_t>(c)];
      caches.push_back(detail::prepare_factor(comp.mean, comp.loading, comp.noise));
      const Matrix u = data.rowwise() - comp.mean.transpose();
      logp.col(c) = (std::log(comp.weight) + caches.back().log_norm -
                     0.5 * caches.back().quad_rows(u, &post_means[static_cast<std::size_t>(c)]).array())
                        .matrix();
    }
    Vector ll(n);
    for (Index i = 0; i < n; ++i) ll(i) = log_sum_exp(logp.row(i).transpose());
    const double avg = ll.mean();
    tr.average_loglik.push_back(avg);
    if (check && avg - previous <= config.tolerance * std::abs(previous)) {
      tr.converged = true;
      break;
    }
    if (it >= config.max_iterations) break;
    previous = avg;
    check = true;
    const Matrix resp = (logp.colwise() - ll).array().exp();

    // M-step
    bool reseeded = false;
    for (Index c = 0; c < k; ++c) {
      auto& comp = model.components[static_cast<std::size_t>(c)];
      const Vector h = resp.col(c);
      const double mass = h.sum();
      if (mass < 1e-8) {
        Index worst = 0;
        ll.minCoeff(&worst);
        comp.mean = data.row(worst).transpose();
        comp.noise = global_var;
        const double jitter = 1e-3 * std::sqrt(global_var.mean());
        for (Index j = 0; j < ell; ++j) comp.loading.col(j) = jitter * rng.normal_vector(d);
        comp.weight = 1.0 / static_cast<double>(n);
        reseeded = true;
        continue;
      }
      Matrix z(n, ell + 1);
      z.leftCols(ell) = post_means[static_cast<std::size_t>(c)];
      z.col(ell).setOnes();
      const Matrix zh = z.array().colwise() * h.array();
      const Matrix left = data.transpose() * zh;  // d x (ell+1)
      Matrix right = z.transpose() * zh;          // (ell+1) x (ell+1)
      if (ell > 0) {
        const Matrix linv = caches[static_cast<std::size_t>(c)].inner.solve(Matrix::Identity(ell, ell));
        right.topLeftCorner(ell, ell) += mass * linv;
      }
      const Matrix joint = right.ldlt().solve(left.transpose()).transpose();  // [A mu]
      comp.loading = joint.leftCols(ell);
      comp.mean = joint.col(ell);
      const Vector second = data_sq.transpose() * h;
      comp.noise = ((second - (joint.array() * left.array()).rowwise().sum().matrix()) / mass)
                       .cwiseMax(config.variance_floor);
      comp.weight = mass / static_cast<double>(n);
    }
    if (reseeded) {
      tr.reseeded_at.push_back(it);
      double total = 0.0;
      for (const auto& c : model.components) total += c.weight;
      for (auto& c : model.components) c.weight /= total;
      // a re-seed may lower the likelihood, so restart the convergence check
      check = false;
    }
    tr.iterations = it + 1;
  }
  return model;
}

Matrix mfa_sample(const MfaModel& model, std::size_t n, Rng& rng, std::vector<int>* components) {
  model.validate(0.0);
  const Index d = model.dim();
  const Index ell = model.latent_dim();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : model.components) cumulative.push_back(acc += c.weight);
  std::vector<Vector> scale;
  for (const auto& c : model.components) scale.push_back(c.noise.cwiseSqrt());

  Matrix out(static_cast<Index>(n), d);
  if (components) components->assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    std::size_t k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    k = std::min(k, cumulative.size() - 1);
    const auto& c = model.components[k];
    Vector x = c.mean;
    if (ell > 0) x += c.loading * rng.normal_vector(ell);
    x += scale[k].cwiseProduct(rng.normal_vector(d));
    out.row(static_cast<Index>(i)) = x.transpose();
    if (components) (*components)[i] = static_cast<int>(k);
  }
  return out;
}

MfaBayesScorer::MfaBayesScorer(const MfaBayesClassifier& c)
    : positive_(c.positive), negative_(c.negative), log_prior_ratio_(c.log_prior_ratio) {
  if (positive_.dim() != negative_.dim()) throw std::invalid_argument("MfaBayesClassifier: dimension mismatch");
}

double MfaBayesScorer::score(const Vector& x) const {
  return positive_.loglik(x) - negative_.loglik(x) + log_prior_ratio_;
}

Vector MfaBayesScorer::score_gradient(const Vector& x) const {
  return positive_.loglik_gradient(x) - negative_.loglik_gradient(x);
}

int mfa_bayes_classify(const MfaBayesClassifier& c, const Vector& x) { return MfaBayesScorer(c).classify(x); }

Vector mfa_score_gradient(const MfaBayesClassifier& c, const Vector& x) {
  return MfaBayesScorer(c).score_gradient(x);
}

namespace {

constexpr std::array<char, 4> kMagic{'M', 'F', 'A', '1'};
constexpr std::uint16_t kFormatVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_le(out, bits);
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw std::runtime_error("read_mfa: truncated model file");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return value;
}

double get_f64(std::istream& in) {
  const auto bits = get_le<std::uint64_t>(in);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void write_mfa(const MfaModel& model, std::ostream& out) {
  const Index d = model.dim();
  const Index ell = model.latent_dim();
  if (model.components.size() > 0xFFFF) throw std::invalid_argument("write_mfa: too many components");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ell));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(model.components.size()));
  for (const auto& c : model.components) {
    put_f64(out, c.weight);
    for (Index i = 0; i < d; ++i) put_f64(out, c.mean(i));
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < ell; ++j) put_f64(out, c.loading(i, j));
    }
    for (Index i = 0; i < d; ++i) put_f64(out, c.noise(i));
  }
  if (!out) throw std::runtime_error("write_mfa: write failed");
}

MfaModel read_mfa(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("read_mfa: bad magic");
  const auto version = get_le<std::uint16_t>(in);
  if (version != kFormatVersion) throw std::runtime_error("read_mfa: unsupported version " + std::to_string(version));
  const Index d = get_le<std::uint32_t>(in);
  const Index ell = get_le<std::uint32_t>(in);
  const auto kk = get_le<std::uint16_t>(in);
  MfaModel model;
  for (std::uint16_t k = 0; k < kk; ++k) {
    FactorComponent c;
    c.weight = get_f64(in);
    c.mean.resize(d);
    for (Index i = 0; i < d; ++i) c.mean(i) = get_f64(in);
    c.loading.resize(d, ell);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < ell; ++j) c.loading(i, j) = get_f64(in);
    }
    c.noise.resize(d);
    for (Index i = 0; i < d; ++i) c.noise(i) = get_f64(in);
    model.components.push_back(std::move(c));
  }
  return model;
}

void save_mfa(const MfaModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mfa: cannot open " + path.string());
  write_mfa(model, out);
}

MfaModel load_mfa(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mfa: cannot open " + path.string());
  return read_mfa(in);
}

}  // namespace latentrob
