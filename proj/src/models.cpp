#include "latentrob/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latentrob {

namespace {

double sgn(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string_view FeatureMap::name() const {
  switch (kind_) {
    case FeatureMapKind::Identity: return "identity";
    case FeatureMapKind::LeakyAbs: return "leaky_abs";
    case FeatureMapKind::SignQuadratic: return "sign_quadratic";
    case FeatureMapKind::Tanh: return "tanh";
  }
  return "identity";
}

FeatureMap FeatureMap::parse(std::string_view name) {
  if (name == "identity") return FeatureMap(FeatureMapKind::Identity);
  if (name == "leaky_abs") return FeatureMap(FeatureMapKind::LeakyAbs);
  if (name == "sign_quadratic") return FeatureMap(FeatureMapKind::SignQuadratic);
  if (name == "tanh") return FeatureMap(FeatureMapKind::Tanh);
  throw std::invalid_argument("unknown feature map: " + std::string(name));
}

double FeatureMap::forward(double t) const {
  switch (kind_) {
    case FeatureMapKind::Identity: return t;
    case FeatureMapKind::LeakyAbs: return t >= 0.0 ? t : 0.25 * t;
    case FeatureMapKind::SignQuadratic: return t + sgn(t) * t * t;
    case FeatureMapKind::Tanh: return std::tanh(t);
  }
  return t;
}

double FeatureMap::inverse(double x) const {
  switch (kind_) {
    case FeatureMapKind::Identity: return x;
    case FeatureMapKind::LeakyAbs: return x >= 0.0 ? x : 4.0 * x;
    case FeatureMapKind::SignQuadratic:
      // root of t^2 + t - |x| = 0, written without cancellation
      return sgn(x) * 2.0 * std::abs(x) / (1.0 + std::sqrt(1.0 + 4.0 * std::abs(x)));
    case FeatureMapKind::Tanh: {
      if (!(std::abs(x) <= 1.0)) {
        throw std::domain_error("tanh inverse: entry outside [-1, 1]");
      }
      return std::atanh(std::clamp(x, -kTanhClamp, kTanhClamp));
    }
  }
  return x;
}

double FeatureMap::inverse_derivative(double x) const {
  switch (kind_) {
    case FeatureMapKind::Identity: return 1.0;
    case FeatureMapKind::LeakyAbs: return x >= 0.0 ? 1.0 : 4.0;
    case FeatureMapKind::SignQuadratic: return 1.0 / std::sqrt(1.0 + 4.0 * std::abs(x));
    case FeatureMapKind::Tanh: {
      const double c = std::clamp(x, -kTanhClamp, kTanhClamp);
      return 1.0 / (1.0 - c * c);
    }
  }
  return 1.0;
}

std::optional<double> FeatureMap::derivative_lower_bound() const {
  switch (kind_) {
    case FeatureMapKind::Identity: return 1.0;
    case FeatureMapKind::LeakyAbs: return 0.25;
    case FeatureMapKind::SignQuadratic: return 1.0;
    case FeatureMapKind::Tanh: return std::nullopt;
  }
  return std::nullopt;
}

Vector FeatureMap::forward(const Vector& t) const {
  if (kind_ == FeatureMapKind::Identity) return t;
  return t.unaryExpr([this](double v) { return forward(v); });
}

Vector FeatureMap::inverse(const Vector& x) const {
  if (kind_ == FeatureMapKind::Identity) return x;
  return x.unaryExpr([this](double v) { return inverse(v); });
}

Vector FeatureMap::inverse_derivative(const Vector& x) const {
  return x.unaryExpr([this](double v) { return inverse_derivative(v); });
}

std::string_view link_name(Link link) {
  return link == Link::Logistic ? "logistic" : "probit";
}

Link parse_link(std::string_view name) {
  if (name == "logistic") return Link::Logistic;
  if (name == "probit") return Link::Probit;
  throw std::invalid_argument("unknown link: " + std::string(name));
}

double link_cdf(Link link, double t) {
  if (link == Link::Probit) return normal_cdf(t);
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

double link_inverse(Link link, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("link_inverse: p outside (0, 1)");
  if (link == Link::Logistic) return std::log(p / (1.0 - p));
  // Probit: bisection on the cdf is plenty for the thresholds we need.
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void LatentGMM::validate() const {
  if (w.rows() < 1 || w.cols() < 1) throw std::invalid_argument("LatentGMM: empty W");
  if (mu.size() != w.cols()) throw std::invalid_argument("LatentGMM: mu has wrong length");
  if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("LatentGMM: pi must lie in (0, 1)");
  if (!w.allFinite() || !mu.allFinite()) throw std::invalid_argument("LatentGMM: non-finite parameters");
  if (svd(w).numerical_rank != w.cols()) {
    throw std::invalid_argument("LatentGMM: W is not of full column rank");
  }
}

LatentGMM LatentGMM::random(Index d, Index k, double pi, FeatureMap phi, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  LatentGMM m;
  m.w.resize(d, k);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < k; ++j) m.w(i, j) = scale * rng.normal();
  m.mu = scale * rng.normal_vector(k);
  m.pi = pi;
  m.phi = phi;
  return m;
}

LatentGMM LatentGMM::random_unit_rows(Index d, Index k, FeatureMap phi, Rng& rng) {
  LatentGMM m;
  m.w.resize(d, k);
  for (Index i = 0; i < d; ++i) {
    Vector row = rng.normal_vector(k);
    m.w.row(i) = row.transpose() / row.norm();
  }
  m.mu = rng.normal_vector(k) / std::sqrt(static_cast<double>(k));
  m.pi = 0.5;
  m.phi = phi;
  return m;
}

void LatentGLM::validate() const {
  if (w.rows() < 1 || w.cols() < 1) throw std::invalid_argument("LatentGLM: empty W");
  if (beta.size() != w.cols()) throw std::invalid_argument("LatentGLM: beta has wrong length");
  if (!w.allFinite() || !beta.allFinite()) throw std::invalid_argument("LatentGLM: non-finite parameters");
  if (svd(w).numerical_rank != w.cols()) {
    throw std::invalid_argument("LatentGLM: W is not of full column rank");
  }
}

LatentGLM LatentGLM::random(Index d, Index k, Link link, FeatureMap phi, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(k));
  LatentGLM m;
  m.w.resize(d, k);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < k; ++j) m.w(i, j) = scale * rng.normal();
  m.beta = scale * rng.normal_vector(k);
  m.link = link;
  m.phi = phi;
  return m;
}

LabeledSample draw_gmm(const LatentGMM& model, Rng& rng, bool keep_latent) {
  LabeledSample s;
  s.y = rng.bernoulli(model.pi) ? 1 : -1;
  Vector z = rng.normal_vector(model.latent_dim());
  z += static_cast<double>(s.y) * model.mu;
  s.x = model.phi.forward(model.w * z);
  if (keep_latent) s.z = std::move(z);
  return s;
}

LabeledSample draw_glm(const LatentGLM& model, Rng& rng, bool keep_latent) {
  LabeledSample s;
  Vector z = rng.normal_vector(model.latent_dim());
  s.y = rng.bernoulli(link_cdf(model.link, z.dot(model.beta))) ? 1 : -1;
  s.x = model.phi.forward(model.w * z);
  if (keep_latent) s.z = std::move(z);
  return s;
}

std::vector<LabeledSample> sample_gmm(const LatentGMM& model, std::size_t n, Rng& rng,
                                      bool keep_latent) {
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw_gmm(model, rng, keep_latent));
  return out;
}

std::vector<LabeledSample> sample_glm(const LatentGLM& model, std::size_t n, Rng& rng,
                                      bool keep_latent) {
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw_glm(model, rng, keep_latent));
  return out;
}

namespace {

nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.cols());
    for (Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

Matrix matrix_from_rows(const nlohmann::json& j, Index d, Index k) {
  if (!j.is_array() || static_cast<Index>(j.size()) != d) {
    throw std::invalid_argument("model file: W must have d rows");
  }
  Matrix m(d, k);
  for (Index i = 0; i < d; ++i) {
    const auto& row = j.at(i);
    if (static_cast<Index>(row.size()) != k) throw std::invalid_argument("model file: W row has wrong length");
    for (Index c = 0; c < k; ++c) m(i, c) = row.at(c).get<double>();
  }
  return m;
}

Vector vector_from_json(const nlohmann::json& j, Index n, const char* field) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n) {
    throw std::invalid_argument(std::string("model file: bad length for ") + field);
  }
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = j.at(i).get<double>();
  return v;
}

}  // namespace

nlohmann::json to_json(const LatentGMM& model) {
  return {{"d", model.ambient_dim()},
          {"k", model.latent_dim()},
          {"pi", model.pi},
          {"phi", std::string(model.phi.name())},
          {"W", matrix_rows(model.w)},
          {"mu", std::vector<double>(model.mu.data(), model.mu.data() + model.mu.size())}};
}

nlohmann::json to_json(const LatentGLM& model) {
  return {{"d", model.ambient_dim()},
          {"k", model.latent_dim()},
          {"phi", std::string(model.phi.name())},
          {"W", matrix_rows(model.w)},
          {"beta", std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size())},
          {"link", std::string(link_name(model.link))}};
}

LatentGMM gmm_from_json(const nlohmann::json& j) {
  const Index d = j.at("d").get<Index>();
  const Index k = j.at("k").get<Index>();
  LatentGMM m;
  m.pi = j.at("pi").get<double>();
  m.phi = FeatureMap::parse(j.at("phi").get<std::string>());
  m.w = matrix_from_rows(j.at("W"), d, k);
  m.mu = vector_from_json(j.at("mu"), k, "mu");
  m.validate();
  return m;
}

LatentGLM glm_from_json(const nlohmann::json& j) {
  const Index d = j.at("d").get<Index>();
  const Index k = j.at("k").get<Index>();
  LatentGLM m;
  m.phi = FeatureMap::parse(j.at("phi").get<std::string>());
  m.link = parse_link(j.at("link").get<std::string>());
  m.w = matrix_from_rows(j.at("W"), d, k);
  m.beta = vector_from_json(j.at("beta"), k, "beta");
  m.validate();
  return m;
}

}  // namespace latentrob
