// Acceptance checks. Usage: acceptance [criterion...]; no arguments runs all.
#include "latentrob/attacks.hpp"
#include "latentrob/classifiers.hpp"
#include "latentrob/dataio.hpp"
#include "latentrob/experiments.hpp"
#include "latentrob/mfa.hpp"
#include "latentrob/risk.hpp"
#include "latentrob/training.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace latentrob;
namespace fs = std::filesystem;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("latentrob_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Index uniform_index(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

bool within(double mc, double exact, double se) { return std::abs(mc - exact) <= 4.0 * se + 1e-12; }

// 1 ------------------------------------------------------------------------
Outcome closed_form_vs_monte_carlo() {
  Outcome o;
  Rng rng(101);
  const double ps[] = {2.0, 4.0, kInf};
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Index d = uniform_index(rng, 2, 50);
    const Index k = uniform_index(rng, 1, std::min<Index>(5, d));
    const double p = ps[i % 3];
    const auto m = LatentGMM::random(d, k, i % 2 ? 0.35 : 0.5, FeatureMap{}, rng);
    const PullbackRule rule = i % 4 < 2 ? PullbackRule(bayes_gmm(m)) : PullbackRule{rng.normal_vector(d), 0.0, {}};
    // radius that moves about u standard deviations of the score
    const double u = 0.1 + 0.9 * rng.uniform();
    const double eps = u * (m.w.transpose() * rule.direction).norm() / lp_norm(rule.direction, dual_exponent(p));
    const AdversaryBudget b{p, eps};
    const auto cf = linear_gmm_risks_closed(m, rule, b);
    const auto mc = monte_carlo_risks([&](Rng& r) { return draw_gmm(m, r); }, exact_linear_oracle(rule, b), 100000,
                                      mix64(7, static_cast<std::uint64_t>(i)));
    const std::string tag = "instance " + std::to_string(i);
    o.require(within(mc.sr, cf.sr, mc.sr_se), tag + " SR");
    o.require(within(mc.ar(), cf.ar(), mc.ar_se), tag + " AR");
    o.require(within(mc.br(), cf.br(), mc.br_se), tag + " BR");
    for (auto [a, c, s] : {std::tuple{mc.sr, cf.sr, mc.sr_se}, std::tuple{mc.ar(), cf.ar(), mc.ar_se},
                           std::tuple{mc.br(), cf.br(), mc.br_se}})
      if (s > 0) worst = std::max(worst, std::abs(a - c) / s);
  }
  if (o.pass) o.detail = fmt("60 comparisons, max |MC - closed| = %.2f SE", worst);
  return o;
}

// 2 ------------------------------------------------------------------------
Outcome gmm_bound_dominance() {
  Outcome o;
  Rng rng(202);
  AttackConfig attack;
  attack.steps = 20;
  double max_z = -kInf, max_ratio = 0.0;
  for (int i = 0; i < 50; ++i) {
    const bool identity = i % 2 == 0;
    const Index d = uniform_index(rng, 10, 50);
    const Index k = uniform_index(rng, 1, 5);
    const auto m = LatentGMM::random(d, k, 0.5, FeatureMap(identity ? FeatureMapKind::Identity : FeatureMapKind::SignQuadratic), rng);
    const auto rule = bayes_gmm(m);
    const AdversaryBudget b{2.0, 0.1 + 0.9 * rng.uniform()};
    const auto bound = gmm_br_bound(m, b);
    const std::uint64_t seed = mix64(11, static_cast<std::uint64_t>(i));
    const auto r = identity ? latent_monte_carlo_gmm(m, rule, b, 100000, seed)
                            : monte_carlo_risks([&](Rng& g) { return draw_gmm(m, g); },
                                                pgd_sandwich_oracle(rule, b, attack), 10000, seed,
                                                RiskMethod::MonteCarloSandwich);
    o.require(r.br_upper <= bound.bound + 4.0 * r.br_se, "instance " + std::to_string(i));
    if (r.br_se > 0) max_z = std::max(max_z, (r.br_upper - bound.bound) / r.br_se);
    if (bound.bound > 0) max_ratio = std::max(max_ratio, r.br_upper / bound.bound);
  }
  if (o.pass) o.detail = fmt("50 instances, max BR/bound = %.3f, max (BR - bound)/SE = %.2f", max_ratio, max_z);
  return o;
}

// 3 ------------------------------------------------------------------------
Outcome glm_bound_dominance() {
  Outcome o;
  Rng rng(303);
  AttackConfig attack;
  attack.steps = 20;
  double max_ratio = 0.0, max_z = -kInf;
  for (int i = 0; i < 50; ++i) {
    const bool identity = i % 2 == 0;
    const Link link = (i / 2) % 2 ? Link::Probit : Link::Logistic;
    const Index d = uniform_index(rng, 10, 50);
    const Index k = uniform_index(rng, 1, 5);
    const auto m = LatentGLM::random(d, k, link, FeatureMap(identity ? FeatureMapKind::Identity : FeatureMapKind::SignQuadratic), rng);
    const auto rule = bayes_glm(m);
    const AdversaryBudget b{2.0, 0.1 + 0.9 * rng.uniform()};
    const auto bound = glm_br_bound(m, b);
    const std::uint64_t seed = mix64(13, static_cast<std::uint64_t>(i));
    const auto r = identity ? latent_monte_carlo_glm(m, rule, b, 100000, seed)
                            : monte_carlo_risks([&](Rng& g) { return draw_glm(m, g); },
                                                pgd_sandwich_oracle(rule, b, attack), 10000, seed,
                                                RiskMethod::MonteCarloSandwich);
    const std::string tag = "instance " + std::to_string(i);
    o.require(r.br_upper <= bound.lipschitz_bound + 4.0 * r.br_se, tag + " Lipschitz form");
    o.require(r.br_upper <= bound.two_phi_bound + 4.0 * r.br_se, tag + " two-Phi form");
    if (bound.two_phi_bound > 0) max_ratio = std::max(max_ratio, r.br_upper / bound.two_phi_bound);
    if (r.br_se > 0) max_z = std::max(max_z, (r.br_upper - bound.two_phi_bound) / r.br_se);
  }
  if (o.pass)
    o.detail = fmt("50 instances, logistic and probit, max BR/two-Phi bound = %.3f, max (BR - bound)/SE = %.2f",
                   max_ratio, max_z);
  return o;
}

// 4 ------------------------------------------------------------------------
Outcome gmm_sweep_trend() {
  Outcome o;
  auto c = default_config(ExperimentKind::GmmSweep);
  c.out_dir = scratch("gmm");
  const auto s = run_experiment(c);
  o.require(s.cells_failed == 0, "sweep cells failed");
  const auto rows = read_csv(s.csv);
  std::map<Index, std::vector<const SweepRow*>> by_k;
  for (const auto& r : rows) by_k[r.k].push_back(&r);
  auto mean = [](const std::vector<const SweepRow*>& v, auto f) {
    double acc = 0;
    for (auto* r : v) acc += f(*r);
    return acc / static_cast<double>(v.size());
  };
  const auto& lo = by_k.at(c.d);  // d/k = 1
  const auto& hi = by_k.at(1);    // d/k = d
  const double br_lo = mean(lo, [](const SweepRow& r) { return r.br_hi; });
  const double br_hi = mean(hi, [](const SweepRow& r) { return r.br_hi; });
  const double bound = mean(hi, [](const SweepRow& r) { return r.bound; });
  o.require(hi.size() == 20 && lo.size() == 20, "expected 20 trials per cell");
  o.require(br_hi < br_lo, "BR not smaller at d/k = 300");
  o.require(br_hi <= bound, "mean BR above mean bound at d/k = 300");
  for (auto* r : hi) o.require(r->br_hi <= r->bound + 4.0 * r->br_se, "instance above its bound");
  o.detail = fmt("mean BR %.4f at d/k=1, %.4f at d/k=300, mean bound %.4f", br_lo, br_hi, bound) +
             (o.pass ? "" : "; " + o.detail);
  return o;
}

// 5 ------------------------------------------------------------------------
Outcome lemma1_prop2() {
  Outcome o;
  for (double eps : {0.5, 1.0, 2.0, 4.0}) {
    double prev = kInf;
    for (int i = 1; i <= 100; ++i) {
      const double g = lemma_g(0.1 * i, eps);
      o.require(g <= prev, "lemma_g not monotone");
      prev = g;
    }
  }
  const oracle::GaussHermite gh(64);
  const double quad = gh.expect([](double z) { return oracle::phi_series(1.0 + z) - oracle::phi_series(z); });
  const double c1 = prop2_constant({2.0, 1.0});
  o.require(std::abs(c1 - 0.26025) <= 1e-4, "prop2_constant(1) off 0.26025");
  o.require(std::abs(c1 - quad) <= 1e-4, "prop2_constant(1) off quadrature");

  auto c = default_config(ExperimentKind::Prop2Check);
  c.out_dir = scratch("prop2");
  const auto s = run_experiment(c);
  o.require(s.cells_failed == 0, "prop2-check cells failed");
  double min_z = kInf;
  for (const auto& r : read_csv(s.csv)) {
    o.require(r.br_hi >= r.bound - 4.0 * r.br_se, "k = " + std::to_string(r.k) + " below constant");
    min_z = std::min(min_z, (r.br_hi - r.bound) / r.br_se);
  }
  if (o.pass) o.detail = fmt("c(1) = %.6f, quadrature %.6f, min MC z-score vs constant %.1f", c1, quad, min_z);
  return o;
}

// 6 ------------------------------------------------------------------------
Outcome robust_erm() {
  Outcome o;
  Rng rng(606);
  const auto m = LatentGMM::random(100, 10, 0.5, FeatureMap{}, rng);
  const auto data = sample_gmm(m, 300, rng);
  RobustErmConfig cfg;
  cfg.epsilon = 1.0;
  const auto fit = robust_erm_fit(data, cfg, rng);
  const double ratio = kernel_component_ratio(fit.theta, m.w);
  o.require(fit.converged, "fit did not converge");
  o.require(ratio <= 1e-4, "kernel component ratio above 1e-4");

  double worst_rel = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Vector theta = rng.normal_vector(100);
    const Vector g = robust_objective_gradient(theta, data, 1.0);
    const Vector fd =
        oracle::central_difference([&](const Vector& th) { return robust_objective(th, data, 1.0); }, theta, 1e-6);
    worst_rel = std::max(worst_rel, (g - fd).norm() / g.norm());
  }
  o.require(worst_rel <= 1e-5, "gradient mismatch");

  auto c = default_config(ExperimentKind::ErmSweep);
  c.phis = {"identity"};
  c.epsilons = {1.0};
  c.out_dir = scratch("erm");
  const auto s = run_experiment(c);
  o.require(s.cells_failed == 0, "erm-sweep cells failed");
  std::map<double, std::pair<double, int>> by_ratio;
  for (const auto& r : read_csv(s.csv)) {
    auto& [acc, n] = by_ratio[r.ratio];
    acc += r.br_hi;
    ++n;
  }
  const double br_first = by_ratio.begin()->second.first / by_ratio.begin()->second.second;
  const double br_last = by_ratio.rbegin()->second.first / by_ratio.rbegin()->second.second;
  o.require(br_last < br_first, "BR not decreasing in d/k");
  o.detail = fmt("kernel ratio %.2e, gradient rel err %.1e, mean BR %.4f at d/k=1 -> %.4f at d/k=100", ratio,
                 worst_rel, br_first, br_last) +
             (o.pass ? "" : "; " + o.detail);
  return o;
}

// 7 ------------------------------------------------------------------------
FactorComponent random_component(Index d, Index ell, Rng& rng, double weight) {
  FactorComponent c;
  c.weight = weight;
  c.mean = rng.normal_vector(d);
  c.loading = Matrix(d, ell);
  for (Index j = 0; j < ell; ++j) c.loading.col(j) = rng.normal_vector(d);
  c.noise = Vector(d);
  for (Index i = 0; i < d; ++i) c.noise(i) = 0.05 + rng.uniform();
  return c;
}

bool nondecreasing(const EmTrace& t) {
  for (std::size_t i = 1; i < t.average_loglik.size(); ++i) {
    const bool reseeded = std::find(t.reseeded_at.begin(), t.reseeded_at.end(), static_cast<int>(i)) != t.reseeded_at.end();
    if (!reseeded && t.average_loglik[i] < t.average_loglik[i - 1] - 1e-10 * std::abs(t.average_loglik[i - 1]))
      return false;
  }
  return true;
}

Outcome mfa_numerics() {
  Outcome o;
  Rng rng(707);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Index d = uniform_index(rng, 1, 50);
    const Index ell = uniform_index(rng, 0, std::min<Index>(5, d));
    const auto c = random_component(d, ell, rng, 1.0);
    const Vector x = c.mean + rng.normal_vector(d);
    const Matrix cov = c.loading * c.loading.transpose() + Matrix(c.noise.asDiagonal());
    const double dense = oracle::dense_logpdf(x, c.mean, cov);
    const double fast = component_loglik(x, c.mean, c.loading, c.noise);
    worst = std::max(worst, std::abs(fast - dense) / std::abs(dense));
  }
  o.require(worst <= 1e-6, "low-rank log-likelihood off the dense oracle");

  // truth standardized to unit marginal variances
  MfaModel truth;
  truth.components.push_back(random_component(20, 2, rng, 1.0));
  for (Index i = 0; i < 20; ++i) {
    auto& c = truth.components[0];
    const double v = c.loading.row(i).squaredNorm() + c.noise(i);
    c.loading.row(i) /= std::sqrt(v);
    c.noise(i) /= v;
  }
  const Matrix data = mfa_sample(truth, 5000, rng);
  const Matrix centered = data.rowwise() - data.colwise().mean();
  EmTrace trace;
  const auto fit = mfa_fit_em(data, 1, 2, EmConfig{}, rng, &trace);
  o.require(nondecreasing(trace), "EM log-likelihood decreased (single component)");
  const auto& t = truth.components[0];
  const auto& f = fit.components[0];
  const Matrix true_cov = t.loading * t.loading.transpose() + Matrix(t.noise.asDiagonal());
  const Matrix fit_cov = f.loading * f.loading.transpose() + Matrix(f.noise.asDiagonal());
  const double cov_err = (fit_cov - true_cov).cwiseAbs().maxCoeff();
  const double sample_err = (centered.transpose() * centered / 5000.0 - true_cov).cwiseAbs().maxCoeff();
  o.require(cov_err <= 0.1, "covariance recovery error above 0.1");

  int fits = 1;
  for (Index k : {2, 3}) {
    MfaModel mix;
    for (Index j = 0; j < k; ++j) mix.components.push_back(random_component(10, 2, rng, 1.0 / static_cast<double>(k)));
    for (auto& comp : mix.components) comp.mean *= 4.0;
    const Matrix x = mfa_sample(mix, 3000, rng);
    EmTrace tr;
    mfa_fit_em(x, k, 2, EmConfig{}, rng, &tr);
    o.require(nondecreasing(tr), "EM log-likelihood decreased (mixture)");
    ++fits;
  }
  o.detail = fmt("max rel log-lik error %.1e, covariance max-entry error %.3f (sample covariance %.3f), %g EM fits",
                 worst, cov_err, sample_err, fits) +
             (o.pass ? "" : "; " + o.detail);
  return o;
}

// 8 ------------------------------------------------------------------------
Outcome attacks() {
  Outcome o;
  const fs::path mnist = fs::path(LATENTROB_SOURCE_DIR) / "data/mnist5k";
  const auto all = load_idx_dataset(mnist / "train-images-idx3-ubyte.gz", mnist / "train-labels-idx1-ubyte.gz");
  EmConfig em;
  em.max_iterations = 20;
  Rng rng(808);
  const auto fit_digit = [&](int digit) { return mfa_fit_em(filter_by_label(all, {digit}).images, 1, 10, em, rng); };
  const MfaBayesClassifier clf{fit_digit(6), fit_digit(0), 0.0};
  const MfaBayesScorer scorer(clf);
  const LossFunction loss = margin_loss([&](const Vector& x) { return scorer.score(x); },
                                        [&](const Vector& x) { return scorer.score_gradient(x); });

  AttackConfig fgm_cfg;
  fgm_cfg.kind = AttackKind::FGM;
  fgm_cfg.epsilon = 2.0;
  fgm_cfg.clip = std::make_pair(0.0, 1.0);
  AttackConfig pgd_cfg = fgm_cfg;
  pgd_cfg.kind = AttackKind::PGD;
  pgd_cfg.steps = 40;

  int pgd_below = 0, budget_violations = 0, box_violations = 0;
  double worst_shortfall = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int y = rng.bernoulli(0.5) ? 1 : -1;
    Vector x = mfa_sample(y > 0 ? clf.positive : clf.negative, 1, rng).row(0).transpose();
    x = x.cwiseMax(0.0).cwiseMin(1.0);
    const auto a = fgm(x, y, loss, fgm_cfg);
    const auto b = pgd(x, y, loss, pgd_cfg);
    for (const auto* r : {&a, &b}) {
      if ((r->x - x).norm() > 2.0 + 1e-9) ++budget_violations;
      if (r->x.minCoeff() < 0.0 || r->x.maxCoeff() > 1.0) ++box_violations;
    }
    if (b.loss < a.loss) {
      ++pgd_below;
      worst_shortfall = std::max(worst_shortfall, (a.loss - b.loss) / std::max(1.0, std::abs(a.loss)));
    }
  }
  o.require(budget_violations == 0, "budget violated");
  o.require(box_violations == 0, "box violated");
  o.require(pgd_below == 0, std::to_string(pgd_below) + " samples with PGD loss < FGM loss");

  Rng lin(809);
  double worst_gap = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Vector v = lin.normal_vector(10), x = lin.normal_vector(10);
    const double margin = std::abs(v.dot(x));
    const int y = sign_label(v.dot(x));
    RadiusSearchConfig rc;
    rc.attack.steps = 20;
    rc.grid_step = 0.05;
    rc.epsilon_max = 20.0;
    const auto r = minimal_adversarial_radius(
        x, y, margin_loss([&](const Vector& p) { return v.dot(p); }, [&](const Vector&) { return v; }),
        [&](const Vector& p) { return sign_label(v.dot(p)); }, rc);
    const double gap = r.radius - margin / v.norm();
    o.require(r.found && gap >= -1e-9 && gap <= rc.grid_step + 1e-9, "radius off margin/||v||");
    worst_gap = std::max(worst_gap, gap);
  }
  o.detail = fmt("1000 MNIST-MFA samples at eps=2: %g budget, %g box violations, PGD < FGM on %g; radius gap <= %.3f",
                 budget_violations, box_violations, pgd_below, worst_gap) +
             (o.pass ? "" : fmt("; worst PGD shortfall %.2e", worst_shortfall));
  return o;
}

// 9 ------------------------------------------------------------------------
Outcome mnist_mfa_trend() {
  Outcome o;
  auto c = default_config(ExperimentKind::MfaEval);
  c.mnist_dir = fs::path(LATENTROB_SOURCE_DIR) / "data/mnist5k";
  c.k_list = {1, 10, 100};
  c.out_dir = scratch("mfa");
  const auto s = run_experiment(c);
  o.require(s.cells_failed == 0, "mfa-eval cells failed");
  std::map<std::string, std::map<Index, double>> br;
  for (const auto& r : read_csv(s.csv)) br[r.experiment][r.k] = r.br_hi;
  std::map<Index, double> radius;
  for (const auto& m : s.details.at("median_radius")) radius[m.at("ell").get<Index>()] = m.at("median_radius").get<double>();
  std::ostringstream detail;
  for (const auto& [name, by_ell] : br) {
    detail << name.substr(name.rfind('/') + 1) << " BR";
    for (auto [ell, v] : by_ell) detail << ' ' << v;
    detail << "; ";
    o.require(by_ell.at(1) >= by_ell.at(10) && by_ell.at(10) >= by_ell.at(100), name + " BR increases with ell");
  }
  detail << "median radius";
  for (auto [ell, v] : radius) detail << ' ' << v;
  o.require(radius.at(1) > radius.at(10) && radius.at(10) > radius.at(100), "median radii not ordered");
  o.detail = detail.str() + (o.pass ? "" : " (" + o.detail + ")");
  return o;
}

// 10 -----------------------------------------------------------------------
std::string strip_wall_time(const fs::path& csv) {
  std::ifstream in(csv);
  std::string out;
  for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

Outcome reproducibility() {
  Outcome o;
  std::vector<ExperimentConfig> configs;
  auto gmm = default_config(ExperimentKind::GmmSweep);
  gmm.d = 40;
  gmm.trials = 3;
  gmm.n_mc = 5000;
  gmm.epsilons = {0.5, 1.0};
  gmm.phis = {"identity", "leaky_abs"};
  configs.push_back(gmm);
  auto glm = default_config(ExperimentKind::GlmSweep);
  glm.d = 40;
  glm.trials = 2;
  glm.n_mc = 5000;
  glm.links = {"logistic", "probit"};
  configs.push_back(glm);
  auto erm = default_config(ExperimentKind::ErmSweep);
  erm.d = 20;
  erm.trials = 2;
  erm.n_mc = 5000;
  erm.n_train = 100;
  configs.push_back(erm);
  auto prop2 = default_config(ExperimentKind::Prop2Check);
  prop2.trials = 2;
  prop2.n_mc = 5000;
  configs.push_back(prop2);

  std::size_t compared = 0;
  for (auto& c : configs) {
    c.out_dir = scratch("repro_a");
    const auto a = strip_wall_time(run_experiment(c).csv);
    c.out_dir = scratch("repro_b");
    const auto b = strip_wall_time(run_experiment(c).csv);
    o.require(a == b && !a.empty(), std::string(experiment_name(c.kind)) + " CSV differs");
    compared += static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n')) - 1;
  }
  if (o.pass) o.detail = "4 sweeps rerun, " + std::to_string(compared) + " rows identical modulo wall_ms";
  return o;
}

struct Criterion {
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"closed-form risks match exact Monte Carlo", closed_form_vs_monte_carlo},
      {"GMM boundary-risk bound dominates Monte Carlo", gmm_bound_dominance},
      {"GLM boundary-risk bounds dominate Monte Carlo", glm_bound_dominance},
      {"gmm-sweep BR decreases in d/k and sits under the bound", gmm_sweep_trend},
      {"lemma_g monotone, prop2 constant, prop2-check", lemma1_prop2},
      {"robust ERM kernel ratio, gradient, erm-sweep trend", robust_erm},
      {"MFA likelihood, EM monotonicity, covariance recovery", mfa_numerics},
      {"attack constraints, PGD vs FGM, minimal radius", attacks},
      {"MNIST MFA: BR and median radius ordered in ell", mnist_mfa_trend},
      {"sweeps are reproducible", reproducibility},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    const auto& c = criteria[static_cast<std::size_t>(id - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s -- %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, c.title, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
