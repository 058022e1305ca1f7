#include "latentrob/experiments.hpp"

#include "latentrob/attacks.hpp"
#include "latentrob/classifiers.hpp"
#include "latentrob/dataio.hpp"
#include "latentrob/mfa.hpp"
#include "latentrob/models.hpp"
#include "latentrob/parallel.hpp"
#include "latentrob/risk.hpp"
#include "latentrob/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

namespace latentrob {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void fill_risks(SweepRow& row, const RiskReport& r) {
  row.sr = r.sr;
  row.sr_se = r.sr_se;
  row.ar_lo = r.ar_lower;
  row.ar_hi = r.ar_upper;
  row.ar_se = r.ar_se;
  row.br_lo = r.br_lower;
  row.br_hi = r.br_upper;
  row.br_se = r.br_se;
}

SweepRow base_row(std::string experiment, Index d, Index k, double p, double eps, int trial, std::uint64_t seed) {
  SweepRow row;
  row.experiment = std::move(experiment);
  row.d = d;
  row.k = k;
  row.ratio = static_cast<double>(d) / static_cast<double>(k);
  row.p = p;
  row.epsilon = eps;
  row.trial = trial;
  row.seed = seed;
  return row;
}

double condition_ratio(const Matrix& w, const AdversaryBudget& budget) {
  return effective_l2_radius(budget, w.rows()) / sigma_min(w);
}

// Instances are drawn once per (cell, trial) and shared across epsilons.
struct CellPlan {
  std::vector<std::string> keys;
  bool all_done = true;
};

CellPlan plan_cell(const CsvSink& sink, const std::string& experiment, Index d, Index k, double p,
                   const std::vector<double>& epsilons, int trial) {
  CellPlan plan;
  for (double eps : epsilons) {
    const auto key = row_key(base_row(experiment, d, k, p, eps, trial, 0));
    plan.keys.push_back(key);
    if (!sink.has(key)) plan.all_done = false;
  }
  return plan;
}

void report_failure(const std::string& where, const std::exception& e) {
  std::cerr << "cell " << where << " failed: " << e.what() << "\n";
}

AttackConfig sandwich_attack(const ExperimentConfig& config) {
  AttackConfig a;
  a.kind = AttackKind::PGD;
  a.steps = config.attack_steps;
  return a;
}

}  // namespace

std::string_view experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::GmmSweep: return "gmm-sweep";
    case ExperimentKind::GlmSweep: return "glm-sweep";
    case ExperimentKind::ErmSweep: return "erm-sweep";
    case ExperimentKind::Prop2Check: return "prop2-check";
    case ExperimentKind::MfaFit: return "mfa-fit";
    case ExperimentKind::MfaEval: return "mfa-eval";
  }
  return "unknown";
}

ExperimentKind parse_experiment(std::string_view name) {
  for (auto k : {ExperimentKind::GmmSweep, ExperimentKind::GlmSweep, ExperimentKind::ErmSweep,
                 ExperimentKind::Prop2Check, ExperimentKind::MfaFit, ExperimentKind::MfaEval}) {
    if (experiment_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown experiment '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (d < 1) fail("d must be >= 1");
  for (Index k : k_list) {
    if (k < 1) fail("k_list entries must be >= 1");
  }
  if (n_mc < 1) fail("n_mc must be >= 1");
  if (n_train < 1) fail("n_train must be >= 1");
  if (epsilons.empty()) fail("epsilons must be nonempty");
  for (double e : epsilons) {
    if (!(e >= 0.0)) fail("epsilons must be >= 0");
  }
  if (!(p >= 2.0)) fail("p must be >= 2");
  if (phis.empty()) fail("phis must be nonempty");
  for (const auto& f : phis) FeatureMap::parse(f);
  if (links.empty()) fail("links must be nonempty");
  for (const auto& l : links) parse_link(l);
  if (!(pi > 0.0 && pi < 1.0)) fail("pi must be in (0,1)");
  if (trials < 1) fail("trials must be >= 1");
  if (attack_steps < 1 || pgd_steps < 1) fail("attack steps must be >= 1");
  if (erm_max_iterations < 0) fail("erm_max_iterations must be >= 0");
  if (mfa_components.empty()) fail("mfa_components must be nonempty");
  for (Index c : mfa_components) {
    if (c < 1) fail("mfa_components entries must be >= 1");
  }
  if (n_generate < 2) fail("n_generate must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must be in (0,1)");
  if (!(variance_floor > 0.0)) fail("variance_floor must be > 0");
  if (!(radius_grid_step > 0.0) || !(radius_max > 0.0)) fail("radius grid must be positive");
}

std::vector<Index> k_grid(Index d, bool full) {
  std::vector<Index> out;
  if (full) {
    for (Index k = 1; k <= d; ++k) out.push_back(k);
    return out;
  }
  constexpr int points = 12;
  for (int i = 0; i < points; ++i) {
    const double v = std::pow(static_cast<double>(d), static_cast<double>(i) / (points - 1));
    const Index k = std::clamp<Index>(std::llround(v), 1, d);
    if (out.empty() || out.back() != k) out.push_back(k);
  }
  return out;
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::GmmSweep:
      break;
    case ExperimentKind::GlmSweep:
      c.epsilons = {1.0, 2.0, 4.0};
      break;
    case ExperimentKind::ErmSweep:
      c.d = 100;
      c.epsilons = {1.0, 2.0, 4.0};
      c.phis = {"identity", "leaky_abs", "sign_quadratic", "tanh"};
      break;
    case ExperimentKind::Prop2Check:
      c.d = 200;
      c.k_list = {1, 5, 25, 125};
      c.trials = 5;
      break;
    case ExperimentKind::MfaFit:
    case ExperimentKind::MfaEval:
      c.d = 784;
      c.epsilons = {12.0};
      c.trials = 1;
      break;
  }
  return c;
}

std::vector<Index> effective_k_list(const ExperimentConfig& config) {
  if (!config.k_list.empty()) return config.k_list;
  if (config.kind == ExperimentKind::MfaFit || config.kind == ExperimentKind::MfaEval) {
    return {1, 2, 5, 10, 25, 50, 100};
  }
  return k_grid(config.d, config.full_grid);
}

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentKind kind) {
  ExperimentConfig c = default_config(kind);
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("d", c.d);
  get("k_list", c.k_list);
  get("ell_list", c.k_list);
  get("n_mc", c.n_mc);
  get("n_train", c.n_train);
  get("epsilons", c.epsilons);
  if (j.contains("epsilon")) c.epsilons = {j.at("epsilon").get<double>()};
  if (j.contains("p")) {
    const auto& pv = j.at("p");
    c.p = pv.is_string() && (pv.get<std::string>() == "inf" || pv.get<std::string>() == "infinity")
              ? std::numeric_limits<double>::infinity()
              : pv.get<double>();
  }
  get("phis", c.phis);
  if (j.contains("phi")) c.phis = {j.at("phi").get<std::string>()};
  get("links", c.links);
  if (j.contains("link")) c.links = {j.at("link").get<std::string>()};
  get("pi", c.pi);
  get("trials", c.trials);
  get("base_seed", c.base_seed);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  get("full_grid", c.full_grid);
  get("attack_steps", c.attack_steps);
  get("erm_max_iterations", c.erm_max_iterations);
  get("erm_gradient_tolerance", c.erm_gradient_tolerance);
  if (j.contains("mnist_dir")) c.mnist_dir = j.at("mnist_dir").get<std::string>();
  get("mfa_components", c.mfa_components);
  get("positive_digit", c.positive_digit);
  get("negative_digit", c.negative_digit);
  get("n_generate", c.n_generate);
  get("train_fraction", c.train_fraction);
  get("em_max_iterations", c.em_max_iterations);
  get("em_tolerance", c.em_tolerance);
  get("variance_floor", c.variance_floor);
  get("pgd_steps", c.pgd_steps);
  get("radius_samples", c.radius_samples);
  get("radius_grid_step", c.radius_grid_step);
  get("radius_max", c.radius_max);
  get("radius_bisection", c.radius_bisection);
  c.validate();
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = std::string(experiment_name(c.kind));
  j["d"] = c.d;
  j["k_list"] = effective_k_list(c);
  j["n_mc"] = c.n_mc;
  j["n_train"] = c.n_train;
  j["epsilons"] = c.epsilons;
  if (std::isinf(c.p)) {
    j["p"] = "inf";
  } else {
    j["p"] = c.p;
  }
  j["phis"] = c.phis;
  j["links"] = c.links;
  j["pi"] = c.pi;
  j["trials"] = c.trials;
  j["base_seed"] = c.base_seed;
  j["out_dir"] = c.out_dir.string();
  j["full_grid"] = c.full_grid;
  j["attack_steps"] = c.attack_steps;
  j["erm_max_iterations"] = c.erm_max_iterations;
  j["erm_gradient_tolerance"] = c.erm_gradient_tolerance;
  j["mnist_dir"] = c.mnist_dir.string();
  j["mfa_components"] = c.mfa_components;
  j["positive_digit"] = c.positive_digit;
  j["negative_digit"] = c.negative_digit;
  j["n_generate"] = c.n_generate;
  j["train_fraction"] = c.train_fraction;
  j["em_max_iterations"] = c.em_max_iterations;
  j["em_tolerance"] = c.em_tolerance;
  j["variance_floor"] = c.variance_floor;
  j["pgd_steps"] = c.pgd_steps;
  j["radius_samples"] = c.radius_samples;
  j["radius_grid_step"] = c.radius_grid_step;
  j["radius_max"] = c.radius_max;
  j["radius_bisection"] = c.radius_bisection;
  return j;
}

std::string format_row(const SweepRow& r) {
  std::string s = r.experiment;
  for (const auto& f : {std::to_string(r.d), std::to_string(r.k), fmt(r.ratio), fmt(r.p), fmt(r.epsilon),
                        std::to_string(r.trial), fmt(r.sr), fmt(r.sr_se), fmt(r.ar_lo), fmt(r.ar_hi), fmt(r.ar_se),
                        fmt(r.br_lo), fmt(r.br_hi), fmt(r.br_se), fmt(r.bound), fmt(r.cond_ratio),
                        std::to_string(r.seed), fmt(r.wall_ms)}) {
    s += ',';
    s += f;
  }
  return s;
}

SweepRow parse_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 19) throw std::invalid_argument("parse_row: expected 19 fields, got " + std::to_string(f.size()));
  SweepRow r;
  r.experiment = f[0];
  r.d = std::stoll(f[1]);
  r.k = std::stoll(f[2]);
  r.ratio = std::stod(f[3]);
  r.p = std::stod(f[4]);
  r.epsilon = std::stod(f[5]);
  r.trial = std::stoi(f[6]);
  r.sr = std::stod(f[7]);
  r.sr_se = std::stod(f[8]);
  r.ar_lo = std::stod(f[9]);
  r.ar_hi = std::stod(f[10]);
  r.ar_se = std::stod(f[11]);
  r.br_lo = std::stod(f[12]);
  r.br_hi = std::stod(f[13]);
  r.br_se = std::stod(f[14]);
  r.bound = std::stod(f[15]);
  r.cond_ratio = std::stod(f[16]);
  r.seed = std::stoull(f[17]);
  r.wall_ms = std::stod(f[18]);
  return r;
}

std::string row_key(const SweepRow& r) {
  return r.experiment + ',' + std::to_string(r.d) + ',' + std::to_string(r.k) + ',' + fmt(r.p) + ',' +
         fmt(r.epsilon) + ',' + std::to_string(r.trial);
}

std::vector<SweepRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_row(line));
  }
  return rows;
}

CsvSink::CsvSink(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    for (const auto& r : read_csv(path_)) keys_.insert(row_key(r));
  } else {
    std::ofstream out(path_);
    out << kCsvHeader << '\n';
    if (!out) throw std::runtime_error("cannot write " + path_.string());
  }
}

void CsvSink::append(const SweepRow& row) {
  std::ofstream out(path_, std::ios::app);
  out << format_row(row) << '\n';
  if (!out) throw std::runtime_error("cannot append to " + path_.string());
  keys_.insert(row_key(row));
}

std::filesystem::path csv_path(const ExperimentConfig& config) {
  return config.out_dir / (std::string(experiment_name(config.kind)) + ".csv");
}

RunSummary run_gmm_sweep(const ExperimentConfig& config) {
  config.validate();
  CsvSink sink(csv_path(config));
  RunSummary summary{sink.path()};
  const auto ks = effective_k_list(config);
  std::uint64_t cell = 0;
  for (const auto& phi_name : config.phis) {
    const FeatureMap phi = FeatureMap::parse(phi_name);
    const std::string id = "gmm-sweep/" + phi_name;
    for (Index k : ks) {
      ++cell;
      for (int t = 0; t < config.trials; ++t) {
        const auto plan = plan_cell(sink, id, config.d, k, config.p, config.epsilons, t);
        if (plan.all_done) {
          summary.rows_skipped += plan.keys.size();
          continue;
        }
        const std::uint64_t seed = mix64(config.base_seed, cell, static_cast<std::uint64_t>(t));
        try {
          Rng rng(seed);
          const auto model = LatentGMM::random(config.d, k, config.pi, phi, rng);
          const auto bayes = bayes_gmm(model);
          for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
            if (sink.has(plan.keys[e])) {
              ++summary.rows_skipped;
              continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const AdversaryBudget budget{config.p, config.epsilons[e]};
            SweepRow row = base_row(id, config.d, k, config.p, budget.epsilon, t, seed);
            if (phi.kind() == FeatureMapKind::Identity) {
              fill_risks(row, linear_gmm_risks_closed(model, bayes, budget));
            } else {
              fill_risks(row, monte_carlo_risks([&model](Rng& r) { return draw_gmm(model, r); },
                                                pgd_sandwich_oracle(bayes, budget, sandwich_attack(config)),
                                                config.n_mc, mix64(seed, 1, e), RiskMethod::MonteCarloSandwich));
            }
            row.cond_ratio = condition_ratio(model.w, budget);
            try {
              row.bound = gmm_br_bound(model, budget).bound;
            } catch (const UnsupportedError&) {
              row.bound = kNaN;
            }
            row.wall_ms = elapsed_ms(t0);
            sink.append(row);
            ++summary.rows_written;
          }
        } catch (const std::exception& ex) {
          report_failure(id + " k=" + std::to_string(k) + " trial=" + std::to_string(t), ex);
          ++summary.cells_failed;
        }
      }
    }
  }
  return summary;
}

RunSummary run_glm_sweep(const ExperimentConfig& config) {
  config.validate();
  CsvSink sink(csv_path(config));
  RunSummary summary{sink.path()};
  const auto ks = effective_k_list(config);
  std::uint64_t cell = 0;
  for (const auto& link_name_str : config.links) {
    const Link link = parse_link(link_name_str);
    for (const auto& phi_name : config.phis) {
      const FeatureMap phi = FeatureMap::parse(phi_name);
      const std::string id = "glm-sweep/" + link_name_str + "/" + phi_name;
      for (Index k : ks) {
        ++cell;
        for (int t = 0; t < config.trials; ++t) {
          const auto plan = plan_cell(sink, id, config.d, k, config.p, config.epsilons, t);
          if (plan.all_done) {
            summary.rows_skipped += plan.keys.size();
            continue;
          }
          const std::uint64_t seed = mix64(config.base_seed, cell, static_cast<std::uint64_t>(t));
          try {
            Rng rng(seed);
            const auto model = LatentGLM::random(config.d, k, link, phi, rng);
            const auto bayes = bayes_glm(model);
            for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
              if (sink.has(plan.keys[e])) {
                ++summary.rows_skipped;
                continue;
              }
              const auto t0 = std::chrono::steady_clock::now();
              const AdversaryBudget budget{config.p, config.epsilons[e]};
              SweepRow row = base_row(id, config.d, k, config.p, budget.epsilon, t, seed);
              if (phi.kind() == FeatureMapKind::Identity) {
                fill_risks(row, latent_monte_carlo_glm(model, bayes, budget, config.n_mc, mix64(seed, 1, e)));
              } else {
                fill_risks(row, monte_carlo_risks([&model](Rng& r) { return draw_glm(model, r); },
                                                  pgd_sandwich_oracle(bayes, budget, sandwich_attack(config)),
                                                  config.n_mc, mix64(seed, 1, e), RiskMethod::MonteCarloSandwich));
              }
              row.cond_ratio = condition_ratio(model.w, budget);
              try {
                const auto b = glm_br_bound(model, budget);
                row.bound = std::min(b.lipschitz_bound, b.two_phi_bound);
              } catch (const UnsupportedError&) {
                row.bound = kNaN;
              }
              row.wall_ms = elapsed_ms(t0);
              sink.append(row);
              ++summary.rows_written;
            }
          } catch (const std::exception& ex) {
            report_failure(id + " k=" + std::to_string(k) + " trial=" + std::to_string(t), ex);
            ++summary.cells_failed;
          }
        }
      }
    }
  }
  return summary;
}

RunSummary run_erm_sweep(const ExperimentConfig& config) {
  config.validate();
  CsvSink sink(csv_path(config));
  RunSummary summary{sink.path()};
  const auto fits_path = config.out_dir / "erm-sweep_fits.csv";
  if (!std::filesystem::exists(fits_path)) {
    std::ofstream(fits_path) << "experiment,d,k,epsilon,trial,kernel_ratio,converged,iterations,objective\n";
  }
  const auto ks = effective_k_list(config);
  std::uint64_t cell = 0;
  nlohmann::json max_kernel = nlohmann::json::object();
  for (const auto& phi_name : config.phis) {
    const FeatureMap phi = FeatureMap::parse(phi_name);
    const std::string id = "erm-sweep/" + phi_name;
    double worst_kernel = 0.0;
    for (Index k : ks) {
      ++cell;
      for (int t = 0; t < config.trials; ++t) {
        const auto plan = plan_cell(sink, id, config.d, k, config.p, config.epsilons, t);
        if (plan.all_done) {
          summary.rows_skipped += plan.keys.size();
          continue;
        }
        const std::uint64_t seed = mix64(config.base_seed, cell, static_cast<std::uint64_t>(t));
        try {
          Rng rng(seed);
          const auto model = LatentGMM::random(config.d, k, config.pi, phi, rng);
          const auto data = sample_gmm(model, config.n_train, rng);
          for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
            if (sink.has(plan.keys[e])) {
              ++summary.rows_skipped;
              continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const AdversaryBudget budget{config.p, config.epsilons[e]};
            RobustErmConfig fit_cfg;
            fit_cfg.epsilon = budget.epsilon;
            fit_cfg.p = config.p;
            fit_cfg.max_iterations = config.erm_max_iterations;
            fit_cfg.gradient_tolerance = config.erm_gradient_tolerance;
            Rng fit_rng(mix64(seed, 2, e));
            const auto fit = robust_erm_fit(data, fit_cfg, fit_rng);
            const LinearClassifier clf{fit.theta};
            SweepRow row = base_row(id, config.d, k, config.p, budget.epsilon, t, seed);
            if (phi.kind() == FeatureMapKind::Identity) {
              fill_risks(row, linear_gmm_risks_closed(model, clf, budget));
              row.bound = linear_br_bound(fit.theta, model.w, budget);
            } else {
              // h_theta is linear in x, so the dual-norm oracle is exact for every map
              fill_risks(row, monte_carlo_risks([&model](Rng& r) { return draw_gmm(model, r); },
                                                exact_linear_oracle(clf, budget), config.n_mc, mix64(seed, 1, e)));
              row.bound = kNaN;
            }
            row.cond_ratio = condition_ratio(model.w, budget);
            row.wall_ms = elapsed_ms(t0);
            const double kr = kernel_component_ratio(fit.theta, model.w);
            worst_kernel = std::max(worst_kernel, kr);
            std::ofstream(fits_path, std::ios::app)
                << id << ',' << config.d << ',' << k << ',' << fmt(budget.epsilon) << ',' << t << ',' << fmt(kr)
                << ',' << (fit.converged ? 1 : 0) << ',' << fit.iterations_used << ',' << fmt(fit.final_objective)
                << '\n';
            sink.append(row);
            ++summary.rows_written;
          }
        } catch (const std::exception& ex) {
          report_failure(id + " k=" + std::to_string(k) + " trial=" + std::to_string(t), ex);
          ++summary.cells_failed;
        }
      }
    }
    max_kernel[phi_name] = worst_kernel;
  }
  summary.details["max_kernel_component_ratio"] = max_kernel;
  return summary;
}

RunSummary run_prop2_check(const ExperimentConfig& config) {
  config.validate();
  CsvSink sink(csv_path(config));
  RunSummary summary{sink.path()};
  const auto ks = effective_k_list(config);
  const std::string id = "prop2-check";
  nlohmann::json closed = nlohmann::json::array();
  std::uint64_t cell = 0;
  for (Index k : ks) {
    ++cell;
    for (int t = 0; t < config.trials; ++t) {
      const auto plan = plan_cell(sink, id, config.d, k, config.p, config.epsilons, t);
      if (plan.all_done) {
        summary.rows_skipped += plan.keys.size();
        continue;
      }
      const std::uint64_t seed = mix64(config.base_seed, cell, static_cast<std::uint64_t>(t));
      try {
        for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
          if (sink.has(plan.keys[e])) {
            ++summary.rows_skipped;
            continue;
          }
          const auto t0 = std::chrono::steady_clock::now();
          const AdversaryBudget budget{config.p, config.epsilons[e]};
          // Each draw uses a fresh (mu, w_1), so the estimate targets the
          // mu-averaged risk. Only x_1 = w_1^T z enters sign(e_1^T x), and
          // ||e_1||_q = 1 for every q.
          const double kd = static_cast<double>(k);
          Sampler sampler = [k, kd](Rng& r) {
            const Vector mu = r.normal_vector(k) / std::sqrt(kd);
            Vector w1 = r.normal_vector(k);
            w1 /= w1.norm();
            LabeledSample s;
            s.y = r.bernoulli(0.5) ? 1 : -1;
            const Vector z = static_cast<double>(s.y) * mu + r.normal_vector(k);
            s.x = Vector::Constant(1, w1.dot(z));
            return s;
          };
          const LinearClassifier e1{Vector::Ones(1)};
          SweepRow row = base_row(id, config.d, k, config.p, budget.epsilon, t, seed);
          fill_risks(row, monte_carlo_risks(sampler, exact_linear_oracle(e1, AdversaryBudget{2.0, budget.epsilon}),
                                            config.n_mc, mix64(seed, 1, e)));
          row.bound = prop2_constant(budget);
          row.cond_ratio = kNaN;
          row.wall_ms = elapsed_ms(t0);
          sink.append(row);
          ++summary.rows_written;
        }
      } catch (const std::exception& ex) {
        report_failure(id + " k=" + std::to_string(k) + " trial=" + std::to_string(t), ex);
        ++summary.cells_failed;
      }
    }
    for (double eps : config.epsilons) {
      closed.push_back({{"k", k}, {"epsilon", eps}, {"closed_form", e1_classifier_br_closed({config.p, eps}, k)},
                        {"constant", prop2_constant({config.p, eps})}});
    }
  }
  summary.details["closed_form"] = closed;
  return summary;
}

std::filesystem::path resolve_mnist_dir(const ExperimentConfig& config) {
  if (!config.mnist_dir.empty()) return config.mnist_dir;
  if (const char* env = std::getenv("LATENTROB_MNIST_DIR"); env && *env) return env;
  return "data/mnist5k";
}

std::filesystem::path mfa_model_path(const ExperimentConfig& config, int digit, Index components, Index ell) {
  return config.out_dir / ("mfa_K" + std::to_string(components) + "_l" + std::to_string(ell) + "_digit" +
                           std::to_string(digit) + ".mfa");
}

namespace {

ImageDataset load_mnist(const ExperimentConfig& config) {
  const auto dir = resolve_mnist_dir(config);
  auto pick = [&](const std::string& stem) {
    for (const auto& name : {stem, stem + ".gz"}) {
      if (std::filesystem::exists(dir / name)) return dir / name;
    }
    throw std::runtime_error("MNIST file " + stem + " not found in " + dir.string());
  };
  return load_idx_dataset(pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"));
}

EmConfig em_config(const ExperimentConfig& config) {
  EmConfig em;
  em.max_iterations = config.em_max_iterations;
  em.tolerance = config.em_tolerance;
  em.variance_floor = config.variance_floor;
  return em;
}

struct FitOutcome {
  MfaModel model;
  nlohmann::json log;
};

FitOutcome fit_digit(const ExperimentConfig& config, const ImageDataset& mnist, int digit, Index components,
                     Index ell, std::uint64_t seed) {
  const auto subset = filter_by_label(mnist, {digit});
  if (subset.size() < components) {
    throw std::runtime_error("digit " + std::to_string(digit) + " has too few images");
  }
  Rng rng(seed);
  EmTrace trace;
  auto model = mfa_fit_em(subset.images, components, ell, em_config(config), rng, &trace);
  for (int it : trace.reseeded_at) {
    std::cerr << "mfa digit " << digit << " K=" << components << " ell=" << ell << ": component re-seeded at iteration "
              << it << "\n";
  }
  nlohmann::json log = {{"digit", digit},
                        {"K", components},
                        {"ell", ell},
                        {"n", subset.size()},
                        {"iterations", trace.iterations},
                        {"converged", trace.converged},
                        {"final_average_loglik", trace.average_loglik.empty() ? kNaN : trace.average_loglik.back()},
                        {"reseeded_at", trace.reseeded_at},
                        {"seed", seed}};
  return {std::move(model), std::move(log)};
}

void clamp_unit(Matrix& m) { m = m.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

RunSummary run_mfa_fit(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  RunSummary summary;
  const auto mnist = load_mnist(config);
  const auto ells = effective_k_list(config);
  nlohmann::json fits = nlohmann::json::array();
  std::uint64_t cell = 0;
  for (Index kk : config.mfa_components) {
    for (Index ell : ells) {
      ++cell;
      for (int digit : {config.negative_digit, config.positive_digit}) {
        const auto path = mfa_model_path(config, digit, kk, ell);
        if (std::filesystem::exists(path)) {
          ++summary.rows_skipped;
          continue;
        }
        try {
          auto fit = fit_digit(config, mnist, digit, kk, ell,
                               mix64(config.base_seed, cell, static_cast<std::uint64_t>(digit)));
          save_mfa(fit.model, path);
          Rng rng(mix64(config.base_seed, cell, 100 + static_cast<std::uint64_t>(digit)));
          Matrix samples = mfa_sample(fit.model, 16, rng);
          clamp_unit(samples);
          auto grid = path;
          grid.replace_extension(".pgm");
          write_image_grid(samples, mnist.width, mnist.height, 4, grid);
          fit.log["model_file"] = path.filename().string();
          fits.push_back(fit.log);
          ++summary.rows_written;
        } catch (const std::exception& ex) {
          report_failure("mfa-fit digit=" + std::to_string(digit) + " K=" + std::to_string(kk) +
                             " ell=" + std::to_string(ell),
                         ex);
          ++summary.cells_failed;
        }
      }
    }
  }
  summary.details["fits"] = fits;
  return summary;
}

RunSummary run_mfa_eval(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  CsvSink sink(csv_path(config));
  RunSummary summary{sink.path()};
  const auto radius_path = config.out_dir / "mfa-eval_radius.csv";
  std::set<std::string> radius_done;
  if (std::filesystem::exists(radius_path)) {
    std::ifstream in(radius_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_csv(line);
      if (f.size() >= 3) radius_done.insert(f[0] + ',' + f[1] + ',' + f[2]);
    }
  } else {
    std::ofstream(radius_path) << "K,ell,trial,sample,radius,found\n";
  }

  std::optional<ImageDataset> mnist;
  const auto ells = effective_k_list(config);
  nlohmann::json medians = nlohmann::json::array();
  nlohmann::json fits = nlohmann::json::array();
  std::uint64_t cell = 0;
  for (Index kk : config.mfa_components) {
    for (Index ell : ells) {
      ++cell;
      const std::string tag = "mfa-eval/K" + std::to_string(kk);
      try {
        auto load_or_fit = [&](int digit) {
          const auto path = mfa_model_path(config, digit, kk, ell);
          if (std::filesystem::exists(path)) return load_mfa(path);
          if (!mnist) mnist = load_mnist(config);
          auto fit = fit_digit(config, *mnist, digit, kk, ell,
                               mix64(config.base_seed, cell, static_cast<std::uint64_t>(digit)));
          save_mfa(fit.model, path);
          fit.log["model_file"] = path.filename().string();
          fits.push_back(fit.log);
          return fit.model;
        };
        const MfaBayesClassifier clf{load_or_fit(config.positive_digit), load_or_fit(config.negative_digit), 0.0};
        clf.positive.validate(0.0);
        const MfaBayesScorer scorer(clf);
        const Index d = clf.positive.dim();
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
        const LossFunction loss = margin_loss([&scorer](const Vector& x) { return scorer.score(x); },
                                              [&scorer](const Vector& x) { return scorer.score_gradient(x); });

        for (int t = 0; t < config.trials; ++t) {
          const std::uint64_t seed = mix64(config.base_seed, cell, 1000 + static_cast<std::uint64_t>(t));
          bool need_rows = false;
          for (double eps : config.epsilons) {
            for (const char* kind : {"fgm", "pgd"}) {
              if (!sink.has(row_key(base_row(tag + "/" + kind, d, ell, 2.0, eps, t, 0)))) need_rows = true;
            }
          }
          const std::string radius_key = std::to_string(kk) + ',' + std::to_string(ell) + ',' + std::to_string(t);
          const bool need_radius = radius_done.count(radius_key) == 0;
          if (!need_rows && !need_radius) {
            summary.rows_skipped += 2 * config.epsilons.size();
            continue;
          }

          // generate labeled images, keep the test split
          Rng rng(seed);
          ImageDataset generated;
          generated.width = generated.height = side;
          generated.images.resize(static_cast<Index>(config.n_generate), d);
          for (std::size_t i = 0; i < config.n_generate; ++i) {
            const int y = rng.bernoulli(0.5) ? 1 : -1;
            const Matrix x = mfa_sample(y > 0 ? clf.positive : clf.negative, 1, rng);
            generated.images.row(static_cast<Index>(i)) = x.row(0);
            generated.labels.push_back(y);
          }
          clamp_unit(generated.images);
          const auto parts = split(generated, config.train_fraction, rng);
          const ImageDataset& test = parts.second;
          const Index n_test = test.size();
          std::vector<int> clean(static_cast<std::size_t>(n_test));
          parallel_for(static_cast<std::size_t>(n_test), [&](std::size_t i) {
            clean[i] = scorer.classify(test.images.row(static_cast<Index>(i)).transpose());
          });

          for (double eps : config.epsilons) {
            for (AttackKind ak : {AttackKind::FGM, AttackKind::PGD}) {
              const std::string id = tag + (ak == AttackKind::FGM ? "/fgm" : "/pgd");
              SweepRow row = base_row(id, d, ell, 2.0, eps, t, seed);
              if (sink.has(row_key(row))) {
                ++summary.rows_skipped;
                continue;
              }
              const auto t0 = std::chrono::steady_clock::now();
              AttackConfig ac;
              ac.kind = ak;
              ac.epsilon = eps;
              ac.steps = config.pgd_steps;
              ac.clip = std::make_pair(0.0, 1.0);
              std::vector<char> robust(static_cast<std::size_t>(n_test), 0);
              parallel_for(static_cast<std::size_t>(n_test), [&](std::size_t i) {
                const int y = test.labels[i];
                if (clean[i] != y) return;
                const Vector x = test.images.row(static_cast<Index>(i)).transpose();
                const auto adv = run_attack(x, y, loss, ac);
                robust[i] = scorer.classify(adv.x) == y ? 1 : 0;
              });
              std::size_t wrong = 0, adv_wrong = 0;
              for (Index i = 0; i < n_test; ++i) {
                const bool ok = clean[static_cast<std::size_t>(i)] == test.labels[static_cast<std::size_t>(i)];
                if (!ok) ++wrong;
                if (!ok || !robust[static_cast<std::size_t>(i)]) ++adv_wrong;
              }
              const double n = static_cast<double>(n_test);
              auto se = [n](double q) { return std::sqrt(std::max(q * (1.0 - q), 0.0) / n); };
              row.sr = static_cast<double>(wrong) / n;
              row.ar_lo = row.ar_hi = static_cast<double>(adv_wrong) / n;
              row.br_lo = row.br_hi = static_cast<double>(adv_wrong - wrong) / n;
              row.sr_se = se(row.sr);
              row.ar_se = se(row.ar_hi);
              row.br_se = se(row.br_hi);
              row.bound = kNaN;
              row.cond_ratio = kNaN;
              row.wall_ms = elapsed_ms(t0);
              sink.append(row);
              ++summary.rows_written;
            }
          }

          if (need_radius) {
            std::vector<Index> picks;
            for (Index i = 0; i < n_test && picks.size() < config.radius_samples; ++i) {
              if (clean[static_cast<std::size_t>(i)] == test.labels[static_cast<std::size_t>(i)]) picks.push_back(i);
            }
            RadiusSearchConfig rc;
            rc.attack.kind = AttackKind::PGD;
            rc.attack.steps = config.pgd_steps;
            rc.attack.clip = std::make_pair(0.0, 1.0);
            rc.grid_step = config.radius_grid_step;
            rc.epsilon_max = config.radius_max;
            rc.bisection_steps = config.radius_bisection;
            std::vector<RadiusResult> radii(picks.size());
            parallel_for(picks.size(), [&](std::size_t j) {
              const Index i = picks[j];
              const Vector x = test.images.row(i).transpose();
              radii[j] = minimal_adversarial_radius(x, test.labels[static_cast<std::size_t>(i)], loss,
                                                    [&scorer](const Vector& v) { return scorer.classify(v); }, rc);
            });
            std::vector<double> values;
            std::ofstream out(radius_path, std::ios::app);
            for (std::size_t j = 0; j < radii.size(); ++j) {
              out << radius_key << ',' << picks[j] << ',' << fmt(radii[j].radius) << ',' << (radii[j].found ? 1 : 0)
                  << '\n';
              values.push_back(radii[j].radius);
            }
            double median = kNaN;
            if (!values.empty()) {
              std::sort(values.begin(), values.end());
              const std::size_t m = values.size() / 2;
              median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
            }
            medians.push_back({{"K", kk}, {"ell", ell}, {"trial", t}, {"median_radius", median},
                               {"samples", values.size()}});

            // clean test images next to their PGD counterparts at the first epsilon
            const Index show = std::min<Index>(8, n_test);
            Matrix grid(2 * show, d);
            AttackConfig ac;
            ac.kind = AttackKind::PGD;
            ac.epsilon = config.epsilons.front();
            ac.steps = config.pgd_steps;
            ac.clip = std::make_pair(0.0, 1.0);
            for (Index i = 0; i < show; ++i) {
              const Vector x = test.images.row(i).transpose();
              grid.row(i) = x.transpose();
              grid.row(show + i) = run_attack(x, test.labels[static_cast<std::size_t>(i)], loss, ac).x.transpose();
            }
            if (show > 0) {
              write_image_grid(grid, side, side, static_cast<int>(show),
                               config.out_dir / ("mfa_K" + std::to_string(kk) + "_l" + std::to_string(ell) + "_trial" +
                                                 std::to_string(t) + "_adv.pgm"));
            }
          }
        }
      } catch (const std::exception& ex) {
        report_failure(tag + " ell=" + std::to_string(ell), ex);
        ++summary.cells_failed;
      }
    }
  }
  summary.details["median_radius"] = medians;
  if (!fits.empty()) summary.details["fits"] = fits;
  return summary;
}

RunSummary run_experiment(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary summary;
  switch (config.kind) {
    case ExperimentKind::GmmSweep: summary = run_gmm_sweep(config); break;
    case ExperimentKind::GlmSweep: summary = run_glm_sweep(config); break;
    case ExperimentKind::ErmSweep: summary = run_erm_sweep(config); break;
    case ExperimentKind::Prop2Check: summary = run_prop2_check(config); break;
    case ExperimentKind::MfaFit: summary = run_mfa_fit(config); break;
    case ExperimentKind::MfaEval: summary = run_mfa_eval(config); break;
  }
  nlohmann::json meta;
  meta["experiment"] = std::string(experiment_name(config.kind));
  meta["config"] = to_json(config);
  meta["seed_rule"] = "cell seed = mix64(base_seed, cell index, trial index); cells enumerate the configured "
                      "variants and k values in order, starting at 1";
  meta["versions"] = {{"latentrob", "0.1.0"},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"compiler", __VERSION__}};
  meta["threads"] = worker_threads().load();
  meta["rows_written"] = summary.rows_written;
  meta["rows_skipped"] = summary.rows_skipped;
  meta["cells_failed"] = summary.cells_failed;
  meta["wall_ms"] = elapsed_ms(t0);
  meta["details"] = summary.details;
  std::filesystem::create_directories(config.out_dir);
  std::ofstream(config.out_dir / (std::string(experiment_name(config.kind)) + ".meta.json")) << meta.dump(2) << '\n';
  return summary;
}

}  // namespace latentrob
