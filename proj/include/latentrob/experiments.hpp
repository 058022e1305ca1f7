#pragma once

#include "latentrob/numerics.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace latentrob {

enum class ExperimentKind { GmmSweep, GlmSweep, ErmSweep, Prop2Check, MfaFit, MfaEval };
std::string_view experiment_name(ExperimentKind kind);
ExperimentKind parse_experiment(std::string_view name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::GmmSweep;
  Index d = 300;
  /// Latent dimensions k (sweeps) or factor counts ell (MFA). Empty selects
  /// the default grid for the experiment.
  std::vector<Index> k_list;
  std::size_t n_mc = 100000;
  std::size_t n_train = 300;
  std::vector<double> epsilons{1.0};
  double p = 2.0;
  std::vector<std::string> phis{"identity"};
  std::vector<std::string> links{"logistic"};
  double pi = 0.5;
  int trials = 20;
  std::uint64_t base_seed = 1;
  std::filesystem::path out_dir = "out";
  bool full_grid = false;

  // sandwich oracle attack for non-identity maps
  int attack_steps = 40;

  // robust ERM
  int erm_max_iterations = 20000;
  double erm_gradient_tolerance = 1e-8;

  // MFA pipeline
  std::filesystem::path mnist_dir;  // empty: $LATENTROB_MNIST_DIR, then data/mnist5k
  std::vector<Index> mfa_components{1};
  int positive_digit = 6;
  int negative_digit = 0;
  std::size_t n_generate = 5000;
  double train_fraction = 0.8;
  int em_max_iterations = 100;
  double em_tolerance = 1e-6;
  double variance_floor = 1e-6;
  int pgd_steps = 40;
  std::size_t radius_samples = 50;
  double radius_grid_step = 0.5;
  double radius_max = 40.0;
  int radius_bisection = 6;

  void validate() const;
};

/// Defaults per experiment (d, grids, epsilons, trials).
ExperimentConfig default_config(ExperimentKind kind);
/// Starts from default_config(kind) and overrides the fields present in `j`.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentKind kind);
nlohmann::json to_json(const ExperimentConfig& config);

/// Geometric k-grid on [1, d], always containing 1 and d; the full grid is 1..d.
std::vector<Index> k_grid(Index d, bool full);
/// The k (or ell) list the experiment actually runs.
std::vector<Index> effective_k_list(const ExperimentConfig& config);

struct SweepRow {
  std::string experiment;
  Index d = 0;
  Index k = 0;
  double ratio = 0.0;
  double p = 2.0;
  double epsilon = 0.0;
  int trial = 0;
  double sr = 0.0, sr_se = 0.0;
  double ar_lo = 0.0, ar_hi = 0.0, ar_se = 0.0;
  double br_lo = 0.0, br_hi = 0.0, br_se = 0.0;
  double bound = 0.0;
  double cond_ratio = 0.0;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
};

inline constexpr std::string_view kCsvHeader =
    "experiment,d,k,ratio,p,epsilon,trial,sr,sr_se,ar_lo,ar_hi,ar_se,br_lo,br_hi,br_se,bound,cond_ratio,seed,wall_ms";

std::string format_row(const SweepRow& row);
SweepRow parse_row(const std::string& line);
/// Resume key: experiment, d, k, p, epsilon, trial as formatted in the CSV.
std::string row_key(const SweepRow& row);
std::vector<SweepRow> read_csv(const std::filesystem::path& path);

/// Append-only CSV writer that knows which rows already exist.
class CsvSink {
 public:
  explicit CsvSink(std::filesystem::path path);
  bool has(const std::string& key) const { return keys_.count(key) > 0; }
  void append(const SweepRow& row);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::set<std::string> keys_;
};

struct RunSummary {
  std::filesystem::path csv;
  std::size_t rows_written = 0;
  std::size_t rows_skipped = 0;
  std::size_t cells_failed = 0;
  nlohmann::json details = nlohmann::json::object();
};

RunSummary run_gmm_sweep(const ExperimentConfig& config);
RunSummary run_glm_sweep(const ExperimentConfig& config);
RunSummary run_erm_sweep(const ExperimentConfig& config);
RunSummary run_prop2_check(const ExperimentConfig& config);
/// Fits one MFA per (digit, K, ell), writes model files and sample grids.
RunSummary run_mfa_fit(const ExperimentConfig& config);
/// Generates labeled images from the fitted pair, attacks the test split with
/// FGM and PGD, and records risks plus minimal-radius medians. Missing model
/// files are fitted first.
RunSummary run_mfa_eval(const ExperimentConfig& config);
/// Dispatches on config.kind and writes the metadata sidecar.
RunSummary run_experiment(const ExperimentConfig& config);

std::filesystem::path csv_path(const ExperimentConfig& config);
std::filesystem::path resolve_mnist_dir(const ExperimentConfig& config);
std::filesystem::path mfa_model_path(const ExperimentConfig& config, int digit, Index components, Index ell);

/// SVG with mean +- 1 std bands across trials, one panel series per
/// (experiment, epsilon), x = d/k on a log axis. `metric` is sr, ar or br.
void write_sweep_plot(const std::vector<SweepRow>& rows, const std::filesystem::path& svg,
                      std::string_view metric = "br");

}  // namespace latentrob
