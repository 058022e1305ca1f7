#include "latentrob/experiments.hpp"
#include "latentrob/parallel.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>

namespace lr = latentrob;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  unsigned threads = 1;
  bool full_grid = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "base seed (overrides the config)");
  sub->add_option("--out", f.out_dir, "output directory (overrides the config)");
  sub->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--full-grid", f.full_grid, "use k = 1..d instead of the geometric grid");
}

lr::ExperimentConfig build_config(lr::ExperimentKind kind, const CommonFlags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    j = nlohmann::json::parse(in);
  }
  auto cfg = lr::config_from_json(j, kind);
  if (f.seed) cfg.base_seed = *f.seed;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (f.full_grid) cfg.full_grid = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-manifold adversarial robustness experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::vector<std::pair<CLI::App*, lr::ExperimentKind>> runs;
  for (auto kind : {lr::ExperimentKind::GmmSweep, lr::ExperimentKind::GlmSweep, lr::ExperimentKind::ErmSweep,
                    lr::ExperimentKind::Prop2Check, lr::ExperimentKind::MfaFit, lr::ExperimentKind::MfaEval}) {
    auto* sub = app.add_subcommand(std::string(lr::experiment_name(kind)), "run " + std::string(lr::experiment_name(kind)));
    add_common(sub, flags);
    runs.emplace_back(sub, kind);
  }

  std::string plot_csv, plot_svg, metric = "br";
  auto* plot = app.add_subcommand("plot", "render a sweep CSV as SVG (mean +- 1 sd across trials)");
  plot->add_option("csv", plot_csv, "sweep CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--svg", plot_svg, "output file (default: CSV path with .svg)");
  plot->add_option("--metric", metric, "sr, ar or br")->check(CLI::IsMember({"sr", "ar", "br"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot->parsed()) {
      std::filesystem::path svg = plot_svg.empty() ? std::filesystem::path(plot_csv).replace_extension(".svg")
                                                   : std::filesystem::path(plot_svg);
      lr::write_sweep_plot(lr::read_csv(plot_csv), svg, metric);
      std::cout << "wrote " << svg.string() << "\n";
      return 0;
    }
    for (const auto& [sub, kind] : runs) {
      if (!sub->parsed()) continue;
      lr::worker_threads() = flags.threads;
      const auto cfg = build_config(kind, flags);
      const auto summary = lr::run_experiment(cfg);
      std::cout << lr::experiment_name(kind) << ": " << summary.rows_written << " written, " << summary.rows_skipped
                << " skipped, " << summary.cells_failed << " failed";
      if (!summary.csv.empty()) std::cout << " -> " << summary.csv.string();
      std::cout << "\n";
      if (!summary.details.empty()) std::cout << summary.details.dump(2) << "\n";
      return summary.cells_failed == 0 ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
