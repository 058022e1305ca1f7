#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "latentrob/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace latentrob;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("latentrob_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("experiment names round-trip") {
  for (auto k : {ExperimentKind::GmmSweep, ExperimentKind::GlmSweep, ExperimentKind::ErmSweep,
                 ExperimentKind::Prop2Check, ExperimentKind::MfaFit, ExperimentKind::MfaEval})
    CHECK(parse_experiment(experiment_name(k)) == k);
  CHECK_THROWS(parse_experiment("nope"));
}

TEST_CASE("config parsing, defaults and validation") {
  const auto c = config_from_json(nlohmann::json::parse(R"({"d": 50, "k_list": [1, 5], "epsilon": 0.5, "p": "inf"})"),
                                  ExperimentKind::GmmSweep);
  CHECK(c.d == 50);
  CHECK(c.k_list == std::vector<Index>{1, 5});
  CHECK(c.epsilons == std::vector<double>{0.5});
  CHECK(std::isinf(c.p));
  CHECK(c.trials == 20);
  const auto j = to_json(c);
  CHECK(j.at("p") == "inf");
  CHECK(config_from_json(j, ExperimentKind::GmmSweep).k_list == c.k_list);
  CHECK_THROWS(config_from_json(nlohmann::json::parse(R"({"p": 1})"), ExperimentKind::GmmSweep));
  CHECK_THROWS(config_from_json(nlohmann::json::parse(R"({"phi": "relu"})"), ExperimentKind::GmmSweep));
  CHECK_THROWS(config_from_json(nlohmann::json::parse(R"({"trials": 0})"), ExperimentKind::GmmSweep));
  CHECK_THROWS(config_from_json(nlohmann::json::parse("[1]"), ExperimentKind::GmmSweep));
  CHECK(default_config(ExperimentKind::MfaEval).d == 784);
}

TEST_CASE("k grids") {
  const auto g = k_grid(300, false);
  CHECK(g.front() == 1);
  CHECK(g.back() == 300);
  CHECK(std::is_sorted(g.begin(), g.end()));
  CHECK(std::adjacent_find(g.begin(), g.end()) == g.end());
  CHECK(k_grid(10, true).size() == 10);
  CHECK(k_grid(1, false) == std::vector<Index>{1});
}

TEST_CASE("CSV rows format and parse losslessly") {
  SweepRow r;
  r.experiment = "gmm-sweep";
  r.d = 300;
  r.k = 7;
  r.ratio = 300.0 / 7.0;
  r.p = std::numeric_limits<double>::infinity();
  r.epsilon = 0.1;
  r.trial = 3;
  r.sr = 0.123456789012;
  r.bound = std::numeric_limits<double>::quiet_NaN();
  r.seed = 18446744073709551615ull;
  const auto back = parse_row(format_row(r));
  CHECK(back.experiment == r.experiment);
  CHECK(back.k == 7);
  CHECK(std::isinf(back.p));
  CHECK(std::isnan(back.bound));
  CHECK(back.sr == r.sr);
  CHECK(back.seed == r.seed);
  CHECK(row_key(back) == row_key(r));
  CHECK_THROWS(parse_row("gmm-sweep,1,2"));
}

TEST_CASE("gmm sweep writes rows, resumes and plots") {
  const auto dir = fresh_dir("gmm");
  auto c = default_config(ExperimentKind::GmmSweep);
  c.d = 12;
  c.k_list = {1, 4, 12};
  c.trials = 2;
  c.epsilons = {0.5, 1.0};
  c.out_dir = dir;
  const auto s = run_experiment(c);
  CHECK(s.rows_written == 12);
  CHECK(s.cells_failed == 0);
  CHECK(count_lines(s.csv) == 13);
  CHECK(fs::exists(dir / "gmm-sweep.meta.json"));
  const auto again = run_experiment(c);
  CHECK(again.rows_written == 0);
  CHECK(again.rows_skipped == 12);
  CHECK(count_lines(s.csv) == 13);

  const auto rows = read_csv(s.csv);
  REQUIRE(rows.size() == 12);
  for (const auto& r : rows) {
    CHECK(r.ar_lo == r.ar_hi);
    CHECK(r.br_hi <= r.bound + 1e-12);
    CHECK(r.ratio == doctest::Approx(12.0 / r.k));
  }
  write_sweep_plot(rows, dir / "plot.svg");
  std::ifstream svg(dir / "plot.svg");
  std::string head;
  std::getline(svg, head);
  CHECK(head.find("<svg") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("same seed gives identical rows") {
  const auto d1 = fresh_dir("seed1"), d2 = fresh_dir("seed2");
  auto c = default_config(ExperimentKind::GlmSweep);
  c.d = 10;
  c.k_list = {2, 10};
  c.trials = 1;
  c.n_mc = 2000;
  c.epsilons = {1.0};
  c.out_dir = d1;
  run_experiment(c);
  c.out_dir = d2;
  run_experiment(c);
  const auto a = read_csv(csv_path(c)), b = read_csv(d1 / "glm-sweep.csv");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sr == b[i].sr);
    CHECK(a[i].br_hi == b[i].br_hi);
    CHECK(a[i].seed == b[i].seed);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("sandwich rows for a non-identity map") {
  const auto dir = fresh_dir("sandwich");
  auto c = default_config(ExperimentKind::GmmSweep);
  c.d = 8;
  c.k_list = {2};
  c.trials = 1;
  c.n_mc = 500;
  c.attack_steps = 10;
  c.phis = {"sign_quadratic"};
  c.out_dir = dir;
  const auto s = run_experiment(c);
  const auto rows = read_csv(s.csv);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].ar_lo <= rows[0].ar_hi);
  CHECK(rows[0].br_lo <= rows[0].br_hi);
  fs::remove_all(dir);
}

TEST_CASE("erm sweep and prop2 check run end to end") {
  const auto dir = fresh_dir("erm");
  auto c = default_config(ExperimentKind::ErmSweep);
  c.d = 10;
  c.k_list = {2, 10};
  c.trials = 1;
  c.n_train = 50;
  c.n_mc = 1000;
  c.epsilons = {0.5};
  c.phis = {"identity"};
  c.out_dir = dir;
  const auto s = run_experiment(c);
  CHECK(s.rows_written == 2);
  CHECK(fs::exists(dir / "erm-sweep_fits.csv"));

  auto p = default_config(ExperimentKind::Prop2Check);
  p.k_list = {1, 5};
  p.trials = 1;
  p.n_mc = 20000;
  p.out_dir = dir;
  const auto ps = run_experiment(p);
  for (const auto& r : read_csv(ps.csv)) CHECK(r.bound == doctest::Approx(0.26025).epsilon(1e-4));
  fs::remove_all(dir);
}

TEST_CASE("mfa fit and eval on a small budget") {
  const auto dir = fresh_dir("mfa");
  auto c = default_config(ExperimentKind::MfaEval);
  c.mnist_dir = fs::path(LATENTROB_SOURCE_DIR) / "data/mnist5k";
  c.k_list = {2};
  c.em_max_iterations = 3;
  c.n_generate = 40;
  c.pgd_steps = 5;
  c.radius_samples = 2;
  c.radius_bisection = 1;
  c.out_dir = dir;
  const auto s = run_experiment(c);
  CHECK(s.cells_failed == 0);
  CHECK(fs::exists(mfa_model_path(c, 6, 1, 2)));
  CHECK(fs::exists(mfa_model_path(c, 0, 1, 2)));
  const auto rows = read_csv(s.csv);
  CHECK(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.ar_lo == r.ar_hi);
    CHECK(r.sr <= r.ar_hi);
  }
  CHECK(fs::exists(dir / "mfa-eval_radius.csv"));
  fs::remove_all(dir);
}
