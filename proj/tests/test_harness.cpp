#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "lmlvamp/config.hpp"
#include "lmlvamp/experiment.hpp"
#include "lmlvamp/plot.hpp"
#include "lmlvamp/results.hpp"

using namespace lmlvamp;
using namespace lmlvamp::harness;
using namespace testing;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lmlvamp_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// A grid small enough to train and evaluate in a few seconds.
ExperimentConfig tiny_config(const std::filesystem::path& out) {
  ExperimentConfig c;
  c.n = 32;
  c.band0 = {0, 8};
  c.band1 = {16, 24};
  c.snr_db = {20.0};
  c.inr_db = {30.0, 60.0};
  c.quantized = {false, true};
  c.t_iters = {1, 2};
  c.n_trials = 12;
  c.train.n_samples = 16;
  c.train.n_epochs = 3;
  c.train.batch_size = 8;
  c.output_dir = out;
  c.threads = 2;
  return c;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("defaults follow the simulation table") {
  const ExperimentConfig c;
  CHECK(c.n == 512);
  CHECK(c.band0.begin == 0);
  CHECK(c.band0.end == 100);
  CHECK(c.band1.begin == 300);
  CHECK(c.band1.end == 400);
  CHECK(c.inr_db == std::vector<double>{30, 40, 50, 60, 70, 80});
  CHECK(c.snr_db == std::vector<double>{10, 20});
  CHECK(c.satnr_db == 40.0);
  CHECK(c.sigma_b2_db == -10.0);
  CHECK(c.quant_bits == 10);
  CHECK(c.backoff_db == 12.0);
  CHECK(c.train.n_samples == 1000);
  CHECK(c.train.n_epochs == 2000);
  CHECK(c.train.eta == 0.75);
  CHECK(c.n_trials == 500);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config parsing") {
  const auto c = parse_config(R"(
seed = 7
n_trials = 40   # comment
estimators = ["LINEAR-U", "ORACLE"]
[layout]
n = 64
band0 = [0, 16]
band1 = [32, 48]
[scenario]
snr_db = [10]
inr_db = [30, 80]
quantized = [true]
t_iters = [3]
[train]
n_epochs = 5
fix_beta = true
[metrics]
rate_formula = "squared"
rho_pooled = true
)");
  CHECK(c.seed == 7);
  CHECK(c.n_trials == 40);
  CHECK(c.n == 64);
  CHECK(c.band1.end == 48);
  CHECK(c.inr_db == std::vector<double>{30, 80});
  CHECK(c.quantized == std::vector<bool>{true});
  CHECK(c.t_iters == std::vector<int>{3});
  CHECK(c.train.n_epochs == 5);
  CHECK(c.train.fix_beta);
  CHECK(c.rate_formula == metrics::RateFormula::kSquared);
  CHECK(c.rho_pooled);
  REQUIRE(c.estimators.size() == 2);
  CHECK(c.estimators[1] == Estimator::kOracle);
}

TEST_CASE("config errors name the line") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("seed = 1\n[train]\nbogus = 3\n").find("line 3") != std::string::npos);
  CHECK(message("[nowhere]\n").find("line 1") != std::string::npos);
  CHECK(message("n_trials = \"many\"\n").find("line 1") != std::string::npos);
  CHECK(message("[metrics]\nrate_formula = \"cubed\"\n") != "no error");
  CHECK(message("estimators = [\"NOPE\"]\n") != "no error");
  CHECK(message("[train]\neta = 0.3\n") != "no error");
}

TEST_CASE("environment overrides the output directory") {
  ExperimentConfig c;
  setenv("LMLVAMP_OUTPUT_DIR", "/tmp/elsewhere", 1);
  apply_environment(c);
  unsetenv("LMLVAMP_OUTPUT_DIR");
  CHECK(c.output_dir == std::filesystem::path("/tmp/elsewhere"));
}

TEST_CASE("estimator names round trip") {
  for (Estimator e : all_estimators()) CHECK(parse_estimator(estimator_name(e)) == e);
  CHECK_FALSE(parse_estimator("LMLVAMP").has_value());
}

TEST_CASE("grid and file names") {
  ExperimentConfig c;
  c.snr_db = {20};
  c.inr_db = {30, 40};
  const auto grid = scenario_grid(c);
  CHECK(grid.size() == 4);
  CHECK(model_file_name({{20, 70, false}, 2, true}) == "model_snr20_inr70_T2_nq_k.bin");
  CHECK(model_file_name({{10, 35.5, true}, 1, false}) == "model_snr10_inr35.5_T1_q_u.bin");
  CHECK(dataset_file_name({20, 80, true}, true) == "data_snr20_inr80_q_k.bin");
}

TEST_CASE("trials are reproducible and independent of generation order") {
  const auto c = tiny_config(scratch("trials"));
  const Scenario s{20, 60, false};
  const spectrum::Dft dft(c.n);
  const auto batch = make_trials(c, s, Purpose::kEval, 5);
  const auto single = make_trial(c, s, Purpose::kEval, 3, dft);
  CHECK(single.y == batch[3].y);
  CHECK(single.x0_true == batch[3].x0_true);
  CHECK(batch[2].y != batch[3].y);
  const auto train_trial = make_trial(c, s, Purpose::kTrain, 3, dft);
  CHECK(train_trial.y != single.y);
  // The quantized scenario sees the same signal.
  const auto q = make_trial(c, {20, 60, true}, Purpose::kEval, 3, dft);
  CHECK(q.x == single.x);
}

TEST_CASE("trial invariants") {
  const auto c = tiny_config(scratch("inv"));
  const spectrum::Dft dft(c.n);
  const auto t = make_trial(c, {20, 60, false}, Purpose::kEval, 0, dft);
  for (std::size_t i = 0; i < c.n; ++i) {
    if (c.band0.contains(i))
      CHECK(t.x0_true[i] == t.x[i]);
    else
      CHECK(t.x0_true[i] == Complex{});
    CHECK(t.gain[i] > 0.0);
    CHECK(t.gain[i] <= 1.0);
  }
  // Known prior holds the realized interferer, unknown prior only its power.
  for (std::size_t i = c.band1.begin; i < c.band1.end; ++i) {
    CHECK(t.prior_k.mu[i] == t.x[i]);
    CHECK(t.prior_u.mu[i] == Complex{});
    CHECK(t.prior_u.s[i] > 0.0);
  }
}

TEST_CASE("quantized front end uses the configured bit depth") {
  const auto c = tiny_config(scratch("fe"));
  const auto fe = scenario_frontend(c, {20, 60, true});
  REQUIRE(fe.quantizer.has_value());
  CHECK(fe.quantizer->bits == 10);
  CHECK(fe.quantizer->full_scale > 0.0);
  CHECK_FALSE(scenario_frontend(c, {20, 60, false}).quantizer.has_value());
}

TEST_CASE("dataset files round trip") {
  const auto dir = scratch("data");
  std::filesystem::create_directories(dir);
  const auto c = tiny_config(dir);
  const auto d = make_dataset(c, {20, 30, true}, true);
  CHECK(static_cast<int>(d.items.size()) == c.train.n_samples);
  save_dataset(d, dir / "d.bin");
  const auto back = load_dataset(dir / "d.bin");
  REQUIRE(back.items.size() == d.items.size());
  CHECK(back.quantized);
  CHECK(back.interferer_known);
  for (std::size_t k = 0; k < d.items.size(); ++k) {
    CHECK(back.items[k].y == d.items[k].y);
    CHECK(back.items[k].prior.s == d.items[k].prior.s);
    CHECK(back.items[k].prior.mu == d.items[k].prior.mu);
  }
  std::ofstream(dir / "bad.bin") << "junk";
  CHECK_THROWS_AS(load_dataset(dir / "bad.bin"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("results csv format, sorting and parsing") {
  std::vector<ResultRow> rows{
      {"ORACLE", 20, 30, 2, false, 0.9, 3.3, -10, 5, 1},
      {"LINEAR-K", 20, 80, 1, true, 0.1, 0.15, 1.5, 5, 1},
      {"LINEAR-K", 10, 80, 1, false, 0.123456789012, 0.2, -0.5, 5, 1},
  };
  const std::string text = format_results(rows);
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  CHECK(line == kResultsHeader);
  std::getline(is, line);
  CHECK(line == "LINEAR-K,10,80,1,0,0.123456789,0.2,-0.5,5,1");
  const auto back = parse_results(text);
  REQUIRE(back.size() == 3);
  CHECK(back[0].estimator == "LINEAR-K");
  CHECK(back[1].quantized);
  CHECK(back[2].estimator == "ORACLE");
  CHECK_THROWS_AS(parse_results("wrong,header\n"), Error);
}

TEST_CASE("missing models are reported by name") {
  const auto dir = scratch("nomodels");
  std::filesystem::create_directories(dir);
  const auto source = models_from_directory(dir);
  try {
    source({{20, 70, false}, 2, true});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("model_snr20_inr70_T2_nq_k.bin") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("end-to-end sweep is deterministic") {
  const auto dir_a = scratch("sweep_a"), dir_b = scratch("sweep_b");
  auto ca = tiny_config(dir_a);
  auto cb = tiny_config(dir_b);
  cb.threads = 1;
  const auto rows = run_sweep(ca);
  run_sweep(cb);
  // 2 INR x 2 quantizer settings x 2 T x 5 estimators.
  CHECK(rows.size() == 40);
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.rho_mean));
    CHECK(r.rho_mean >= 0.0);
    CHECK(r.rho_mean <= 1.0);
    CHECK(r.n_trials == 12);
  }
  CHECK(slurp(results_path(ca)) == slurp(results_path(cb)));
  for (const auto& entry : std::filesystem::directory_iterator(models_dir(ca)))
    CHECK(slurp(entry.path()) == slurp(models_dir(cb) / entry.path().filename()));

  // Re-evaluating the stored models gives the same table.
  run_evaluate(ca);
  CHECK(slurp(results_path(ca)) == slurp(results_path(cb)));

  const auto svg = render_rate_plot(read_results(results_path(ca)), ca.estimators);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("LMLVAMP-K") != std::string::npos);
  CHECK_THROWS_AS(render_rate_plot({}, ca.estimators), Error);
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("linear rows repeat across T") {
  const auto dir = scratch("linear");
  auto c = tiny_config(dir);
  c.estimators = {Estimator::kLinearU, Estimator::kOracle};
  c.quantized = {false};
  const auto rows = run_sweep(c);
  REQUIRE(rows.size() == 8);
  for (std::size_t k = 0; k + 1 < rows.size(); k += 2) {
    CHECK(rows[k].t_iters != rows[k + 1].t_iters);
    CHECK(rows[k].rho_mean == rows[k + 1].rho_mean);
  }
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
