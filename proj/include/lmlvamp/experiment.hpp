#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lmlvamp/frontend.hpp"
#include "lmlvamp/learned.hpp"
#include "lmlvamp/metrics.hpp"
#include "lmlvamp/neural.hpp"
#include "lmlvamp/spectrum.hpp"

namespace lmlvamp::harness {

enum class Estimator { kLmlvampK, kLmlvampU, kLinearK, kLinearU, kOracle };

std::string estimator_name(Estimator e);
std::optional<Estimator> parse_estimator(std::string_view name);
const std::vector<Estimator>& all_estimators();

struct ExperimentConfig {
  std::size_t n = 512;
  spectrum::Band band0{0, 100};
  spectrum::Band band1{300, 400};
  std::vector<double> snr_db{10.0, 20.0};
  std::vector<double> inr_db{30.0, 40.0, 50.0, 60.0, 70.0, 80.0};
  double satnr_db = 40.0;
  double sigma_a2_db = 0.0;
  double sigma_b2_db = -10.0;
  int quant_bits = 10;
  double backoff_db = 12.0;
  std::vector<bool> quantized{false, true};
  std::vector<int> t_iters{1, 2, 3};
  std::vector<Estimator> estimators = all_estimators();
  int n_trials = 500;
  learned::TrainConfig train;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  int threads = 0;

  // Metric variants.
  metrics::RateFormula rate_formula = metrics::RateFormula::kPrinted;
  double rate_cap_bits = metrics::kDefaultRateCapBits;
  bool rho_pooled = false;
  bool oracle_per_bin = false;

  double sigma_a2() const { return db_to_linear(sigma_a2_db); }
  double sigma_b2() const { return db_to_linear(sigma_b2_db); }
  double p_sat() const { return sigma_a2() * db_to_linear(satnr_db); }
  spectrum::BandLayout layout() const { return spectrum::BandLayout(n, {band0, band1}); }
  int worker_count() const;
  void validate() const;
};

// One (SNR, INR, quantized) operating point; T and the K/U flag select the
// model within it.
struct Scenario {
  double snr_db = 0.0;
  double inr_db = 0.0;
  bool quantized = false;
};

struct ModelKey {
  Scenario scenario;
  int t_iters = 1;
  bool interferer_known = false;
};

std::vector<Scenario> scenario_grid(const ExperimentConfig& cfg);
std::string model_file_name(const ModelKey& key);
std::string dataset_file_name(const Scenario& s, bool interferer_known);

// Front end of a scenario; the quantizer full scale follows the scenario's
// mean input power.
frontend::FrontEndParams scenario_frontend(const ExperimentConfig& cfg, const Scenario& s);

// One simulated observation. Both priors describe the same realization:
// prior_k carries the realized interferer in mu, prior_u only its power.
struct Trial {
  spectrum::PriorSpec prior_k;
  spectrum::PriorSpec prior_u;
  CVec x;
  CVec x0_true;
  CVec y;
  RVec gain;
};

enum class Purpose : std::uint64_t { kTrain = 1, kEval = 2 };

Trial make_trial(const ExperimentConfig& cfg, const Scenario& s, Purpose purpose,
                 std::uint64_t index, const spectrum::Dft& dft);
std::vector<Trial> make_trials(const ExperimentConfig& cfg, const Scenario& s, Purpose purpose,
                               int count);

learned::Dataset make_dataset(const ExperimentConfig& cfg, const Scenario& s,
                              bool interferer_known);
void save_dataset(const learned::Dataset& d, const std::filesystem::path& path);
learned::Dataset load_dataset(const std::filesystem::path& path);

learned::TrainConfig train_config_for(const ExperimentConfig& cfg, const ModelKey& key);
learned::TrainResult train_model(const ExperimentConfig& cfg, const ModelKey& key,
                                 const learned::Dataset& data);

// Aggregated metrics of one estimator at one grid point.
struct ResultRow {
  std::string estimator;
  double snr_db = 0.0;
  double inr_db = 0.0;
  int t_iters = 0;
  bool quantized = false;
  double rho_mean = 0.0;
  double rate_bound_mean = 0.0;
  double nmse_db_mean = 0.0;
  int n_trials = 0;
  std::uint64_t seed = 0;
  double rate_stderr = 0.0;  // not serialized
  bool operator==(const ResultRow&) const = default;
};

// Supplies the trained model for a key; used by evaluate().
using ModelSource = std::function<nn::UnrolledModel(const ModelKey&)>;

ModelSource models_from_directory(const std::filesystem::path& dir);

// Runs every configured estimator over cfg.n_trials trials of `s` for each
// configured T. Linear and oracle rows repeat across T.
std::vector<ResultRow> evaluate_scenario(const ExperimentConfig& cfg, const Scenario& s,
                                         const ModelSource& models);

struct Logger {
  std::function<void(const std::string&)> sink;
  void operator()(const std::string& msg) const {
    if (sink) sink(msg);
  }
};

// Subcommand bodies. Each writes below cfg.output_dir.
void run_generate(const ExperimentConfig& cfg, const Logger& log = {});
void run_train(const ExperimentConfig& cfg, const Logger& log = {});
std::vector<ResultRow> run_evaluate(const ExperimentConfig& cfg, const Logger& log = {});
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg, const Logger& log = {});

std::filesystem::path models_dir(const ExperimentConfig& cfg);
std::filesystem::path data_dir(const ExperimentConfig& cfg);
std::filesystem::path results_path(const ExperimentConfig& cfg);

}  // namespace lmlvamp::harness
