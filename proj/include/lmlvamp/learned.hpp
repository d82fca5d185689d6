#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lmlvamp/common.hpp"
#include "lmlvamp/frontend.hpp"
#include "lmlvamp/neural.hpp"
#include "lmlvamp/spectrum.hpp"
#include "lmlvamp/tape.hpp"

namespace lmlvamp::learned {

// Precisions produced inside the unrolled iterations are clamped to this range.
inline constexpr double kGammaMin = 1e-8;
inline constexpr double kGammaMax = 1e8;

struct InferenceResult {
  CVec xhat0;                    // band-0 estimate (zero elsewhere)
  std::vector<CVec> trajectory;  // xhat after each iteration, unmasked
  std::vector<double> beta0, beta1, gamma0, gamma1;  // per iteration
  int gamma_clamps = 0;
  int feature_clamps = 0;
};

// Learned ML-VAMP forward pass (y may be the quantized output).
InferenceResult infer(std::span<const Complex> y, const spectrum::PriorSpec& prior,
                      const nn::UnrolledModel& model, const spectrum::Dft& dft);

// Linear weights t / sum_{i<T} i for the intermediate iterations 1..T-1.
std::vector<double> early_weights(int t_max);

// eta * L_final + (1 - eta) * L_early over band 0.
double loss_total(const std::vector<CVec>& trajectory, std::span<const Complex> x0_true,
                  const spectrum::Band& band0, double eta);

struct DatasetItem {
  spectrum::PriorSpec prior;
  CVec y;        // front-end output seen by the receiver
  CVec x0_true;  // desired-band spectrum (zero off band 0)
};

struct Dataset {
  std::vector<DatasetItem> items;
  double snr_db = 0.0;
  double inr_db = 0.0;
  bool quantized = false;
  bool interferer_known = false;

  std::size_t n() const;
  void validate() const;
};

struct TrainConfig {
  int t_max = 2;
  double eta = 0.75;
  int n_samples = 1000;
  int n_epochs = 2000;
  int batch_size = 100;
  double lr0 = 1e-3;
  double lr_decay = 0.9988;
  bool fix_beta = false;
  bool shared_weights = false;
  double clip_norm = 10.0;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  long clamp_count = 0;
};

struct TrainResult {
  nn::UnrolledModel model;
  std::vector<EpochLog> log;
};

// Records the unrolled forward pass for one item on `tape`; `params`
// receives the parameter leaves in flatten() order. Returns L_total.
struct GraphOutput {
  nn::Var loss;
  std::vector<nn::Var> trajectory;  // complex [re..., im...] per iteration
  std::vector<nn::Var> params;
  int gamma_clamps = 0;
};
GraphOutput record_unrolled(nn::Tape& tape, const nn::UnrolledModel& model,
                            const DatasetItem& item, const spectrum::Dft& dft, double eta);

// Loss and flat gradient (flatten() order) for one item.
double loss_and_gradient(const nn::UnrolledModel& model, const DatasetItem& item,
                         const spectrum::Dft& dft, double eta, std::span<double> grad,
                         int* gamma_clamps = nullptr);
// Same, recording on a caller-owned tape so its buffers are reused.
double loss_and_gradient(nn::Tape& tape, const nn::UnrolledModel& model, const DatasetItem& item,
                         const spectrum::Dft& dft, double eta, std::span<double> grad,
                         int* gamma_clamps = nullptr);

// Adam with exponential learning-rate decay and global-norm clipping.
// Deterministic for a given seed regardless of thread count.
TrainResult train(const Dataset& data, const TrainConfig& cfg, double p_sat);

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace lmlvamp::learned
