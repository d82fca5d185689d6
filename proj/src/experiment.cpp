#include "lmlvamp/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cstring>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "lmlvamp/results.hpp"
#include "lmlvamp/rng.hpp"

namespace lmlvamp::harness {

namespace {

constexpr std::uint64_t kTrialTag = 0x7121A1ULL;
constexpr std::uint64_t kTrainTag = 0x7EA1ULL;

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

// Runs fn(i) for i in [0, count) on up to `workers` threads; the first
// exception is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const std::size_t w = std::min<std::size_t>(std::max(workers, 1), count);
  if (w <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < w; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Little-endian byte stream helpers for the dataset file.
class Writer {
 public:
  template <class T>
  void put(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    buf_.insert(buf_.end(), b, b + sizeof(T));
  }
  void put_cvec(const CVec& v) {
    for (const auto& c : v) {
      put(c.real());
      put(c.imag());
    }
  }
  void put_rvec(const RVec& v) {
    for (double d : v) put(d);
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> b) : buf_(std::move(b)) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw Error("dataset file truncated");
    unsigned char b[sizeof(T)];
    std::memcpy(b, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  CVec get_cvec(std::size_t n) {
    CVec v(n);
    for (auto& c : v) {
      const double re = get<double>();
      c = {re, get<double>()};
    }
    return v;
  }
  RVec get_rvec(std::size_t n) {
    RVec v(n);
    for (auto& d : v) d = get<double>();
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kDatasetMagic = 0x53444D4C;  // "LMDS"
constexpr std::uint32_t kDatasetVersion = 1;

bool wants(const ExperimentConfig& cfg, Estimator e) {
  return std::find(cfg.estimators.begin(), cfg.estimators.end(), e) != cfg.estimators.end();
}

std::vector<bool> model_flavours(const ExperimentConfig& cfg) {
  std::vector<bool> out;
  if (wants(cfg, Estimator::kLmlvampK)) out.push_back(true);
  if (wants(cfg, Estimator::kLmlvampU)) out.push_back(false);
  return out;
}

void check_finite_row(const ResultRow& r) {
  if (!std::isfinite(r.rho_mean) || !std::isfinite(r.rate_bound_mean) ||
      !std::isfinite(r.nmse_db_mean)) {
    std::ostringstream os;
    os << "non-finite result for " << r.estimator << " at SNR " << r.snr_db << " dB, INR "
       << r.inr_db << " dB, T " << r.t_iters << (r.quantized ? ", quantized" : "");
    throw Error(os.str());
  }
}

}  // namespace

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kLmlvampK: return "LMLVAMP-K";
    case Estimator::kLmlvampU: return "LMLVAMP-U";
    case Estimator::kLinearK: return "LINEAR-K";
    case Estimator::kLinearU: return "LINEAR-U";
    case Estimator::kOracle: return "ORACLE";
  }
  return "?";
}

std::optional<Estimator> parse_estimator(std::string_view name) {
  for (Estimator e : all_estimators())
    if (estimator_name(e) == name) return e;
  return std::nullopt;
}

const std::vector<Estimator>& all_estimators() {
  static const std::vector<Estimator> all{Estimator::kLmlvampK, Estimator::kLmlvampU,
                                          Estimator::kLinearK, Estimator::kLinearU,
                                          Estimator::kOracle};
  return all;
}

int ExperimentConfig::worker_count() const {
  if (threads > 0) return threads;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

void ExperimentConfig::validate() const {
  (void)layout();
  if (snr_db.empty() || inr_db.empty() || t_iters.empty() || quantized.empty())
    throw Error("config: scenario lists must be non-empty");
  if (estimators.empty()) throw Error("config: no estimators");
  for (int t : t_iters)
    if (t < 1) throw Error("config: t_iters entries must be >= 1");
  if (n_trials < 1) throw Error("config: n_trials must be positive");
  if (quant_bits < 1 || quant_bits > 24) throw Error("config: quantizer bits must lie in [1, 24]");
  if (!(rate_cap_bits > 0.0)) throw Error("config: rate_cap_bits must be positive");
  train.validate();
}

std::vector<Scenario> scenario_grid(const ExperimentConfig& cfg) {
  std::vector<Scenario> out;
  for (double snr : cfg.snr_db)
    for (double inr : cfg.inr_db)
      for (bool q : cfg.quantized) out.push_back({snr, inr, q});
  return out;
}

std::string model_file_name(const ModelKey& key) {
  return "model_snr" + fmt_num(key.scenario.snr_db) + "_inr" + fmt_num(key.scenario.inr_db) +
         "_T" + std::to_string(key.t_iters) + (key.scenario.quantized ? "_q" : "_nq") +
         (key.interferer_known ? "_k" : "_u") + ".bin";
}

std::string dataset_file_name(const Scenario& s, bool interferer_known) {
  return "data_snr" + fmt_num(s.snr_db) + "_inr" + fmt_num(s.inr_db) +
         (s.quantized ? "_q" : "_nq") + (interferer_known ? "_k" : "_u") + ".bin";
}

frontend::FrontEndParams scenario_frontend(const ExperimentConfig& cfg, const Scenario& s) {
  frontend::FrontEndParams fe;
  fe.p_sat = cfg.p_sat();
  fe.sigma_a2 = cfg.sigma_a2();
  fe.sigma_b2 = cfg.sigma_b2();
  if (s.quantized) {
    const double p_in = (db_to_linear(s.snr_db) + db_to_linear(s.inr_db)) * fe.sigma_a2;
    frontend::QuantizerParams q;
    q.bits = cfg.quant_bits;
    q.backoff_db = cfg.backoff_db;
    q.full_scale =
        frontend::quantizer_full_scale(cfg.backoff_db, p_in, fe.p_sat, fe.sigma_a2, fe.sigma_b2);
    fe.quantizer = q;
  }
  return fe;
}

Trial make_trial(const ExperimentConfig& cfg, const Scenario& s, Purpose purpose,
                 std::uint64_t index, const spectrum::Dft& dft) {
  // The quantized flag stays out of the key so both front ends see the same
  // realization.
  Rng rng({cfg.seed, kTrialTag, static_cast<std::uint64_t>(purpose), bits(s.snr_db),
           bits(s.inr_db), index});
  const auto layout = cfg.layout();
  Trial t{spectrum::prior_from_scenario(layout, s.snr_db, s.inr_db, cfg.sigma_a2(), true, rng),
          spectrum::prior_from_scenario(layout, s.snr_db, s.inr_db, cfg.sigma_a2(), false, rng),
          {}, {}, {}, {}};
  auto sig = spectrum::sample_signal(t.prior_k, dft, rng);
  auto fe_out = frontend::apply_frontend(sig.r, scenario_frontend(cfg, s), rng);
  t.x = std::move(sig.x);
  t.x0_true.assign(cfg.n, Complex{});
  std::copy(t.x.begin() + cfg.band0.begin, t.x.begin() + cfg.band0.end,
            t.x0_true.begin() + cfg.band0.begin);
  t.y = std::move(fe_out.y);
  t.gain = std::move(fe_out.gain);
  return t;
}

std::vector<Trial> make_trials(const ExperimentConfig& cfg, const Scenario& s, Purpose purpose,
                               int count) {
  const spectrum::Dft dft(cfg.n);
  std::vector<std::optional<Trial>> slots(count);
  parallel_for(count, cfg.worker_count(),
               [&](std::size_t i) { slots[i].emplace(make_trial(cfg, s, purpose, i, dft)); });
  std::vector<Trial> out;
  out.reserve(count);
  for (auto& t : slots) out.push_back(std::move(*t));
  return out;
}

learned::Dataset make_dataset(const ExperimentConfig& cfg, const Scenario& s,
                              bool interferer_known) {
  auto trials = make_trials(cfg, s, Purpose::kTrain, cfg.train.n_samples);
  learned::Dataset d;
  d.snr_db = s.snr_db;
  d.inr_db = s.inr_db;
  d.quantized = s.quantized;
  d.interferer_known = interferer_known;
  d.items.reserve(trials.size());
  for (auto& t : trials)
    d.items.push_back({interferer_known ? std::move(t.prior_k) : std::move(t.prior_u),
                       std::move(t.y), std::move(t.x0_true)});
  return d;
}

void save_dataset(const learned::Dataset& d, const std::filesystem::path& path) {
  d.validate();
  Writer w;
  w.put(kDatasetMagic);
  w.put(kDatasetVersion);
  const auto& layout = d.items.front().prior.layout;
  w.put(static_cast<std::uint64_t>(layout.n()));
  w.put(static_cast<std::uint32_t>(layout.num_bands()));
  for (const auto& b : layout.bands()) {
    w.put(static_cast<std::uint64_t>(b.begin));
    w.put(static_cast<std::uint64_t>(b.end));
  }
  w.put(d.snr_db);
  w.put(d.inr_db);
  w.put(static_cast<std::uint8_t>(d.quantized));
  w.put(static_cast<std::uint8_t>(d.interferer_known));
  w.put(static_cast<std::uint64_t>(d.items.size()));
  for (const auto& it : d.items) {
    w.put_cvec(it.prior.mu);
    w.put_rvec(it.prior.s);
    w.put_cvec(it.y);
    w.put_cvec(it.x0_true);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write dataset: " + path.string());
  os.write(reinterpret_cast<const char*>(w.bytes().data()),
           static_cast<std::streamsize>(w.bytes().size()));
  if (!os) throw Error("failed writing dataset: " + path.string());
}

learned::Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read dataset: " + path.string());
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(is), {}));
  if (r.get<std::uint32_t>() != kDatasetMagic) throw Error("not a dataset file: " + path.string());
  if (r.get<std::uint32_t>() != kDatasetVersion)
    throw Error("unsupported dataset version: " + path.string());
  const auto n = static_cast<std::size_t>(r.get<std::uint64_t>());
  const auto nb = r.get<std::uint32_t>();
  std::vector<spectrum::Band> bands(nb);
  for (auto& b : bands) {
    b.begin = static_cast<std::size_t>(r.get<std::uint64_t>());
    b.end = static_cast<std::size_t>(r.get<std::uint64_t>());
  }
  const spectrum::BandLayout layout(n, bands);
  learned::Dataset d;
  d.snr_db = r.get<double>();
  d.inr_db = r.get<double>();
  d.quantized = r.get<std::uint8_t>() != 0;
  d.interferer_known = r.get<std::uint8_t>() != 0;
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    learned::DatasetItem it{{layout, {}, {}}, {}, {}};
    it.prior.mu = r.get_cvec(n);
    it.prior.s = r.get_rvec(n);
    it.y = r.get_cvec(n);
    it.x0_true = r.get_cvec(n);
    d.items.push_back(std::move(it));
  }
  if (!r.done()) throw Error("trailing bytes in dataset: " + path.string());
  d.validate();
  return d;
}

learned::TrainConfig train_config_for(const ExperimentConfig& cfg, const ModelKey& key) {
  learned::TrainConfig tc = cfg.train;
  tc.t_max = key.t_iters;
  tc.seed = stream_key({cfg.seed, kTrainTag, bits(key.scenario.snr_db), bits(key.scenario.inr_db),
                        static_cast<std::uint64_t>(key.t_iters),
                        static_cast<std::uint64_t>(key.scenario.quantized),
                        static_cast<std::uint64_t>(key.interferer_known)});
  if (tc.threads == 0) tc.threads = cfg.threads;
  return tc;
}

learned::TrainResult train_model(const ExperimentConfig& cfg, const ModelKey& key,
                                 const learned::Dataset& data) {
  return learned::train(data, train_config_for(cfg, key), cfg.p_sat());
}

ModelSource models_from_directory(const std::filesystem::path& dir) {
  return [dir](const ModelKey& key) {
    const auto path = dir / model_file_name(key);
    if (!std::filesystem::exists(path)) throw Error("missing model file: " + path.string());
    return nn::load_model(path);
  };
}

std::vector<ResultRow> evaluate_scenario(const ExperimentConfig& cfg, const Scenario& s,
                                         const ModelSource& models) {
  const auto fe = scenario_frontend(cfg, s);
  const spectrum::Dft dft(cfg.n);
  const std::size_t n_t = cfg.t_iters.size();
  const std::size_t n_e = cfg.estimators.size();

  // models[t][k]; k = 1 for the known-interferer model.
  std::vector<std::array<std::optional<nn::UnrolledModel>, 2>> model_set(n_t);
  for (std::size_t ti = 0; ti < n_t; ++ti)
    for (bool known : model_flavours(cfg))
      model_set[ti][known ? 1 : 0] = models({s, cfg.t_iters[ti], known});

  // evals[trial][t * n_e + e]; estimates kept only for the pooled correlation.
  const int n_trials = cfg.n_trials;
  std::vector<std::vector<metrics::Evaluation>> evals(n_trials);
  std::vector<std::vector<CVec>> estimates(cfg.rho_pooled ? n_trials : 0);
  std::vector<CVec> truths(cfg.rho_pooled ? n_trials : 0);

  parallel_for(n_trials, cfg.worker_count(), [&](std::size_t k) {
    const Trial trial = make_trial(cfg, s, Purpose::kEval, k, dft);
    auto& row = evals[k];
    row.resize(n_t * n_e);
    std::vector<CVec> est(n_t * n_e);
    for (std::size_t ti = 0; ti < n_t; ++ti)
      for (std::size_t ei = 0; ei < n_e; ++ei) {
        CVec xhat;
        switch (cfg.estimators[ei]) {
          case Estimator::kLmlvampK:
            xhat = learned::infer(trial.y, trial.prior_k, *model_set[ti][1], dft).xhat0;
            break;
          case Estimator::kLmlvampU:
            xhat = learned::infer(trial.y, trial.prior_u, *model_set[ti][0], dft).xhat0;
            break;
          case Estimator::kLinearK:
            xhat = metrics::linear_wiener(trial.y, trial.prior_k, fe, dft);
            break;
          case Estimator::kLinearU:
            xhat = metrics::linear_wiener(trial.y, trial.prior_u, fe, dft);
            break;
          case Estimator::kOracle:
            xhat = metrics::oracle_estimate(trial.y, trial.gain, trial.x0_true, cfg.band0, dft,
                                            cfg.oracle_per_bin);
            break;
        }
        row[ti * n_e + ei] =
            metrics::evaluate(xhat, trial.x0_true, cfg.band0, cfg.rate_formula, cfg.rate_cap_bits);
        if (cfg.rho_pooled) est[ti * n_e + ei] = std::move(xhat);
      }
    if (cfg.rho_pooled) {
      estimates[k] = std::move(est);
      truths[k] = trial.x0_true;
    }
  });

  std::vector<ResultRow> rows;
  for (std::size_t ti = 0; ti < n_t; ++ti)
    for (std::size_t ei = 0; ei < n_e; ++ei) {
      const std::size_t col = ti * n_e + ei;
      double rho = 0.0, rate = 0.0, rate2 = 0.0, nmse = 0.0;
      for (int k = 0; k < n_trials; ++k) {
        const auto& e = evals[k][col];
        rho += e.rho;
        rate += e.rate_bound;
        rate2 += e.rate_bound * e.rate_bound;
        nmse += e.nmse;
      }
      const double m = static_cast<double>(n_trials);
      ResultRow r;
      r.estimator = estimator_name(cfg.estimators[ei]);
      r.snr_db = s.snr_db;
      r.inr_db = s.inr_db;
      r.t_iters = cfg.t_iters[ti];
      r.quantized = s.quantized;
      r.rho_mean = rho / m;
      r.rate_bound_mean = rate / m;
      r.nmse_db_mean = metrics::nmse_to_db(nmse / m);
      r.n_trials = n_trials;
      r.seed = cfg.seed;
      const double var = n_trials > 1 ? std::max(0.0, (rate2 - rate * rate / m) / (m - 1.0)) : 0.0;
      r.rate_stderr = std::sqrt(var / m);
      if (cfg.rho_pooled) {
        // One correlation over the band-0 bins of every trial.
        const std::size_t nb = cfg.band0.size();
        CVec a, b;
        a.reserve(nb * n_trials);
        b.reserve(nb * n_trials);
        for (int k = 0; k < n_trials; ++k) {
          a.insert(a.end(), estimates[k][col].begin() + cfg.band0.begin,
                   estimates[k][col].begin() + cfg.band0.end);
          b.insert(b.end(), truths[k].begin() + cfg.band0.begin, truths[k].begin() + cfg.band0.end);
        }
        r.rho_mean = metrics::correlation(a, b, {0, a.size()});
        r.rate_bound_mean = metrics::rate_bound(r.rho_mean, cfg.rate_formula, cfg.rate_cap_bits);
      }
      check_finite_row(r);
      rows.push_back(std::move(r));
    }
  return rows;
}

std::filesystem::path models_dir(const ExperimentConfig& cfg) { return cfg.output_dir / "models"; }
std::filesystem::path data_dir(const ExperimentConfig& cfg) { return cfg.output_dir / "data"; }
std::filesystem::path results_path(const ExperimentConfig& cfg) {
  return cfg.output_dir / "results.csv";
}

void run_generate(const ExperimentConfig& cfg, const Logger& log) {
  cfg.validate();
  std::filesystem::create_directories(data_dir(cfg));
  for (const auto& s : scenario_grid(cfg))
    for (bool known : model_flavours(cfg)) {
      const auto path = data_dir(cfg) / dataset_file_name(s, known);
      save_dataset(make_dataset(cfg, s, known), path);
      log("wrote " + path.string());
    }
}

void run_train(const ExperimentConfig& cfg, const Logger& log) {
  cfg.validate();
  std::filesystem::create_directories(models_dir(cfg));
  for (const auto& s : scenario_grid(cfg))
    for (bool known : model_flavours(cfg)) {
      const auto dpath = data_dir(cfg) / dataset_file_name(s, known);
      const learned::Dataset data =
          std::filesystem::exists(dpath) ? load_dataset(dpath) : make_dataset(cfg, s, known);
      for (int t : cfg.t_iters) {
        const ModelKey key{s, t, known};
        const auto res = train_model(cfg, key, data);
        const auto mpath = models_dir(cfg) / model_file_name(key);
        nn::save_model(res.model, mpath);
        auto lpath = mpath;
        lpath.replace_extension(".log.csv");
        learned::write_training_log(res.log, lpath);
        std::ostringstream os;
        os << "trained " << mpath.filename().string();
        if (!res.log.empty()) os << " final loss " << res.log.back().mean_loss;
        log(os.str());
      }
    }
}

std::vector<ResultRow> run_evaluate(const ExperimentConfig& cfg, const Logger& log) {
  cfg.validate();
  const auto models = models_from_directory(models_dir(cfg));
  std::vector<ResultRow> rows;
  for (const auto& s : scenario_grid(cfg)) {
    auto part = evaluate_scenario(cfg, s, models);
    rows.insert(rows.end(), part.begin(), part.end());
    std::ostringstream os;
    os << "evaluated SNR " << s.snr_db << " INR " << s.inr_db << (s.quantized ? " q" : " nq");
    log(os.str());
  }
  std::filesystem::create_directories(cfg.output_dir);
  write_results(rows, results_path(cfg));
  log("wrote " + results_path(cfg).string());
  sort_rows(rows);
  return rows;
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg, const Logger& log) {
  run_generate(cfg, log);
  run_train(cfg, log);
  return run_evaluate(cfg, log);
}

}  // namespace lmlvamp::harness
