#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "lmlvamp/config.hpp"
#include "lmlvamp/experiment.hpp"
#include "lmlvamp/plot.hpp"
#include "lmlvamp/results.hpp"
#include "lmlvamp/selftest.hpp"
#include "lmlvamp/simd.hpp"

using namespace lmlvamp;

int main(int argc, char** argv) {
  CLI::App app{"Learned ML-VAMP receiver simulations"};
  app.require_subcommand(1);

  std::string config_path, output_dir, isa;
  int threads = -1;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "Experiment config (TOML); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  app.add_option("-o,--output-dir", output_dir, "Override output directory");
  app.add_option("-j,--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--isa", isa, "Kernel set: scalar or avx2");
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  auto* generate = app.add_subcommand("generate", "Write training datasets");
  auto* train = app.add_subcommand("train", "Train one model per scenario");
  auto* evaluate = app.add_subcommand("evaluate", "Monte Carlo evaluation into results.csv");
  auto* sweep = app.add_subcommand("sweep", "generate, train and evaluate over the grid");
  auto* plot = app.add_subcommand("plot", "Render rate-vs-INR curves from results.csv");
  auto* selftest = app.add_subcommand("selftest", "Run numerical self checks");
  std::string plot_out;
  plot->add_option("--out", plot_out, "SVG path (default: <output_dir>/rate_vs_inr.svg)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!isa.empty()) {
      const auto parsed = simd::parse_isa(isa);
      if (!parsed) throw Error("unknown ISA '" + isa + "'");
      simd::force(*parsed);
    }
    harness::ExperimentConfig cfg =
        config_path.empty() ? harness::ExperimentConfig{} : harness::load_config(config_path);
    harness::apply_environment(cfg);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (threads >= 0) cfg.threads = threads;

    const auto t0 = std::chrono::steady_clock::now();
    harness::Logger log;
    if (!quiet)
      log.sink = [t0](const std::string& msg) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << '[' << static_cast<long>(s) << "s] " << msg << '\n';
      };

    if (*generate) harness::run_generate(cfg, log);
    if (*train) harness::run_train(cfg, log);
    if (*evaluate) harness::run_evaluate(cfg, log);
    if (*sweep) harness::run_sweep(cfg, log);
    if (*plot) {
      const auto rows = harness::read_results(harness::results_path(cfg));
      const std::filesystem::path out =
          plot_out.empty() ? cfg.output_dir / "rate_vs_inr.svg" : std::filesystem::path(plot_out);
      harness::write_rate_plot(rows, cfg.estimators, out);
      log("wrote " + out.string());
    }
    if (*selftest) {
      bool ok = true;
      for (const auto& r : harness::run_selftest()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
      }
      std::cout << "kernels: " << simd::isa_name(simd::active_isa()) << '\n';
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
