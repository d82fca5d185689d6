#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lmlvamp/experiment.hpp"

namespace lmlvamp::harness {

inline constexpr const char* kResultsHeader =
    "estimator,snr_db,inr_db,t_iters,quantized,rho_mean,rate_bound_mean,nmse_db_mean,n_trials,seed";

void sort_rows(std::vector<ResultRow>& rows);
std::string format_results(std::vector<ResultRow> rows);
std::vector<ResultRow> parse_results(const std::string& text);
void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

}  // namespace lmlvamp::harness
