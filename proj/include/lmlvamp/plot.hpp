#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lmlvamp/experiment.hpp"

namespace lmlvamp::harness {

// Rate-vs-INR curves, one panel per (SNR, T, quantized), as one SVG
// document. Throws if a configured estimator has no rows.
std::string render_rate_plot(const std::vector<ResultRow>& rows,
                             const std::vector<Estimator>& estimators);
void write_rate_plot(const std::vector<ResultRow>& rows, const std::vector<Estimator>& estimators,
                     const std::filesystem::path& path);

}  // namespace lmlvamp::harness
