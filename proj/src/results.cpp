#include "lmlvamp/results.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

namespace lmlvamp::harness {

namespace {

std::string g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double to_double(const std::string& s, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty())
    throw Error("results line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.estimator, a.snr_db, a.inr_db, a.t_iters, a.quantized) <
           std::tie(b.estimator, b.snr_db, b.inr_db, b.t_iters, b.quantized);
  });
}

std::string format_results(std::vector<ResultRow> rows) {
  if (rows.empty()) throw Error("format_results: no rows");
  sort_rows(rows);
  std::string out = kResultsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += r.estimator + ',' + g9(r.snr_db) + ',' + g9(r.inr_db) + ',' + std::to_string(r.t_iters) +
           ',' + (r.quantized ? "1" : "0") + ',' + g9(r.rho_mean) + ',' + g9(r.rate_bound_mean) +
           ',' + g9(r.nmse_db_mean) + ',' + std::to_string(r.n_trials) + ',' +
           std::to_string(r.seed) + '\n';
  }
  return out;
}

std::vector<ResultRow> parse_results(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw Error("results: unexpected header");
  std::vector<ResultRow> rows;
  int ln = 1;
  while (std::getline(is, line)) {
    ++ln;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw Error("results line " + std::to_string(ln) + ": expected 10 fields");
    ResultRow r;
    r.estimator = f[0];
    r.snr_db = to_double(f[1], ln);
    r.inr_db = to_double(f[2], ln);
    r.t_iters = static_cast<int>(to_double(f[3], ln));
    if (f[4] != "0" && f[4] != "1") throw Error("results line " + std::to_string(ln) + ": bad quantized flag");
    r.quantized = f[4] == "1";
    r.rho_mean = to_double(f[5], ln);
    r.rate_bound_mean = to_double(f[6], ln);
    r.nmse_db_mean = to_double(f[7], ln);
    r.n_trials = static_cast<int>(to_double(f[8], ln));
    r.seed = std::stoull(f[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  const std::string text = format_results(rows);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write results: " + path.string());
  os << text;
  if (!os) throw Error("failed writing results: " + path.string());
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read results: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_results(ss.str());
}

}  // namespace lmlvamp::harness
