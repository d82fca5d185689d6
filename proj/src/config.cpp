#include "lmlvamp/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <variant>

namespace lmlvamp::harness {

namespace {

using Scalar = std::variant<double, bool, std::string>;
struct Value {
  std::vector<Scalar> items;
  bool is_array = false;
};

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

Scalar parse_scalar(const std::string& tok, int line) {
  if (tok.empty()) fail(line, "missing value");
  if (tok == "true") return true;
  if (tok == "false") return false;
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"') fail(line, "unterminated string");
    return tok.substr(1, tok.size() - 2);
  }
  std::string cleaned;
  for (char c : tok)
    if (c != '_') cleaned += c;
  char* end = nullptr;
  const double v = std::strtod(cleaned.c_str(), &end);
  if (end == cleaned.c_str() || *end != '\0') fail(line, "cannot parse value '" + tok + "'");
  return v;
}

Value parse_value(const std::string& text, int line) {
  Value v;
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') fail(line, "unterminated array");
    v.is_array = true;
    std::string body = text.substr(1, text.size() - 2);
    std::string item;
    std::istringstream is(body);
    while (std::getline(is, item, ',')) {
      const auto t = trim(item);
      if (!t.empty()) v.items.push_back(parse_scalar(t, line));
    }
  } else {
    v.items.push_back(parse_scalar(text, line));
  }
  return v;
}

class Binder {
 public:
  Binder(const std::string& key, const Value& v, int line) : key_(key), v_(v), line_(line) {}

  double number() const {
    const auto* d = std::get_if<double>(&single());
    if (!d) fail(line_, key_ + " expects a number");
    return *d;
  }
  int integer() const {
    const double d = number();
    if (d != std::floor(d)) fail(line_, key_ + " expects an integer");
    return static_cast<int>(d);
  }
  bool boolean() const {
    const auto* b = std::get_if<bool>(&single());
    if (!b) fail(line_, key_ + " expects true or false");
    return *b;
  }
  std::string string() const {
    const auto* s = std::get_if<std::string>(&single());
    if (!s) fail(line_, key_ + " expects a string");
    return *s;
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (const auto& it : array()) {
      const auto* d = std::get_if<double>(&it);
      if (!d) fail(line_, key_ + " expects numbers");
      out.push_back(*d);
    }
    return out;
  }
  std::vector<int> integers() const {
    std::vector<int> out;
    for (double d : numbers()) {
      if (d != std::floor(d)) fail(line_, key_ + " expects integers");
      out.push_back(static_cast<int>(d));
    }
    return out;
  }
  std::vector<bool> booleans() const {
    std::vector<bool> out;
    for (const auto& it : array()) {
      const auto* b = std::get_if<bool>(&it);
      if (!b) fail(line_, key_ + " expects booleans");
      out.push_back(*b);
    }
    return out;
  }
  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (const auto& it : array()) {
      const auto* s = std::get_if<std::string>(&it);
      if (!s) fail(line_, key_ + " expects strings");
      out.push_back(*s);
    }
    return out;
  }
  spectrum::Band band() const {
    const auto v = integers();
    if (v.size() != 2 || v[0] < 0 || v[1] < v[0]) fail(line_, key_ + " expects [begin, end]");
    return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1])};
  }
  [[noreturn]] void invalid(const std::string& why) const { fail(line_, key_ + ": " + why); }

 private:
  const Scalar& single() const {
    if (v_.is_array || v_.items.size() != 1) fail(line_, key_ + " expects a single value");
    return v_.items.front();
  }
  const std::vector<Scalar>& array() const {
    if (!v_.is_array) fail(line_, key_ + " expects an array");
    return v_.items;
  }
  std::string key_;
  const Value& v_;
  int line_;
};

void assign(ExperimentConfig& c, const std::string& section, const std::string& key,
            const Binder& b, int line) {
  auto& t = c.train;
  const std::string full = section.empty() ? key : section + "." + key;
  if (full == "seed") {
    const double d = b.number();
    if (d < 0 || d != std::floor(d)) b.invalid("must be a non-negative integer");
    c.seed = static_cast<std::uint64_t>(d);
  } else if (full == "n_trials") c.n_trials = b.integer();
  else if (full == "output_dir") c.output_dir = b.string();
  else if (full == "threads") c.threads = b.integer();
  else if (full == "estimators") {
    c.estimators.clear();
    for (const auto& s : b.strings()) {
      auto e = parse_estimator(s);
      if (!e) b.invalid("unknown estimator '" + s + "'");
      c.estimators.push_back(*e);
    }
  } else if (full == "layout.n") c.n = static_cast<std::size_t>(b.integer());
  else if (full == "layout.band0") c.band0 = b.band();
  else if (full == "layout.band1") c.band1 = b.band();
  else if (full == "scenario.snr_db") c.snr_db = b.numbers();
  else if (full == "scenario.inr_db") c.inr_db = b.numbers();
  else if (full == "scenario.satnr_db") c.satnr_db = b.number();
  else if (full == "scenario.sigma_a2_db") c.sigma_a2_db = b.number();
  else if (full == "scenario.sigma_b2_db") c.sigma_b2_db = b.number();
  else if (full == "scenario.t_iters") c.t_iters = b.integers();
  else if (full == "scenario.quantized") c.quantized = b.booleans();
  else if (full == "quantizer.bits") c.quant_bits = b.integer();
  else if (full == "quantizer.backoff_db") c.backoff_db = b.number();
  else if (full == "train.eta") t.eta = b.number();
  else if (full == "train.n_samples") t.n_samples = b.integer();
  else if (full == "train.n_epochs") t.n_epochs = b.integer();
  else if (full == "train.batch_size") t.batch_size = b.integer();
  else if (full == "train.lr0") t.lr0 = b.number();
  else if (full == "train.lr_decay") t.lr_decay = b.number();
  else if (full == "train.fix_beta") t.fix_beta = b.boolean();
  else if (full == "train.shared_weights") t.shared_weights = b.boolean();
  else if (full == "train.clip_norm") t.clip_norm = b.number();
  else if (full == "train.threads") t.threads = b.integer();
  else if (full == "metrics.rate_formula") {
    const auto s = b.string();
    if (s == "printed") c.rate_formula = metrics::RateFormula::kPrinted;
    else if (s == "squared") c.rate_formula = metrics::RateFormula::kSquared;
    else b.invalid("expected \"printed\" or \"squared\"");
  } else if (full == "metrics.rate_cap_bits") c.rate_cap_bits = b.number();
  else if (full == "metrics.rho_pooled") c.rho_pooled = b.boolean();
  else if (full == "metrics.oracle_per_bin") c.oracle_per_bin = b.boolean();
  else fail(line, "unknown key '" + full + "'");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      static const char* known[] = {"layout", "scenario", "quantizer", "train", "metrics"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known))
        fail(line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const Value v = parse_value(trim(s.substr(eq + 1)), line);
    assign(cfg, section, key, Binder(key, v, line), line);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read config: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void apply_environment(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("LMLVAMP_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
}

}  // namespace lmlvamp::harness
