#include "lmlvamp/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace lmlvamp::harness {

namespace {

constexpr double kPanelW = 340, kPanelH = 250;
constexpr double kMarginL = 48, kMarginR = 12, kMarginT = 28, kMarginB = 36;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double nice_ceiling(double v) {
  if (v <= 0.0) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * mag >= v) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::string render_rate_plot(const std::vector<ResultRow>& rows,
                             const std::vector<Estimator>& estimators) {
  for (Estimator e : estimators) {
    const auto name = estimator_name(e);
    if (std::none_of(rows.begin(), rows.end(), [&](const ResultRow& r) { return r.estimator == name; }))
      throw Error("plot: results contain no rows for estimator " + name);
  }

  using PanelKey = std::tuple<double, bool, int>;  // snr, quantized, T
  std::set<double> snrs;
  std::set<bool> quants;
  std::set<int> ts;
  std::map<PanelKey, std::map<std::string, std::vector<std::pair<double, double>>>> panels;
  double inr_lo = 1e300, inr_hi = -1e300;
  for (const auto& r : rows) {
    snrs.insert(r.snr_db);
    quants.insert(r.quantized);
    ts.insert(r.t_iters);
    panels[{r.snr_db, r.quantized, r.t_iters}][r.estimator].emplace_back(r.inr_db, r.rate_bound_mean);
    inr_lo = std::min(inr_lo, r.inr_db);
    inr_hi = std::max(inr_hi, r.inr_db);
  }
  if (inr_hi <= inr_lo) inr_hi = inr_lo + 1.0;

  const int cols = static_cast<int>(ts.size());
  const int nrows = static_cast<int>(snrs.size() * quants.size());
  const double legend_h = 30;
  const double width = cols * kPanelW, height = nrows * kPanelH + legend_h;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  int row = 0;
  for (double snr : snrs)
    for (bool q : quants) {
      int col = 0;
      for (int t : ts) {
        const double ox = col * kPanelW, oy = row * kPanelH;
        const double pw = kPanelW - kMarginL - kMarginR, ph = kPanelH - kMarginT - kMarginB;
        const auto it = panels.find({snr, q, t});
        double ymax = 0.0;
        if (it != panels.end())
          for (const auto& [name, pts] : it->second)
            for (const auto& p : pts) ymax = std::max(ymax, p.second);
        ymax = nice_ceiling(ymax);
        auto px = [&](double inr) { return ox + kMarginL + pw * (inr - inr_lo) / (inr_hi - inr_lo); };
        auto py = [&](double rate) { return oy + kMarginT + ph * (1.0 - rate / ymax); };

        os << "<text x=\"" << ox + kPanelW / 2 << "\" y=\"" << oy + 16
           << "\" text-anchor=\"middle\">SNR " << num(snr) << " dB, T=" << t
           << (q ? ", quantized" : ", unquantized") << "</text>\n";
        os << "<rect x=\"" << ox + kMarginL << "\" y=\"" << oy + kMarginT << "\" width=\"" << pw
           << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";
        for (int k = 0; k <= 4; ++k) {
          const double rate = ymax * k / 4.0;
          os << "<line x1=\"" << ox + kMarginL << "\" x2=\"" << ox + kMarginL + pw << "\" y1=\""
             << py(rate) << "\" y2=\"" << py(rate) << "\" stroke=\"#ddd\"/>\n";
          os << "<text x=\"" << ox + kMarginL - 4 << "\" y=\"" << py(rate) + 4
             << "\" text-anchor=\"end\">" << num(rate) << "</text>\n";
        }
        std::set<double> inrs;
        if (it != panels.end())
          for (const auto& [name, pts] : it->second)
            for (const auto& p : pts) inrs.insert(p.first);
        for (double inr : inrs)
          os << "<text x=\"" << px(inr) << "\" y=\"" << oy + kMarginT + ph + 14
             << "\" text-anchor=\"middle\">" << num(inr) << "</text>\n";
        os << "<text x=\"" << ox + kMarginL + pw / 2 << "\" y=\"" << oy + kPanelH - 6
           << "\" text-anchor=\"middle\">INR (dB)</text>\n";
        os << "<text transform=\"translate(" << ox + 12 << ',' << oy + kMarginT + ph / 2
           << ") rotate(-90)\" text-anchor=\"middle\">rate (bits)</text>\n";

        if (it != panels.end())
          for (std::size_t e = 0; e < estimators.size(); ++e) {
            const auto found = it->second.find(estimator_name(estimators[e]));
            if (found == it->second.end()) continue;
            auto pts = found->second;
            std::sort(pts.begin(), pts.end());
            const char* color = kColors[e % std::size(kColors)];
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
            for (const auto& p : pts) os << px(p.first) << ',' << py(p.second) << ' ';
            os << "\"/>\n";
            for (const auto& p : pts)
              os << "<circle cx=\"" << px(p.first) << "\" cy=\"" << py(p.second)
                 << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
          }
        ++col;
      }
      ++row;
    }

  double lx = 10;
  const double ly = height - legend_h / 2;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    const char* color = kColors[e % std::size(kColors)];
    os << "<line x1=\"" << lx << "\" x2=\"" << lx + 20 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 24 << "\" y=\"" << ly + 4 << "\">" << estimator_name(estimators[e])
       << "</text>\n";
    lx += 110;
  }
  os << "</svg>\n";
  return os.str();
}

void write_rate_plot(const std::vector<ResultRow>& rows, const std::vector<Estimator>& estimators,
                     const std::filesystem::path& path) {
  const std::string svg = render_rate_plot(rows, estimators);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write plot: " + path.string());
  os << svg;
}

}  // namespace lmlvamp::harness
