#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dipstop/error.hpp"
#include "dipstop/harness.hpp"

namespace dipstop {

namespace {

// Fixed layout; the plot test mirrors these when it inverts coordinates.
constexpr double kW = 960, kH = 540;
constexpr double kLeft = 60, kRight = 20, kTop = 46, kBottom = 50;
constexpr double kPlotW = kW - kLeft - kRight;
constexpr double kPlotH = kH - kTop - kBottom;

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double x_of(double iter, int n) {
  return kLeft + (iter - 1.0) / (n - 1.0) * kPlotW;
}

double y_of(double unit) { return kTop + (1.0 - unit) * kPlotH; }

// One polyline from normalized values; x positions start at `first_iter`.
std::string polyline(const char* id, const char* color,
                     const std::vector<double>& unit, int first_iter, int n) {
  std::string pts;
  pts.reserve(unit.size() * 14);
  for (size_t k = 0; k < unit.size(); ++k) {
    pts += f2(x_of(first_iter + static_cast<double>(k), n));
    pts += ',';
    pts += f2(y_of(unit[k]));
    pts += ' ';
  }
  std::string s = "  <polyline id=\"";
  s += id;
  s += "\" fill=\"none\" stroke=\"";
  s += color;
  s += "\" stroke-width=\"1.5\" points=\"";
  s += pts;
  s += "\"/>\n";
  return s;
}

}  // namespace

void emit_plot(const RunRecord& rec, const std::string& path) {
  if (rec.curvature.size() < 2)
    throw InvalidArgument("emit_plot: need at least two curvature values");
  const int n = rec.iterations;
  const int first_curv_iter = rec.config.monitor.curvature_half_window +
                              rec.config.monitor.mean_half_window + 1;

  const std::vector<double> e_n = minmax_normalize(rec.e);
  const std::vector<double> c_n = minmax_normalize(rec.curvature);
  std::vector<double> p_n;
  if (!rec.psnr_track.empty()) p_n = minmax_normalize(rec.psnr_track);

  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\""
    << kH << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  f << "  <rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"#ffffff\"/>\n";
  f << "  <text x=\"" << kLeft << "\" y=\"24\" font-family=\"sans-serif\" "
       "font-size=\"15\" fill=\"#222\">pseudo-noise component, curvature"
    << (p_n.empty() ? "" : ", psnr") << " (each min-max normalized)</text>\n";

  // frame and y ticks at 0, 1/2, 1
  f << "  <rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW
    << "\" height=\"" << kPlotH << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (double v : {0.0, 0.5, 1.0}) {
    f << "  <line x1=\"" << kLeft << "\" y1=\"" << f2(y_of(v)) << "\" x2=\""
      << kLeft + kPlotW << "\" y2=\"" << f2(y_of(v))
      << "\" stroke=\"#e0e0e0\"/>\n";
    f << "  <text x=\"" << kLeft - 8 << "\" y=\"" << f2(y_of(v) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
         "fill=\"#555\">"
      << f2(v) << "</text>\n";
  }
  // x ticks: five evenly spaced iteration labels
  for (int t = 0; t <= 4; ++t) {
    const int it = 1 + static_cast<int>((static_cast<long long>(n) - 1) * t / 4);
    f << "  <text x=\"" << f2(x_of(it, n)) << "\" y=\"" << kTop + kPlotH + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
         "fill=\"#555\">"
      << it << "</text>\n";
  }
  f << "  <text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
       "fill=\"#555\">iteration</text>\n";

  f << polyline("e", "#1f77b4", e_n, 1, n);
  f << polyline("curvature", "#ff7f0e", c_n, first_curv_iter, n);
  if (!p_n.empty()) f << polyline("psnr", "#2ca02c", p_n, 1, n);

  // stop marker
  const double mx = x_of(rec.stop_iteration, n);
  f << "  <line id=\"stop\" x1=\"" << f2(mx) << "\" y1=\"" << kTop << "\" x2=\""
    << f2(mx) << "\" y2=\"" << kTop + kPlotH
    << "\" stroke=\"#d62728\" stroke-dasharray=\"5 3\" stroke-width=\"1.5\"/>\n";
  f << "  <text x=\"" << f2(mx + 5) << "\" y=\"" << kTop + 14
    << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">i* = "
    << rec.stop_iteration << "</text>\n";

  // legend, right-aligned on the title row
  double lx = kW - kRight - 330;
  auto legend = [&](const char* color, const char* label) {
    f << "  <line x1=\"" << f2(lx) << "\" y1=\"20\" x2=\"" << f2(lx + 22)
      << "\" y2=\"20\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    f << "  <text x=\"" << f2(lx + 27) << "\" y=\"24\" font-family=\"sans-serif\" "
         "font-size=\"12\" fill=\"#333\">"
      << label << "</text>\n";
    lx += 110;
  };
  legend("#1f77b4", "e");
  legend("#ff7f0e", "curvature");
  if (!p_n.empty()) legend("#2ca02c", "psnr");

  f << "</svg>\n";
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace dipstop
