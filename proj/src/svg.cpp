#include "carflow/svg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "carflow/errors.hpp"

namespace carflow {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 640;
constexpr int kMarginLeft = 56;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 32;
constexpr int kMarginBottom = 44;

void put_fixed(std::string& out, double v, int precision = 2) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  out.append(buf, res.ptr);
}

void put_short(std::string& out, double v) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x_min, x_max, y_min, y_max;

  double px(double x) const {
    return kMarginLeft + (x - x_min) / (x_max - x_min) * (kWidth - kMarginLeft - kMarginRight);
  }
  double py(double y) const {
    return kHeight - kMarginBottom -
           (y - y_min) / (y_max - y_min) * (kHeight - kMarginTop - kMarginBottom);
  }
};

std::string header() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " + std::to_string(kWidth) +
         ' ' + std::to_string(kHeight) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void put_title(std::string& out, const std::string& title) {
  out += "<text x=\"" + std::to_string(kWidth / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         escape(title) + "</text>\n";
}

// Axes box plus 5 evenly spaced ticks per axis, labels in shortest form.
void put_axes(std::string& out, const Frame& f) {
  out += "<rect x=\"" + std::to_string(kMarginLeft) + "\" y=\"" + std::to_string(kMarginTop) +
         "\" width=\"" + std::to_string(kWidth - kMarginLeft - kMarginRight) + "\" height=\"" +
         std::to_string(kHeight - kMarginTop - kMarginBottom) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = f.x_min + (f.x_max - f.x_min) * i / 4.0;
    const double fy = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    out += "<line x1=\"";
    put_fixed(out, f.px(fx));
    out += "\" y1=\"" + std::to_string(kHeight - kMarginBottom) + "\" x2=\"";
    put_fixed(out, f.px(fx));
    out += "\" y2=\"" + std::to_string(kHeight - kMarginBottom + 5) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"";
    put_fixed(out, f.px(fx));
    out += "\" y=\"" + std::to_string(kHeight - kMarginBottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">";
    put_short(out, fx);
    out += "</text>\n";
    out += "<line x1=\"" + std::to_string(kMarginLeft - 5) + "\" y1=\"";
    put_fixed(out, f.py(fy));
    out += "\" x2=\"" + std::to_string(kMarginLeft) + "\" y2=\"";
    put_fixed(out, f.py(fy));
    out += "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + std::to_string(kMarginLeft - 8) + "\" y=\"";
    put_fixed(out, f.py(fy) + 4.0);
    out += "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">";
    put_short(out, fy);
    out += "</text>\n";
  }
}

// Three-stop viridis-like ramp, integer channels for byte stability.
void put_color(std::string& out, double u) {
  u = std::clamp(u, 0.0, 1.0);
  const int stops[3][3] = {{68, 1, 84}, {33, 145, 140}, {253, 231, 37}};
  const double seg = u * 2.0;
  const int lo = seg < 1.0 ? 0 : 1;
  const double f = seg - lo;
  out += "rgb(";
  for (int c = 0; c < 3; ++c) {
    const int v = static_cast<int>(std::lround(stops[lo][c] + f * (stops[lo + 1][c] - stops[lo][c])));
    out += std::to_string(v);
    if (c < 2) out += ',';
  }
  out += ')';
}

}  // namespace

std::string svg_scatter(const std::vector<Eigen::Vector2d>& pts, double x_min, double x_max,
                        double y_min, double y_max, const std::string& title) {
  if (!(x_max > x_min) || !(y_max > y_min)) throw ConfigError("scatter bounds must be increasing");
  const Frame f{x_min, x_max, y_min, y_max};
  std::string out = header();
  put_title(out, title);
  put_axes(out, f);
  for (const auto& p : pts) {
    if (p(0) < x_min || p(0) > x_max || p(1) < y_min || p(1) > y_max) continue;
    out += "<circle cx=\"";
    put_fixed(out, f.px(p(0)));
    out += "\" cy=\"";
    put_fixed(out, f.py(p(1)));
    out += "\" r=\"2\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string svg_heatmap(const Grid& grid, const std::string& title) {
  const Frame f{grid.spec.x_min, grid.spec.x_max, grid.spec.y_min, grid.spec.y_max};
  double lo = grid.values.minCoeff();
  double hi = grid.values.maxCoeff();
  if (!(hi > lo)) hi = lo + 1.0;
  const double cw = (f.px(grid.spec.x_max) - f.px(grid.spec.x_min)) / (grid.spec.nx - 1);
  const double ch = (f.py(grid.spec.y_min) - f.py(grid.spec.y_max)) / (grid.spec.ny - 1);
  std::string out = header();
  put_title(out, title);
  for (int iy = 0; iy < grid.spec.ny; ++iy) {
    for (int ix = 0; ix < grid.spec.nx; ++ix) {
      // cells centered on lattice points
      out += "<rect class=\"cell\" x=\"";
      put_fixed(out, f.px(grid_x(grid.spec, ix)) - 0.5 * cw);
      out += "\" y=\"";
      put_fixed(out, f.py(grid_y(grid.spec, iy)) - 0.5 * ch);
      out += "\" width=\"";
      put_fixed(out, cw);
      out += "\" height=\"";
      put_fixed(out, ch);
      out += "\" fill=\"";
      put_color(out, (grid.values(iy, ix) - lo) / (hi - lo));
      out += "\"/>\n";
    }
  }
  put_axes(out, f);
  out += "</svg>\n";
  return out;
}

std::string svg_line(const std::vector<std::pair<double, double>>& series,
                     const std::string& title) {
  if (series.size() < 2) throw ConfigError("line plot needs at least two points");
  double x_min = series.front().first, x_max = x_min;
  double y_min = series.front().second, y_max = y_min;
  for (const auto& [x, y] : series) {
    x_min = std::min(x_min, x); x_max = std::max(x_max, x);
    y_min = std::min(y_min, y); y_max = std::max(y_max, y);
  }
  if (!(x_max > x_min)) x_max = x_min + 1.0;
  if (!(y_max > y_min)) y_max = y_min + 1.0;
  const Frame f{x_min, x_max, y_min, y_max};
  std::string out = header();
  put_title(out, title);
  put_axes(out, f);
  out += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i) out += ' ';
    put_fixed(out, f.px(series[i].first));
    out += ',';
    put_fixed(out, f.py(series[i].second));
  }
  out += "\"/>\n</svg>\n";
  return out;
}

void save_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

}  // namespace carflow
