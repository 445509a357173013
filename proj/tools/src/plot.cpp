#include "jras_cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "jras/errors.hpp"

namespace jras::cli {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kLeft = 70;
constexpr int kRight = 150;  // legend column
constexpr int kTop = 40;
constexpr int kBottom = 60;

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range padded(double lo, double hi) {
  if (!(lo <= hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

// Maps data coordinates into the plot area.
struct Frame {
  Range x, y;
  double px(double v) const {
    return kLeft + (v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight);
  }
  double py(double v) const {
    return kHeight - kBottom - (v - y.lo) / (y.hi - y.lo) * (kHeight - kTop - kBottom);
  }
};

Frame line_frame(const LineChart& c) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : c.series)
    for (auto [x, y] : s.points) {
      xlo = std::min(xlo, x), xhi = std::max(xhi, x);
      ylo = std::min(ylo, y), yhi = std::max(yhi, y);
    }
  return {padded(xlo, xhi), padded(ylo, yhi)};
}

Range bar_range(const BarChart& c) {
  double lo = 0.0, hi = 0.0;
  for (const auto& g : c.values)
    for (double v : g) lo = std::min(lo, v), hi = std::max(hi, v);
  if (hi - lo < 1e-12) hi = lo + 1.0;
  return {lo, hi + 0.05 * (hi - lo)};
}

std::string svg_open(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" +
         std::to_string(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         esc(title) + "</text>\n";
}

std::string svg_axes(const Frame& f, const std::string& xl, const std::string& yl, bool x_ticks) {
  std::string s;
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(f.py(v) + 4) + "\" text-anchor=\"end\">" + num(v) +
         "</text>\n";
    if (x_ticks) {
      const double u = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
      s += "<text x=\"" + num(f.px(u)) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" + num(u) +
           "</text>\n";
    }
  }
  s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 15.0) + "\" text-anchor=\"middle\">" +
       esc(xl) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((y0 + y1) / 2) + ")\">" + esc(yl) + "</text>\n";
  return s;
}

std::string svg_legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const int y = kTop + 18 * static_cast<int>(i);
    const Rgb c = palette()[i % palette().size()];
    s += "<rect x=\"" + std::to_string(kWidth - kRight + 12) + "\" y=\"" + std::to_string(y) +
         "\" width=\"10\" height=\"10\" fill=\"" + hex(c) + "\"/>\n";
    s += "<text x=\"" + std::to_string(kWidth - kRight + 28) + "\" y=\"" + std::to_string(y + 10) + "\">" +
         esc(names[i]) + "</text>\n";
  }
  return s;
}

void raster_axes(Raster& r) {
  const Rgb black{0, 0, 0};
  r.line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, black);
  r.line(kLeft, kHeight - kBottom, kLeft, kTop, black);
}

void raster_legend(Raster& r, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const int y = kTop + 18 * static_cast<int>(i);
    r.fill_rect(kWidth - kRight + 12, y, kWidth - kRight + 22, y + 10, palette()[i % palette().size()]);
  }
}

}  // namespace

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw ArgumentError("Raster: empty size");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) std::copy(fill.begin(), fill.end(), &pixels_[i]);
}

void Raster::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  std::copy(c.begin(), c.end(), &pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3]);
}

Rgb Raster::get(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Raster::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) set(x, y, c);
}

void Raster::line(int x0, int y0, int x1, int y1, Rgb c) {
  // Bresenham.
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) err += dy, x0 += sx;
    if (e2 <= dx) err += dx, y0 += sy;
  }
}

std::string Raster::to_ppm() const {
  std::string out = "P6\n" + std::to_string(width_) + " " + std::to_string(height_) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels_.data()), pixels_.size());
  return out;
}

const std::vector<Rgb>& palette() {
  static const std::vector<Rgb> p = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
                                     {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
  return p;
}

std::string render_svg(const LineChart& c) {
  const Frame f = line_frame(c);
  std::string s = svg_open(c.title) + svg_axes(f, c.x_label, c.y_label, true);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c.series.size(); ++i) {
    const auto& ser = c.series[i];
    const std::string col = hex(palette()[i % palette().size()]);
    std::string pts;
    for (auto [x, y] : ser.points) pts += num(f.px(x)) + "," + num(f.py(y)) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + col + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (auto [x, y] : ser.points) {
      s += "<circle cx=\"" + num(f.px(x)) + "\" cy=\"" + num(f.py(y)) + "\" r=\"3\" fill=\"" + col + "\"/>\n";
    }
    names.push_back(ser.name);
  }
  if (c.series.empty()) {
    s += "<text x=\"" + std::to_string(kWidth / 2) + "\" y=\"" + std::to_string(kHeight / 2) +
         "\" text-anchor=\"middle\">no data</text>\n";
  }
  return s + svg_legend(names) + "</svg>\n";
}

std::string render_svg(const BarChart& c) {
  const Range yr = bar_range(c);
  const Frame f{{0.0, std::max<double>(1.0, static_cast<double>(c.categories.size()))}, yr};
  std::string s = svg_open(c.title) + svg_axes(f, "", c.y_label, false);
  const double slot = f.px(1.0) - f.px(0.0);
  const double bar = slot * 0.8 / std::max<std::size_t>(1, c.groups.size());
  for (std::size_t k = 0; k < c.categories.size(); ++k) {
    s += "<text x=\"" + num(f.px(k + 0.5)) + "\" y=\"" + num(kHeight - kBottom + 16.0) +
         "\" text-anchor=\"middle\">" + esc(c.categories[k]) + "</text>\n";
    for (std::size_t g = 0; g < c.groups.size(); ++g) {
      const double v = c.values[g][k];
      const double x = f.px(static_cast<double>(k)) + slot * 0.1 + bar * g;
      const double y0 = f.py(0.0), y1 = f.py(v);
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(std::min(y0, y1)) + "\" width=\"" + num(bar) +
           "\" height=\"" + num(std::abs(y0 - y1)) + "\" fill=\"" + hex(palette()[g % palette().size()]) +
           "\"><title>" + esc(c.groups[g]) + " " + esc(c.categories[k]) + ": " + num(v) + "</title></rect>\n";
    }
  }
  return s + svg_legend(c.groups) + "</svg>\n";
}

std::string render_ppm(const LineChart& c) {
  const Frame f = line_frame(c);
  Raster r(kWidth, kHeight);
  raster_axes(r);
  for (std::size_t i = 0; i < c.series.size(); ++i) {
    const Rgb col = palette()[i % palette().size()];
    const auto& pts = c.series[i].points;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const int x = static_cast<int>(std::lround(f.px(pts[p].first)));
      const int y = static_cast<int>(std::lround(f.py(pts[p].second)));
      r.fill_rect(x - 2, y - 2, x + 3, y + 3, col);
      if (p > 0) {
        r.line(static_cast<int>(std::lround(f.px(pts[p - 1].first))),
               static_cast<int>(std::lround(f.py(pts[p - 1].second))), x, y, col);
      }
    }
  }
  raster_legend(r, c.series.size());
  return r.to_ppm();
}

std::string render_ppm(const BarChart& c) {
  const Range yr = bar_range(c);
  const Frame f{{0.0, std::max<double>(1.0, static_cast<double>(c.categories.size()))}, yr};
  Raster r(kWidth, kHeight);
  const double slot = f.px(1.0) - f.px(0.0);
  const double bar = slot * 0.8 / std::max<std::size_t>(1, c.groups.size());
  for (std::size_t k = 0; k < c.categories.size(); ++k)
    for (std::size_t g = 0; g < c.groups.size(); ++g) {
      const double x = f.px(static_cast<double>(k)) + slot * 0.1 + bar * g;
      r.fill_rect(static_cast<int>(x), static_cast<int>(f.py(0.0)), static_cast<int>(x + bar),
                  static_cast<int>(f.py(c.values[g][k])), palette()[g % palette().size()]);
    }
  raster_axes(r);
  raster_legend(r, c.groups.size());
  return r.to_ppm();
}

Raster overlay_panel(const Tensor& image, const LabelMap& mask, int scale) {
  const int h = mask.height(), w = mask.width();
  if (image.rank() != 2 || image.shape()[0] != h || image.shape()[1] != w || scale < 1) {
    throw ArgumentError("overlay_panel: image and mask sizes differ");
  }
  static const Rgb tint[] = {{0, 0, 0}, {230, 60, 60}, {60, 200, 60}, {60, 120, 240}};
  Raster r(w * scale, h * scale);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = std::clamp(image.at(y, x), 0.0, 1.0) * 255.0;
      Rgb c{};
      const int label = mask.at(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        const double t = label == 0 ? g : 0.55 * g + 0.45 * tint[1 + (label - 1) % 3][ch];
        c[ch] = static_cast<std::uint8_t>(std::lround(t));
      }
      r.fill_rect(x * scale, y * scale, (x + 1) * scale, (y + 1) * scale, c);
    }
  return r;
}

Raster hstack(const std::vector<Raster>& panels, int gap) {
  if (panels.empty()) throw ArgumentError("hstack: no panels");
  int w = 0, h = 0;
  for (const auto& p : panels) w += p.width(), h = std::max(h, p.height());
  w += gap * static_cast<int>(panels.size() - 1);
  Raster out(w, h);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < p.height(); ++y)
      for (int x = 0; x < p.width(); ++x) out.set(x0 + x, y, p.get(x, y));
    x0 += p.width() + gap;
  }
  return out;
}

}  // namespace jras::cli
