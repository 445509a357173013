#pragma once

// Dependency-free static plots: SVG with labels, PPM raster without text.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "jras/dataset.hpp"

namespace jras::cli {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

// categories along x; one bar per group inside each category.
struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<std::string> groups;
  std::vector<std::vector<double>> values;  // [group][category]
};

using Rgb = std::array<std::uint8_t, 3>;

class Raster {
 public:
  Raster(int width, int height, Rgb fill = {255, 255, 255});
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  void set(int x, int y, Rgb c);  // silently clipped
  Rgb get(int x, int y) const;
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  std::string to_ppm() const;  // binary P6

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

const std::vector<Rgb>& palette();

std::string render_svg(const LineChart& chart);
std::string render_svg(const BarChart& chart);
std::string render_ppm(const LineChart& chart);
std::string render_ppm(const BarChart& chart);

// Grayscale {H,W} image in [0,1] with the foreground labels tinted.
Raster overlay_panel(const Tensor& image, const LabelMap& mask, int scale);
// Panels side by side with a small gap.
Raster hstack(const std::vector<Raster>& panels, int gap = 4);

}  // namespace jras::cli
