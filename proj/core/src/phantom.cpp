#include "jras/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "jras/errors.hpp"

namespace jras {

namespace {

struct PatientGeometry {
  double cx, cy;
  double r_lv, thickness, r_rv;
  double rv_angle, rv_offset;
  double drift_angle;
  double i_bg, i_rv, i_myo, i_lv, noise_sigma;
  double texture_fx, texture_fy, texture_phase;
};

struct SliceGeometry {
  double cx, cy, r_lv, r_outer, rv_cx, rv_cy, r_rv;
};

PatientGeometry draw_patient(std::mt19937_64& rng, int h, int w) {
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double m = std::min(h, w);
  PatientGeometry g{};
  g.cx = w / 2.0 + u(-0.06, 0.06) * w;
  g.cy = h / 2.0 + u(-0.06, 0.06) * h;
  g.r_lv = m * u(0.10, 0.14);
  g.thickness = m * u(0.05, 0.07);
  g.r_rv = (g.r_lv + g.thickness) * u(1.0, 1.25);
  g.rv_angle = std::numbers::pi + u(-0.4, 0.4);
  g.rv_offset = (g.r_lv + g.thickness) * u(0.6, 0.85);
  g.drift_angle = u(0.0, 2.0 * std::numbers::pi);
  g.i_bg = u(0.08, 0.18);
  g.i_rv = u(0.62, 0.75);
  g.i_myo = u(0.30, 0.40);
  g.i_lv = u(0.82, 0.95);
  g.noise_sigma = u(0.03, 0.06);
  g.texture_fx = u(0.5, 2.0) * 2.0 * std::numbers::pi / w;
  g.texture_fy = u(0.5, 2.0) * 2.0 * std::numbers::pi / h;
  g.texture_phase = u(0.0, 2.0 * std::numbers::pi);
  return g;
}

// Basal slices are large, apical ones small; ES contracts the LV cavity and
// thickens the wall.
SliceGeometry slice_geometry(const PatientGeometry& g, Phase phase, int index, int count,
                             int h, int w) {
  const double t = count > 1 ? static_cast<double>(index) / (count - 1) : 0.5;
  const double scale = 1.1 - 0.35 * t;
  const double m = std::min(h, w);
  const bool es = phase == Phase::ES;
  SliceGeometry s{};
  s.cx = g.cx + 0.03 * m * t * std::cos(g.drift_angle);
  s.cy = g.cy + 0.03 * m * t * std::sin(g.drift_angle);
  s.r_lv = std::max(2.2, g.r_lv * scale * (es ? 0.72 : 1.0));
  s.r_outer = s.r_lv + std::max(2.2, g.thickness * scale * (es ? 1.25 : 1.0));
  s.r_rv = std::max(g.r_rv * scale * (es ? 0.85 : 1.0), s.r_outer * 1.05);
  const double off = g.rv_offset * scale;
  s.rv_cx = s.cx + off * std::cos(g.rv_angle);
  s.rv_cy = s.cy + off * std::sin(g.rv_angle);
  return s;
}

LabelMap render_mask(const SliceGeometry& s, int h, int w) {
  LabelMap mask(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double d_lv = std::hypot(px - s.cx, py - s.cy);
      const double d_rv = std::hypot(px - s.rv_cx, py - s.rv_cy);
      std::uint8_t label = 0;
      if (d_lv <= s.r_lv) label = kLabelLV;
      else if (d_lv <= s.r_outer) label = kLabelMYO;
      else if (d_rv <= s.r_rv) label = kLabelRV;
      mask.at(y, x) = label;
    }
  }
  return mask;
}

// Every label present and forming exactly one 4-connected region.
bool well_formed(const LabelMap& mask) {
  const int h = mask.height(), w = mask.width();
  std::vector<int> seen(kToyNumClasses, 0);
  std::vector<char> visited(mask.size(), 0);
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (visited[static_cast<std::size_t>(start)]) continue;
    const std::uint8_t label = mask[static_cast<std::size_t>(start)];
    if (++seen[label] > 1) return false;
    stack.assign(1, start);
    visited[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / w, x = p % w;
      const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int q = n[0] * w + n[1];
        if (!visited[static_cast<std::size_t>(q)] && mask[static_cast<std::size_t>(q)] == label) {
          visited[static_cast<std::size_t>(q)] = 1;
          stack.push_back(q);
        }
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
}

Tensor render_image(const PatientGeometry& g, const LabelMap& mask, std::mt19937_64& rng) {
  const int h = mask.height(), w = mask.width();
  const double level[kToyNumClasses] = {g.i_bg, g.i_rv, g.i_myo, g.i_lv};
  std::normal_distribution<double> noise(0.0, g.noise_sigma);
  Tensor img({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t label = mask.at(y, x);
      double v = level[label] + noise(rng);
      if (label == 0) {
        v += 0.05 * std::sin(g.texture_fx * x + g.texture_fy * y + g.texture_phase);
      }
      img.at(y, x) = v;
    }
  }
  normalize_min_max(img);
  // Round to float32 so the on-disk encoding is lossless. 0 and 1 survive
  // exactly, so re-normalising at load is the identity.
  for (auto& v : img.values()) v = static_cast<float>(v);
  return img;
}

std::string patient_id(const ToySpec& spec, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", spec.id_offset + i);
  return spec.id_prefix + buf;
}

}  // namespace

Dataset generate_toy_dataset(const ToySpec& spec) {
  if (spec.num_patients < 2) {
    throw ArgumentError("generate_toy_dataset: num_patients must be >= 2 (retrieval needs "
                        "cross-patient guides), got " + std::to_string(spec.num_patients));
  }
  if (spec.height < 16 || spec.width < 16) {
    throw ArgumentError("generate_toy_dataset: H and W must be >= 16");
  }
  if (spec.slices_per_phase < 1) {
    throw ArgumentError("generate_toy_dataset: slices_per_phase must be >= 1");
  }
  if (spec.id_offset < 0 || spec.id_prefix.find_first_of("/_ \\") != std::string::npos) {
    throw ArgumentError("generate_toy_dataset: bad id prefix or offset");
  }
  constexpr int kMaxAttempts = 64;
  const int h = spec.height, w = spec.width, n = spec.slices_per_phase;
  std::vector<SliceRecord> slices;
  for (int p = 0; p < spec.num_patients; ++p) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(p)};
    std::mt19937_64 rng(seq);
    const std::string id = patient_id(spec, p);

    std::vector<std::pair<SliceRef, LabelMap>> masks;
    PatientGeometry geo{};
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      geo = draw_patient(rng, h, w);
      masks.clear();
      ok = true;
      for (Phase phase : {Phase::ED, Phase::ES}) {
        for (int s = 0; s < n && ok; ++s) {
          LabelMap m = render_mask(slice_geometry(geo, phase, s, n, h, w), h, w);
          ok = well_formed(m);
          masks.emplace_back(SliceRef{id, phase, s}, std::move(m));
        }
      }
    }
    if (!ok) {
      throw ArgumentError("generate_toy_dataset: could not place anatomy for " + id + " at " +
                          std::to_string(h) + "x" + std::to_string(w));
    }
    for (auto& [ref, mask] : masks) {
      SliceRecord rec;
      rec.ref = ref;
      rec.image = render_image(geo, mask, rng);
      rec.mask = std::move(mask);
      slices.push_back(std::move(rec));
    }
  }
  return Dataset(std::move(slices), kToyNumClasses);
}

}  // namespace jras
