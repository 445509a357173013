#include "jras/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "jras/errors.hpp"

namespace jras {

std::string_view noise_kind_name(NoiseKind k) noexcept {
  switch (k) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::SaltPepper: return "sp";
    case NoiseKind::Dropout: return "dropout";
    default: return "none";
  }
}

NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "none") return NoiseKind::None;
  if (text == "gaussian") return NoiseKind::Gaussian;
  if (text == "sp") return NoiseKind::SaltPepper;
  if (text == "dropout") return NoiseKind::Dropout;
  throw ArgumentError("unknown guide noise '" + std::string(text) + "' (none, gaussian, sp, dropout)");
}

namespace {

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError(std::string(what) + " must lie in [0, 1]");
}

void check_sigma(double s) {
  if (!(s >= 0.0) || !std::isfinite(s)) throw ArgumentError("gaussian sigma must be >= 0");
}

std::int64_t spatial_size(const Tensor& t) {
  if (t.rank() == 3) return t.dim(1) * t.dim(2);
  return t.numel();
}

// Per-pixel outcome: -1 untouched, otherwise the replacement value.
std::vector<double> pixel_pattern(std::int64_t n, double p, bool salt_pepper, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(n), -1.0);
  for (auto& v : out) {
    const bool hit = u(rng) < p;
    const bool salt = u(rng) < 0.5;
    if (hit) v = salt_pepper ? (salt ? 1.0 : 0.0) : 0.0;
  }
  return out;
}

Tensor apply_pattern(const Tensor& image, const std::vector<double>& pattern, Tensor* passthrough) {
  Tensor out = image;
  const auto n = static_cast<std::int64_t>(pattern.size());
  if (passthrough) *passthrough = Tensor(image.shape(), 1.0);
  for (std::int64_t i = 0; i < image.numel(); ++i) {
    const double v = pattern[static_cast<std::size_t>(i % n)];
    if (v >= 0.0) {
      out[i] = v;
      if (passthrough) (*passthrough)[i] = 0.0;
    }
  }
  return out;
}

Tensor gaussian_impl(const Tensor& image, double sigma, std::uint64_t seed, Tensor* passthrough) {
  Tensor out = image;
  if (passthrough) *passthrough = Tensor(image.shape(), 1.0);
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const double v = out[i] + nd(rng);
    out[i] = std::clamp(v, 0.0, 1.0);
    if (passthrough && (v < 0.0 || v > 1.0)) (*passthrough)[i] = 0.0;
  }
  return out;
}

}  // namespace

void NoiseConfig::validate() const {
  check_sigma(sigma);
  check_unit(density, "salt-and-pepper density");
  check_unit(drop_rate, "dropout rate");
}

Tensor add_gaussian(const Tensor& image, double sigma, std::uint64_t seed) {
  check_sigma(sigma);
  return gaussian_impl(image, sigma, seed, nullptr);
}

Tensor add_salt_pepper(const Tensor& image, double density, std::uint64_t seed) {
  check_unit(density, "salt-and-pepper density");
  return apply_pattern(image, pixel_pattern(spatial_size(image), density, true, seed), nullptr);
}

Tensor add_dropout(const Tensor& image, double drop_rate, std::uint64_t seed) {
  check_unit(drop_rate, "dropout rate");
  return apply_pattern(image, pixel_pattern(spatial_size(image), drop_rate, false, seed), nullptr);
}

FusedGuide apply_guide_noise(const FusedGuide& guide, const NoiseConfig& cfg, std::uint64_t stream) {
  if (cfg.kind == NoiseKind::None) return guide;
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 mix(seq);
  const std::uint64_t seed = mix();

  FusedGuide out;
  Tensor pass;
  if (cfg.kind == NoiseKind::Gaussian) {
    Tensor v = gaussian_impl(guide.image.value(), cfg.sigma, seed, &pass);
    out.image = ag::pointwise_override(guide.image, std::move(v), std::move(pass));
    out.mask = guide.mask;
    return out;
  }
  const bool sp = cfg.kind == NoiseKind::SaltPepper;
  const auto pattern = pixel_pattern(spatial_size(guide.mask.value()), sp ? cfg.density : cfg.drop_rate,
                                     sp, seed);
  Tensor vi = apply_pattern(guide.image.value(), pattern, &pass);
  out.image = ag::pointwise_override(guide.image, std::move(vi), std::move(pass));
  Tensor vm = apply_pattern(guide.mask.value(), pattern, &pass);
  out.mask = ag::pointwise_override(guide.mask, std::move(vm), std::move(pass));
  return out;
}

}  // namespace jras
