#pragma once

#include <cstdint>
#include <string_view>

#include "jras/fusion.hpp"
#include "jras/tensor.hpp"

namespace jras {

enum class NoiseKind { None, Gaussian, SaltPepper, Dropout };

std::string_view noise_kind_name(NoiseKind k) noexcept;  // none / gaussian / sp / dropout
NoiseKind parse_noise_kind(std::string_view text);

struct NoiseConfig {
  NoiseKind kind = NoiseKind::None;
  double sigma = 0.1;
  double density = 0.05;
  double drop_rate = 0.1;
  std::uint64_t seed = 0;
  void validate() const;
};

// Additive N(0, sigma^2) per element, clamped to [0,1].
Tensor add_gaussian(const Tensor& image, double sigma, std::uint64_t seed);
// Each spatial pixel is hit with probability `density` and set to 0 or 1
// with equal odds. For {C,H,W} all channels of a pixel share the outcome.
Tensor add_salt_pepper(const Tensor& image, double density, std::uint64_t seed);
// Each spatial pixel zeroed with probability `drop_rate`.
Tensor add_dropout(const Tensor& image, double drop_rate, std::uint64_t seed);

// Noise on a fused guide. GAUSSIAN touches the image only; SALT_PEPPER and
// DROPOUT hit image and mask at the same pixels. Gradients still reach the
// fusion weights through every pixel the noise left affine. `stream` picks
// an independent noise draw per query.
FusedGuide apply_guide_noise(const FusedGuide& guide, const NoiseConfig& cfg, std::uint64_t stream);

}  // namespace jras
