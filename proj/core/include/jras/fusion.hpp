#pragma once

#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jras/autograd.hpp"
#include "jras/dataset.hpp"
#include "jras/knowledge_base.hpp"
#include "jras/nn.hpp"

namespace jras {

enum class FusionStrategy { Early, CrossAttention, DualEncoder };

std::string_view fusion_strategy_name(FusionStrategy s) noexcept;  // early / xattn / dual
FusionStrategy parse_fusion_strategy(std::string_view text);

struct FusionConfig {
  double tau_fusion = 0.1;
  FusionStrategy strategy = FusionStrategy::Early;
  void validate() const;
};

// softmax(sim / tau) with max subtraction.
std::vector<double> fusion_weights(std::span<const double> similarities, double tau);
ag::Var fusion_weights(const ag::Var& similarities, double tau);

struct FusedGuide {
  ag::Var image;  // {3,H,W}
  ag::Var mask;   // {1,H,W}, values in [0,1]
};

// image = sum w_i I_i, mask = sum w_i M_i / (C-1). Differentiable in weights.
FusedGuide fuse_guides(const std::vector<Tensor>& images, const std::vector<LabelMap>& masks,
                       const ag::Var& weights, int num_classes);
FusedGuide fuse_guides(const std::vector<RetrievalHit>& hits, const ag::Var& weights,
                       int num_classes);

// Label map -> {1,H,W} with values label / (C-1).
Tensor scaled_mask(const LabelMap& mask, int num_classes);

inline constexpr int kFusedChannels = 7;

// Pointwise 7 -> 3 projection. Starts as the identity on the query channels.
class Adapter {
 public:
  Adapter();
  ag::Var operator()(const ag::Var& raw) const { return conv_(raw); }
  nn::ParameterList parameters(const std::string& prefix);
  nn::Conv2d& conv() noexcept { return conv_; }
  const nn::Conv2d& conv() const noexcept { return conv_; }

 private:
  nn::Conv2d conv_;
};

struct FusedInput {
  ag::Var raw;        // {7,H,W}: query RGB, guide RGB, guide mask
  ag::Var projected;  // {3,H,W}
};

FusedInput early_fuse(const ag::Var& query, const FusedGuide& guide, const Adapter& adapter);

// Single-head residual attention from query positions to guide positions.
// The output projection starts at zero so the block starts as the identity.
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(int channels, std::mt19937_64& rng);

  // {C,h,w} x {C,h',w'} -> {C,h,w}
  ag::Var operator()(const ag::Var& query_features, const ag::Var& guide_features) const;
  // {h*w, h'*w'} row-stochastic attention matrix.
  Tensor attention_weights(const Tensor& query_features, const Tensor& guide_features) const;
  nn::ParameterList parameters(const std::string& prefix);

  nn::Linear wq, wk, wv, wo;

 private:
  ag::Var attention(const ag::Var& q_tokens, const ag::Var& g_tokens) const;
};

// Guide features times the guide mask average-pooled to their resolution,
// concatenated after the query features: {2C,h,w}.
ag::Var dual_encoder_fuse(const ag::Var& query_features, const ag::Var& guide_features,
                          const ag::Var& guide_mask);

}  // namespace jras
