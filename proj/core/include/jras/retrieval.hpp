#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jras/autograd.hpp"
#include "jras/nn.hpp"

namespace jras {

inline constexpr int kDefaultEmbeddingDim = 128;

struct RetrievalModelConfig {
  int in_channels = 3;
  // One stride-2 3x3 conv per entry.
  std::vector<int> stage_channels{8, 16, 32, 32};
  int hidden = 64;
  int embedding_dim = kDefaultEmbeddingDim;
  std::uint64_t seed = 0;
};

// Conv tower -> global average pool -> 2-layer MLP head -> L2 normalisation.
class RetrievalModel {
 public:
  RetrievalModel() = default;
  explicit RetrievalModel(const RetrievalModelConfig& cfg);

  // {3,H,W} -> unit-norm {D}. Differentiable in the parameters unless a
  // NoGradGuard is active. Throws NumericError on non-finite input.
  ag::Var embed(const ag::Var& image) const;
  Tensor embed_value(const Tensor& image) const;  // inference mode

  nn::ParameterList parameters();
  nn::ParameterList head_parameters();
  int embedding_dim() const noexcept { return cfg_.embedding_dim; }
  const RetrievalModelConfig& config() const noexcept { return cfg_; }

 private:
  RetrievalModelConfig cfg_;
  std::vector<nn::Conv2d> stages_;
  nn::Linear fc1_;
  nn::Linear fc2_;
};

// Tensors of shape {D}.
double cosine_sim(const Tensor& a, const Tensor& b);

struct RetrievalConfig {
  int k = 2;
  bool dynamic = false;
  double theta_threshold = 0.5;
  int k_min = 1;
  int k_max = 10;
  double contrastive_tau = 0.07;

  // Throws ArgumentError describing the first violated constraint.
  void validate() const;
};

// max(k_min, min(#{s > theta}, k_max)).
int dynamic_k(std::span<const double> similarities, double theta_threshold, int k_min, int k_max);

}  // namespace jras
