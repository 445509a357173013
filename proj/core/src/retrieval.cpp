#include "jras/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "jras/errors.hpp"

namespace jras {

RetrievalModel::RetrievalModel(const RetrievalModelConfig& cfg) : cfg_(cfg) {
  if (cfg.stage_channels.empty() || cfg.embedding_dim < 1 || cfg.hidden < 1 || cfg.in_channels < 1) {
    throw ArgumentError("RetrievalModel: empty tower or non-positive width");
  }
  std::mt19937_64 rng(cfg.seed);
  int in = cfg.in_channels;
  for (int out : cfg.stage_channels) {
    stages_.emplace_back(in, out, 3, 2, 1, rng);
    in = out;
  }
  fc1_ = nn::Linear(in, cfg.hidden, rng);
  fc2_ = nn::Linear(cfg.hidden, cfg.embedding_dim, rng);
}

ag::Var RetrievalModel::embed(const ag::Var& image) const {
  if (image.value().rank() != 3 || image.shape()[0] != cfg_.in_channels) {
    throw ArgumentError("embed: expected {" + std::to_string(cfg_.in_channels) + ",H,W}, got " +
                        shape_to_string(image.shape()));
  }
  if (!image.value().all_finite()) throw NumericError("embed: non-finite input image");
  ag::Var h = image;
  for (const auto& conv : stages_) h = ag::relu(conv(h));
  h = ag::global_avg_pool(h);
  h = ag::relu(fc1_(h));
  return ag::l2_normalize(fc2_(h));
}

Tensor RetrievalModel::embed_value(const Tensor& image) const {
  ag::NoGradGuard guard;
  return embed(ag::constant(image)).value();
}

nn::ParameterList RetrievalModel::parameters() {
  nn::ParameterList out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    nn::append(out, "", stages_[i].parameters("encoder.conv" + std::to_string(i) + "."));
  }
  nn::append(out, "", head_parameters());
  return out;
}

nn::ParameterList RetrievalModel::head_parameters() {
  nn::ParameterList out;
  nn::append(out, "", fc1_.parameters("head.fc1."));
  nn::append(out, "", fc2_.parameters("head.fc2."));
  return out;
}

double cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || a.shape() != b.shape()) {
    throw ArgumentError("cosine_sim: dimension mismatch " + shape_to_string(a.shape()) + " vs " +
                        shape_to_string(b.shape()));
  }
  return dot(a, b);
}

void RetrievalConfig::validate() const {
  if (!dynamic && k < 0) throw ArgumentError("retrieval k must be >= 0");
  if (k_min < 1) throw ArgumentError("k_min must be >= 1");
  if (k_min > k_max) throw ArgumentError("k_min must not exceed k_max");
  if (!(theta_threshold > -1.0 && theta_threshold < 1.0)) {
    throw ArgumentError("theta_threshold must lie in (-1, 1)");
  }
  if (!(contrastive_tau > 0.0)) throw ArgumentError("contrastive_tau must be > 0");
}

int dynamic_k(std::span<const double> similarities, double theta_threshold, int k_min, int k_max) {
  if (k_min > k_max) throw ArgumentError("dynamic_k: k_min > k_max");
  const auto above = std::count_if(similarities.begin(), similarities.end(),
                                   [&](double s) { return s > theta_threshold; });
  return std::max<int>(k_min, static_cast<int>(std::min<std::ptrdiff_t>(above, k_max)));
}

}  // namespace jras
