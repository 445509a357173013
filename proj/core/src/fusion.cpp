#include "jras/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "jras/errors.hpp"

namespace jras {

std::string_view fusion_strategy_name(FusionStrategy s) noexcept {
  switch (s) {
    case FusionStrategy::CrossAttention: return "xattn";
    case FusionStrategy::DualEncoder: return "dual";
    default: return "early";
  }
}

FusionStrategy parse_fusion_strategy(std::string_view text) {
  if (text == "early") return FusionStrategy::Early;
  if (text == "xattn") return FusionStrategy::CrossAttention;
  if (text == "dual") return FusionStrategy::DualEncoder;
  throw ArgumentError("unknown fusion strategy '" + std::string(text) + "' (early, xattn, dual)");
}

void FusionConfig::validate() const {
  if (!(tau_fusion > 0.0) || !std::isfinite(tau_fusion)) throw ArgumentError("tau_fusion must be > 0");
}

std::vector<double> fusion_weights(std::span<const double> similarities, double tau) {
  if (similarities.empty()) throw ArgumentError("fusion_weights: empty similarity list");
  if (!(tau > 0.0)) throw ArgumentError("fusion_weights: tau must be > 0");
  const double mx = *std::max_element(similarities.begin(), similarities.end());
  std::vector<double> w(similarities.size());
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) z += (w[i] = std::exp((similarities[i] - mx) / tau));
  for (auto& v : w) v /= z;
  return w;
}

ag::Var fusion_weights(const ag::Var& similarities, double tau) {
  if (similarities.value().rank() != 1 || similarities.numel() == 0) {
    throw ArgumentError("fusion_weights: empty similarity list");
  }
  if (!(tau > 0.0)) throw ArgumentError("fusion_weights: tau must be > 0");
  return ag::softmax(ag::scale(similarities, 1.0 / tau));
}

Tensor scaled_mask(const LabelMap& mask, int num_classes) {
  if (num_classes < 2) throw ArgumentError("scaled_mask: num_classes must be >= 2");
  const double inv = 1.0 / static_cast<double>(num_classes - 1);
  Tensor out({1, mask.height(), mask.width()});
  for (std::size_t i = 0; i < mask.size(); ++i) out[static_cast<std::int64_t>(i)] = mask[i] * inv;
  return out;
}

FusedGuide fuse_guides(const std::vector<Tensor>& images, const std::vector<LabelMap>& masks,
                       const ag::Var& weights, int num_classes) {
  if (images.empty() || images.size() != masks.size() ||
      static_cast<std::int64_t>(images.size()) != weights.numel()) {
    throw ArgumentError("fuse_guides: need equal, non-zero numbers of guides and weights");
  }
  std::vector<Tensor> scaled;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (images[i].rank() != 3 || images[i].dim(1) != masks[i].height() ||
        images[i].dim(2) != masks[i].width()) {
      throw ArgumentError("fuse_guides: guide " + std::to_string(i) + " image/mask shape mismatch");
    }
    scaled.push_back(scaled_mask(masks[i], num_classes));
  }
  FusedGuide g;
  g.image = ag::weighted_sum(weights, images);  // checks shapes agree across guides
  g.mask = ag::weighted_sum(weights, std::move(scaled));
  return g;
}

FusedGuide fuse_guides(const std::vector<RetrievalHit>& hits, const ag::Var& weights,
                       int num_classes) {
  std::vector<Tensor> images;
  std::vector<LabelMap> masks;
  for (const auto& h : hits) {
    images.push_back(h.entry->guide_image);
    masks.push_back(h.entry->guide_mask);
  }
  return fuse_guides(images, masks, weights, num_classes);
}

Adapter::Adapter() {
  std::mt19937_64 unused(0);
  conv_ = nn::Conv2d(kFusedChannels, 3, 1, 1, 0, unused);
  Tensor& w = conv_.weight.mutable_value();
  w.fill(0.0);
  for (int c = 0; c < 3; ++c) w[c * kFusedChannels + c] = 1.0;
  conv_.bias.mutable_value().fill(0.0);
}

nn::ParameterList Adapter::parameters(const std::string& prefix) { return conv_.parameters(prefix); }

FusedInput early_fuse(const ag::Var& query, const FusedGuide& guide, const Adapter& adapter) {
  const Shape& q = query.shape();
  if (query.value().rank() != 3 || q[0] != 3 || guide.image.shape() != q ||
      guide.mask.shape() != Shape{1, q[1], q[2]}) {
    throw ArgumentError("early_fuse: query " + shape_to_string(q) + ", guide image " +
                        shape_to_string(guide.image.shape()) + ", guide mask " +
                        shape_to_string(guide.mask.shape()));
  }
  FusedInput in;
  in.raw = ag::concat({query, guide.image, guide.mask});
  in.projected = adapter(in.raw);
  return in;
}

CrossAttention::CrossAttention(int channels, std::mt19937_64& rng)
    : wq(channels, channels, rng, false),
      wk(channels, channels, rng, false),
      wv(channels, channels, rng, false),
      wo(channels, channels, rng, false) {
  Tensor& v = wv.weight.mutable_value();
  v.fill(0.0);
  for (int c = 0; c < channels; ++c) v.at(c, c) = 1.0;
  wo.weight.mutable_value().fill(0.0);
}

namespace {

ag::Var tokens(const ag::Var& features) {
  const auto& s = features.shape();
  return ag::transpose(ag::reshape(features, {s[0], s[1] * s[2]}));  // {N,C}
}

void check_features(const ag::Var& q, const ag::Var& g, std::int64_t channels) {
  if (q.value().rank() != 3 || g.value().rank() != 3 || q.shape()[0] != g.shape()[0] ||
      q.shape()[0] != channels) {
    throw ArgumentError("cross attention: channel mismatch " + shape_to_string(q.shape()) + " vs " +
                        shape_to_string(g.shape()));
  }
}

}  // namespace

ag::Var CrossAttention::attention(const ag::Var& q_tokens, const ag::Var& g_tokens) const {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q_tokens.shape()[1]));
  const ag::Var q = wq(q_tokens);
  const ag::Var k = wk(g_tokens);
  return ag::softmax_rows(ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt));
}

ag::Var CrossAttention::operator()(const ag::Var& query_features, const ag::Var& guide_features) const {
  check_features(query_features, guide_features, wq.weight.value().dim(0));
  const ag::Var qt = tokens(query_features);
  const ag::Var gt = tokens(guide_features);
  const ag::Var ctx = ag::matmul(attention(qt, gt), wv(gt));  // {Nq,C}
  const ag::Var out = ag::reshape(ag::transpose(wo(ctx)), query_features.shape());
  return ag::add(query_features, out);
}

Tensor CrossAttention::attention_weights(const Tensor& query_features,
                                         const Tensor& guide_features) const {
  ag::NoGradGuard guard;
  const ag::Var q = ag::constant(query_features), g = ag::constant(guide_features);
  check_features(q, g, wq.weight.value().dim(0));
  return attention(tokens(q), tokens(g)).value();
}

nn::ParameterList CrossAttention::parameters(const std::string& prefix) {
  nn::ParameterList out;
  nn::append(out, "", wq.parameters(prefix + "wq."));
  nn::append(out, "", wk.parameters(prefix + "wk."));
  nn::append(out, "", wv.parameters(prefix + "wv."));
  nn::append(out, "", wo.parameters(prefix + "wo."));
  return out;
}

ag::Var dual_encoder_fuse(const ag::Var& query_features, const ag::Var& guide_features,
                          const ag::Var& guide_mask) {
  const Shape& q = query_features.shape();
  const Shape& g = guide_features.shape();
  const Shape& m = guide_mask.shape();
  if (q.size() != 3 || g != q || m.size() != 3 || m[0] != 1 || m[1] % q[1] != 0 ||
      m[2] % q[2] != 0 || m[1] / q[1] != m[2] / q[2]) {
    throw ArgumentError("dual_encoder_fuse: misaligned features " + shape_to_string(q) + " / " +
                        shape_to_string(g) + " with mask " + shape_to_string(m));
  }
  const int factor = static_cast<int>(m[1] / q[1]);
  const ag::Var pooled = factor == 1 ? guide_mask : ag::avg_pool(guide_mask, factor);
  return ag::concat({query_features, ag::mul_channels(guide_features, pooled)});
}

}  // namespace jras
