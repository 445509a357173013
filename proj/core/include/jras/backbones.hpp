#pragma once

#include <random>

#include "jras/segmentation.hpp"

namespace jras {

// 3-level encoder-decoder: widths c, 2c, 4c with two 3x3 convs per level,
// nearest upsampling and skip concatenation, 1x1 head. H and W must be
// divisible by 4.
class TinyCnn final : public SegBackbone {
 public:
  explicit TinyCnn(const BackboneSpec& spec);

  std::string name() const override { return "tiny-cnn"; }
  int num_classes() const override { return num_classes_; }
  int feature_channels() const override { return 4 * width_; }
  EncoderOutput encode(const ag::Var& x) const override;
  ag::Var decode(const EncoderOutput& features) const override;
  nn::ParameterList parameters() override;
  std::unique_ptr<SegBackbone> clone() const override { return std::make_unique<TinyCnn>(*this); }

 private:
  int num_classes_;
  int width_;
  nn::Conv2d e1a_, e1b_, e2a_, e2b_, e3a_, e3b_, d2_, d1_, head_;
};

// Patch-attention net: 3x3 stem kept as a skip, stride-p patch embedding with
// learned positions, two pre-norm attention+MLP blocks, then upsample, merge
// with the stem and a 1x1 head. H and W must be divisible by the patch size.
class TinyVit final : public SegBackbone {
 public:
  static constexpr int kPatch = 4;

  explicit TinyVit(const BackboneSpec& spec);

  std::string name() const override { return "tiny-vit"; }
  int num_classes() const override { return num_classes_; }
  int feature_channels() const override { return dim_; }
  EncoderOutput encode(const ag::Var& x) const override;
  ag::Var decode(const EncoderOutput& features) const override;
  nn::ParameterList parameters() override;
  std::unique_ptr<SegBackbone> clone() const override { return std::make_unique<TinyVit>(*this); }

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    nn::Linear q, k, v, o, fc1, fc2;
  };

  int num_classes_;
  int dim_;
  int grid_h_, grid_w_;
  nn::Conv2d stem_, patch_, fuse_, head_;
  nn::Parameter pos_;
  std::vector<Block> blocks_;
};

}  // namespace jras
