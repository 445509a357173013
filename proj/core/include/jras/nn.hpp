#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "jras/autograd.hpp"

namespace jras::nn {

// Trainable leaf. Copying a Parameter copies its value into a fresh leaf, so
// modules built from Parameters have value semantics.
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Tensor value) : var_(ag::parameter(std::move(value))) {}
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const ag::Var& var() const noexcept { return var_; }
  const Tensor& value() const { return var_.value(); }
  Tensor& mutable_value() { return var_.mutable_value(); }
  bool defined() const noexcept { return var_.defined(); }

 private:
  ag::Var var_;
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};
using ParameterList = std::vector<NamedParameter>;

void append(ParameterList& into, const std::string& prefix, const ParameterList& from);
std::vector<ag::Var> vars(const ParameterList& list);
std::int64_t count_parameters(const ParameterList& list);
// Flattened copy of every value, in list order. Used for change detection.
std::vector<double> flatten_values(const ParameterList& list);

class Conv2d {
 public:
  Conv2d() = default;
  // He-uniform weights, zero bias.
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
         std::mt19937_64& rng, bool with_bias = true);

  ag::Var operator()(const ag::Var& x) const;
  ParameterList parameters(const std::string& prefix);

  int in_channels() const { return static_cast<int>(weight.value().dim(1)); }
  int out_channels() const { return static_cast<int>(weight.value().dim(0)); }

  Parameter weight;
  Parameter bias;
  int stride = 1;
  int padding = 0;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, std::mt19937_64& rng, bool with_bias = true);

  ag::Var operator()(const ag::Var& x) const;
  ParameterList parameters(const std::string& prefix);

  Parameter weight;
  Parameter bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int features);

  ag::Var operator()(const ag::Var& x) const;
  ParameterList parameters(const std::string& prefix);

  Parameter gain;
  Parameter bias;
};

}  // namespace jras::nn
