#include "jras/nn.hpp"

#include <cmath>

#include "jras/errors.hpp"

namespace jras::nn {

Parameter::Parameter(const Parameter& other)
    : var_(other.var_.defined() ? ag::parameter(other.var_.value()) : ag::Var()) {}

Parameter& Parameter::operator=(const Parameter& other) {
  if (this != &other) var_ = other.var_.defined() ? ag::parameter(other.var_.value()) : ag::Var();
  return *this;
}

void append(ParameterList& into, const std::string& prefix, const ParameterList& from) {
  for (const auto& p : from) into.push_back({prefix + p.name, p.param});
}

std::vector<ag::Var> vars(const ParameterList& list) {
  std::vector<ag::Var> out;
  out.reserve(list.size());
  for (const auto& p : list) out.push_back(p.param->var());
  return out;
}

std::int64_t count_parameters(const ParameterList& list) {
  std::int64_t n = 0;
  for (const auto& p : list) n += p.param->value().numel();
  return n;
}

std::vector<double> flatten_values(const ParameterList& list) {
  std::vector<double> out;
  for (const auto& p : list) {
    auto v = p.param->value().values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

namespace {

Tensor he_uniform(Shape shape, std::int64_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int padding_,
               std::mt19937_64& rng, bool with_bias)
    : stride(stride_), padding(padding_) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1) throw ArgumentError("Conv2d: bad sizes");
  weight = Parameter(he_uniform({out_channels, in_channels, kernel, kernel},
                                static_cast<std::int64_t>(in_channels) * kernel * kernel, rng));
  if (with_bias) bias = Parameter(Tensor({out_channels}, 0.0));
}

ag::Var Conv2d::operator()(const ag::Var& x) const {
  return ag::conv2d(x, weight.var(), bias.var(), stride, padding);
}

ParameterList Conv2d::parameters(const std::string& prefix) {
  ParameterList out{{prefix + "weight", &weight}};
  if (bias.defined()) out.push_back({prefix + "bias", &bias});
  return out;
}

Linear::Linear(int in_features, int out_features, std::mt19937_64& rng, bool with_bias) {
  if (in_features < 1 || out_features < 1) throw ArgumentError("Linear: bad sizes");
  weight = Parameter(he_uniform({out_features, in_features}, in_features, rng));
  if (with_bias) bias = Parameter(Tensor({out_features}, 0.0));
}

ag::Var Linear::operator()(const ag::Var& x) const {
  return ag::linear(x, weight.var(), bias.var());
}

ParameterList Linear::parameters(const std::string& prefix) {
  ParameterList out{{prefix + "weight", &weight}};
  if (bias.defined()) out.push_back({prefix + "bias", &bias});
  return out;
}

LayerNorm::LayerNorm(int features)
    : gain(Tensor({features}, 1.0)), bias(Tensor({features}, 0.0)) {}

ag::Var LayerNorm::operator()(const ag::Var& x) const {
  return ag::layer_norm_rows(x, gain.var(), bias.var());
}

ParameterList LayerNorm::parameters(const std::string& prefix) {
  return {{prefix + "gain", &gain}, {prefix + "bias", &bias}};
}

}  // namespace jras::nn
