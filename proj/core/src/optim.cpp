#include "jras/optim.hpp"

#include <cmath>

#include "jras/errors.hpp"

namespace jras::optim {

Adam::Adam(std::vector<ag::Var> params, AdamOptions options, AdamState state)
    : params_(std::move(params)), options_(options), state_(std::move(state)) {
  if (!(options_.learning_rate > 0.0)) throw ArgumentError("Adam: learning rate must be > 0");
  if (state_.first_moment.empty()) {
    for (const auto& p : params_) {
      state_.first_moment.emplace_back(p.shape(), 0.0);
      state_.second_moment.emplace_back(p.shape(), 0.0);
    }
  }
  if (state_.first_moment.size() != params_.size() ||
      state_.second_moment.size() != params_.size()) {
    throw ArgumentError("Adam: state does not match parameter count");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (state_.first_moment[i].shape() != params_[i].shape()) {
      throw ArgumentError("Adam: state shape mismatch at parameter " + std::to_string(i));
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const Tensor& g = p.grad();
    Tensor& m = state_.first_moment[i];
    Tensor& v = state_.second_moment[i];
    Tensor& w = p.mutable_value();
    for (std::int64_t j = 0; j < w.numel(); ++j) {
      m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
      v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
      w[j] -= options_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.epsilon);
    }
  }
}

}  // namespace jras::optim
