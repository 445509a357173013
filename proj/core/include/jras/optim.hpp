#pragma once

#include <cstdint>
#include <vector>

#include "jras/autograd.hpp"

namespace jras::optim {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates, one pair per parameter in the optimizer's order.
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

class Adam {
 public:
  Adam(std::vector<ag::Var> params, AdamOptions options, AdamState state = {});

  void zero_grad();
  // Parameters that received no gradient since zero_grad() are left alone.
  void step();

  const AdamState& state() const noexcept { return state_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  std::vector<ag::Var> params_;
  AdamOptions options_;
  AdamState state_;
};

}  // namespace jras::optim
