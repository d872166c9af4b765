#pragma once

#include <map>
#include <string>

#include "fcn/net.hpp"

namespace fcn {

// SGD with momentum and weight decay. Velocity tensors are created on first
// use and mirror their parameter's dims. lr_mult overrides the per-parameter
// learning-rate factor; without an entry, biases get 2 and weights 1. Decay
// applies to weights only.
template <typename T>
struct OptimStateT {
  double lr = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::map<std::string, double> lr_mult;
  std::map<std::string, TensorT<T>> velocity;
};

using OptimState = OptimStateT<float>;

// v <- mu*v - lr_i*(g + lambda*theta); theta <- theta + v.
// Parameters marked non-learnable are untouched. Gradients must be populated
// (a backward pass must precede the step).
template <typename T>
void sgd_step(const std::vector<typename Net<T>::Param>& params,
              OptimStateT<T>& state);

}  // namespace fcn
