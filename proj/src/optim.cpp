#include "fcn/optim.hpp"

namespace fcn {

template <typename T>
void sgd_step(const std::vector<typename Net<T>::Param>& params,
              OptimStateT<T>& state) {
  for (const auto& p : params) {
    if (!p.learnable) continue;
    if (p.grad->size() != p.value->size())
      throw DataError("parameter '" + p.name +
                      "' has no gradient; run backward before stepping");

    auto [it, fresh] = state.velocity.try_emplace(
        p.name, p.value->n(), p.value->c(), p.value->h(), p.value->w());
    TensorT<T>& v = it->second;
    if (!fresh && !v.same_shape(*p.value))
      throw DataError("velocity for '" + p.name + "' is " + v.shape_str() +
                      ", parameter is " + p.value->shape_str());

    auto mit = state.lr_mult.find(p.name);
    const double mult = mit != state.lr_mult.end() ? mit->second
                        : p.is_bias               ? 2.0
                                                  : 1.0;
    const T lr_i = T(state.lr * mult);
    const T mu = T(state.momentum);
    const T lambda = p.is_bias ? T(0) : T(state.weight_decay);

    T* theta = p.value->data.data();
    const T* g = p.grad->data.data();
    T* vel = v.data.data();
    const size_t count = p.value->size();
    for (size_t i = 0; i < count; ++i) {
      vel[i] = mu * vel[i] - lr_i * (g[i] + lambda * theta[i]);
      theta[i] += vel[i];
    }
  }
}

template void sgd_step<float>(const std::vector<Net<float>::Param>&,
                              OptimStateT<float>&);
template void sgd_step<double>(const std::vector<Net<double>::Param>&,
                               OptimStateT<double>&);

}  // namespace fcn
