#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "bsc/nn/layers.hpp"

namespace bsc::nn {

// Plain stochastic gradient descent.
template <typename T>
struct Sgd {
  double lr = 1e-5;

  void step(const std::vector<ParamTensor<T>*>& params) {
    for (auto* p : params)
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= static_cast<T>(lr) * p->grad[i];
  }
};

// Adaptive moment estimation.
template <typename T>
struct Adam {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;  // name -> (m, v)

  void step(const std::vector<ParamTensor<T>*>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto* p : params) {
      auto& [m, v] = moments[p->name];
      if (m.size() != p->value.size()) {
        m.assign(p->value.size(), T(0));
        v.assign(p->value.size(), T(0));
      }
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        m[i] = static_cast<T>(beta1 * m[i] + (1.0 - beta1) * g);
        v[i] = static_cast<T>(beta2 * v[i] + (1.0 - beta2) * g * g);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p->value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

template <typename T>
inline void zero_grads(const std::vector<ParamTensor<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace bsc::nn
