#pragma once

#include <cmath>
#include <vector>

#include "lava/layers.hpp"

namespace lava::nn {

// Adam with classical L2 weight decay added to the gradient before the
// moment updates.
template <class T>
class AdamT {
 public:
  struct Config {
    T lr = T(1e-4);
    T weight_decay = T(1e-5);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
  };

  AdamT(std::vector<ParamT<T>*> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params_[i]->value.numel()), T(0));
      v_[i].assign(static_cast<size_t>(params_[i]->value.numel()), T(0));
    }
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      ParamT<T>& p = *params_[i];
      if (!p.trainable) continue;
      const int64_t n = p.value.numel();
      for (int64_t j = 0; j < n; ++j) {
        const T g = p.grad.at(j) + cfg_.weight_decay * p.value.at(j);
        T& m = m_[i][static_cast<size_t>(j)];
        T& v = v_[i][static_cast<size_t>(j)];
        m = cfg_.beta1 * m + (T(1) - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (T(1) - cfg_.beta2) * g * g;
        const T mhat = m / bc1;
        const T vhat = v / bc2;
        p.value.at(j) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  int64_t steps() const { return t_; }

 private:
  std::vector<ParamT<T>*> params_;
  Config cfg_;
  std::vector<std::vector<T>> m_, v_;
  int64_t t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace lava::nn
