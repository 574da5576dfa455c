#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lava/nn.hpp"
#include "lava/rng.hpp"
#include "lava/tensor.hpp"

namespace lava::nn {

template <class T>
struct ParamT {
  std::string name;
  TensorT<T> value{std::vector<int64_t>{1}};
  TensorT<T> grad{std::vector<int64_t>{1}};
  bool trainable = true;

  void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), T(0)); }
};

using Param = ParamT<float>;

template <class T>
void kaiming_uniform_(TensorT<T>& w, int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
class LayerT {
 public:
  virtual ~LayerT() = default;
  virtual TensorT<T> forward(const TensorT<T>& x, bool train) = 0;
  virtual TensorT<T> backward(const TensorT<T>& gy, bool need_gx) = 0;
  virtual std::vector<ParamT<T>*> params() { return {}; }
  virtual std::string name() const = 0;
};

template <class T>
class Conv1dT final : public LayerT<T> {
 public:
  Conv1dT(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t s, int64_t p, Rng& rng)
      : name_(std::move(name)), stride_(s), pad_(p) {
    w_.name = name_ + ".weight";
    w_.value = TensorT<T>({cout, cin, k});
    w_.grad = TensorT<T>({cout, cin, k});
    kaiming_uniform_(w_.value, cin * k, rng);
    b_.name = name_ + ".bias";
    b_.value = TensorT<T>({cout});
    b_.grad = TensorT<T>({cout});
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    x_ = x;
    return conv1d_forward(x, w_.value, b_.value, stride_, pad_);
  }

  TensorT<T> backward(const TensorT<T>& gy, bool need_gx) override {
    auto [gx, gw, gb] = conv1d_backward(x_, w_.value, gy, stride_, pad_, need_gx);
    accumulate(w_, gw);
    accumulate(b_, gb);
    return std::move(gx);
  }

  std::vector<ParamT<T>*> params() override { return {&w_, &b_}; }
  std::string name() const override { return name_; }

  int64_t stride() const { return stride_; }
  int64_t padding() const { return pad_; }
  ParamT<T>& weight() { return w_; }
  ParamT<T>& bias() { return b_; }

 private:
  static void accumulate(ParamT<T>& p, const TensorT<T>& g) {
    if (!p.trainable) return;
    for (int64_t i = 0; i < g.numel(); ++i) p.grad.at(i) += g.at(i);
  }
  std::string name_;
  int64_t stride_, pad_;
  ParamT<T> w_, b_;
  TensorT<T> x_{std::vector<int64_t>{1}};
};

template <class T>
class ConvTranspose1dT final : public LayerT<T> {
 public:
  ConvTranspose1dT(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t s, int64_t p,
                   int64_t op, Rng& rng)
      : name_(std::move(name)), stride_(s), pad_(p), out_pad_(op) {
    w_.name = name_ + ".weight";
    w_.value = TensorT<T>({cin, cout, k});
    w_.grad = TensorT<T>({cin, cout, k});
    kaiming_uniform_(w_.value, cin * k, rng);
    b_.name = name_ + ".bias";
    b_.value = TensorT<T>({cout});
    b_.grad = TensorT<T>({cout});
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    x_ = x;
    return conv_transpose1d_forward(x, w_.value, b_.value, stride_, pad_, out_pad_);
  }

  TensorT<T> backward(const TensorT<T>& gy, bool) override {
    auto [gx, gw, gb] = conv_transpose1d_backward(x_, w_.value, gy, stride_, pad_, out_pad_);
    if (w_.trainable)
      for (int64_t i = 0; i < gw.numel(); ++i) w_.grad.at(i) += gw.at(i);
    if (b_.trainable)
      for (int64_t i = 0; i < gb.numel(); ++i) b_.grad.at(i) += gb.at(i);
    return std::move(gx);
  }

  std::vector<ParamT<T>*> params() override { return {&w_, &b_}; }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  int64_t stride_, pad_, out_pad_;
  ParamT<T> w_, b_;
  TensorT<T> x_{std::vector<int64_t>{1}};
};

template <class T>
class BatchNorm1dT final : public LayerT<T> {
 public:
  BatchNorm1dT(std::string name, int64_t c, T eps = T(1e-5), T momentum = T(0.1))
      : name_(std::move(name)), eps_(eps), momentum_(momentum) {
    gamma_.name = name_ + ".weight";
    gamma_.value = TensorT<T>::full({c}, T(1));
    gamma_.grad = TensorT<T>({c});
    beta_.name = name_ + ".bias";
    beta_.value = TensorT<T>({c});
    beta_.grad = TensorT<T>({c});
    running_mean_.name = name_ + ".running_mean";
    running_mean_.value = TensorT<T>({c});
    running_mean_.grad = TensorT<T>({1});
    running_mean_.trainable = false;
    running_var_.name = name_ + ".running_var";
    running_var_.value = TensorT<T>::full({c}, T(1));
    running_var_.grad = TensorT<T>({1});
    running_var_.trainable = false;
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) override {
    shape_ = x.shape();
    const bool effective_train = train && !frozen_stats;
    return batchnorm1d_forward(x, gamma_.value, beta_.value, running_mean_.value,
                               running_var_.value, effective_train, &cache_, eps_, momentum_);
  }

  TensorT<T> backward(const TensorT<T>& gy, bool) override {
    auto [gx, gg, gb] = batchnorm1d_backward(gy, gamma_.value, cache_, shape_[0], shape_[1],
                                             shape_[2]);
    if (gamma_.trainable)
      for (int64_t i = 0; i < gg.numel(); ++i) gamma_.grad.at(i) += gg.at(i);
    if (beta_.trainable)
      for (int64_t i = 0; i < gb.numel(); ++i) beta_.grad.at(i) += gb.at(i);
    return std::move(gx);
  }

  std::vector<ParamT<T>*> params() override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }
  std::string name() const override { return name_; }

  T eps() const { return eps_; }
  T momentum() const { return momentum_; }

  // When set, forward always uses running stats, even in train mode.
  bool frozen_stats = false;

 private:
  std::string name_;
  T eps_, momentum_;
  ParamT<T> gamma_, beta_, running_mean_, running_var_;
  BatchNormCache<T> cache_;
  std::vector<int64_t> shape_;
};

template <class T>
class ActivationLayerT final : public LayerT<T> {
 public:
  ActivationLayerT(std::string name, Activation kind) : name_(std::move(name)), kind_(kind) {}

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    y_ = activation_forward(x, kind_);
    return y_;
  }
  TensorT<T> backward(const TensorT<T>& gy, bool) override {
    return activation_backward(gy, y_, kind_);
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  Activation kind_;
  TensorT<T> y_{std::vector<int64_t>{1}};
};

template <class T>
class AdaptiveAvgPool1T final : public LayerT<T> {
 public:
  explicit AdaptiveAvgPool1T(std::string name) : name_(std::move(name)) {}

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    len_ = x.dim(2);
    return adaptive_avg_pool1_forward(x);
  }
  TensorT<T> backward(const TensorT<T>& gy, bool) override {
    return adaptive_avg_pool1_backward(gy, len_);
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  int64_t len_ = 1;
};

// (B, C, 1) -> (B, C)
template <class T>
class FlattenT final : public LayerT<T> {
 public:
  explicit FlattenT(std::string name) : name_(std::move(name)) {}

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    if (x.rank() != 3) throw ValidationError("flatten: input must be rank 3");
    shape_ = x.shape();
    TensorT<T> y({x.dim(0), x.dim(1) * x.dim(2)});
    y.vec() = x.vec();
    return y;
  }
  TensorT<T> backward(const TensorT<T>& gy, bool) override {
    TensorT<T> gx(shape_);
    gx.vec() = gy.vec();
    return gx;
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::vector<int64_t> shape_;
};

template <class T>
class LinearT final : public LayerT<T> {
 public:
  LinearT(std::string name, int64_t fin, int64_t fout, Rng& rng) : name_(std::move(name)) {
    w_.name = name_ + ".weight";
    w_.value = TensorT<T>({fout, fin});
    w_.grad = TensorT<T>({fout, fin});
    kaiming_uniform_(w_.value, fin, rng);
    b_.name = name_ + ".bias";
    b_.value = TensorT<T>({fout});
    b_.grad = TensorT<T>({fout});
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    x_ = x;
    return linear_forward(x, w_.value, b_.value);
  }
  TensorT<T> backward(const TensorT<T>& gy, bool) override {
    auto [gx, gw, gb] = linear_backward(x_, w_.value, gy);
    if (w_.trainable)
      for (int64_t i = 0; i < gw.numel(); ++i) w_.grad.at(i) += gw.at(i);
    if (b_.trainable)
      for (int64_t i = 0; i < gb.numel(); ++i) b_.grad.at(i) += gb.at(i);
    return std::move(gx);
  }

  std::vector<ParamT<T>*> params() override { return {&w_, &b_}; }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  ParamT<T> w_, b_;
  TensorT<T> x_{std::vector<int64_t>{1}};
};

// Multiplicative channel gate: y = x * sigmoid(conv1x1(x)).
template <class T>
class AttentionGateT final : public LayerT<T> {
 public:
  AttentionGateT(std::string name, int64_t c, Rng& rng) : name_(std::move(name)) {
    w_.name = name_ + ".weight";
    w_.value = TensorT<T>({c, c, 1});
    w_.grad = TensorT<T>({c, c, 1});
    kaiming_uniform_(w_.value, c, rng);
    b_.name = name_ + ".bias";
    b_.value = TensorT<T>({c});
    b_.grad = TensorT<T>({c});
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    x_ = x;
    s_ = activation_forward(conv1d_forward(x, w_.value, b_.value, 1, 0), Activation::Sigmoid);
    TensorT<T> y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y.at(i) = x.at(i) * s_.at(i);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy, bool need_gx) override {
    TensorT<T> gs(gy.shape());
    for (int64_t i = 0; i < gy.numel(); ++i) gs.at(i) = gy.at(i) * x_.at(i);
    TensorT<T> ga = activation_backward(gs, s_, Activation::Sigmoid);
    auto [gx_conv, gw, gb] = conv1d_backward(x_, w_.value, ga, 1, 0, /*need_grad_x=*/true);
    if (w_.trainable)
      for (int64_t i = 0; i < gw.numel(); ++i) w_.grad.at(i) += gw.at(i);
    if (b_.trainable)
      for (int64_t i = 0; i < gb.numel(); ++i) b_.grad.at(i) += gb.at(i);
    if (!need_gx) return gx_conv;
    for (int64_t i = 0; i < gy.numel(); ++i) gx_conv.at(i) += gy.at(i) * s_.at(i);
    return std::move(gx_conv);
  }

  std::vector<ParamT<T>*> params() override { return {&w_, &b_}; }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  ParamT<T> w_, b_;
  TensorT<T> x_{std::vector<int64_t>{1}};
  TensorT<T> s_{std::vector<int64_t>{1}};
};

template <class T>
class SequentialT {
 public:
  SequentialT() = default;

  template <class L, class... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    TensorT<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
  }

  // Returns grad w.r.t. the input (skipped when need_gx is false).
  TensorT<T> backward(const TensorT<T>& gy, bool need_gx = false) {
    TensorT<T> cur = gy;
    for (size_t i = layers_.size(); i-- > 0;) {
      const bool need = need_gx || i > 0;
      cur = layers_[i]->backward(cur, need);
    }
    return cur;
  }

  std::vector<ParamT<T>*> params() {
    std::vector<ParamT<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<ParamT<T>*> trainable_params() {
    std::vector<ParamT<T>*> out;
    for (auto* p : params())
      if (p->trainable) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  size_t size() const { return layers_.size(); }
  LayerT<T>* layer(size_t i) { return layers_[i].get(); }
  const LayerT<T>* layer(size_t i) const { return layers_[i].get(); }

  ParamT<T>* find_param(const std::string& name) {
    for (auto* p : params())
      if (p->name == name) return p;
    return nullptr;
  }

 private:
  std::vector<std::unique_ptr<LayerT<T>>> layers_;
};

using Sequential = SequentialT<float>;

}  // namespace lava::nn
