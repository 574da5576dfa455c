#include "lava/gradcheck.hpp"

#include <algorithm>
#include <utility>

#include "lava/autoencoder.hpp"
#include "lava/rng.hpp"

namespace lava::nn {

namespace {

TensorT<double> random_input(std::vector<int64_t> shape, uint64_t seed) {
  TensorT<double> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.vec()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

std::vector<BatteryCase> run_gradcheck_battery(uint64_t seed, double tol,
                                               int64_t samples_per_tensor) {
  struct Spec {
    std::string name;
    SequentialT<double> net;
    std::vector<int64_t> in_shape;
  };
  std::vector<Spec> specs;
  uint64_t k = 0;
  auto next = [&] { return derive_seed(seed, ++k); };

  {
    Spec s{"conv1d", {}, {2, 2, 32}};
    Rng rng(next());
    s.net.add<Conv1dT<double>>("conv", 2, 3, 9, 2, 4, rng);
    specs.push_back(std::move(s));
  }
  {
    Spec s{"conv_transpose1d", {}, {2, 3, 16}};
    Rng rng(next());
    s.net.add<ConvTranspose1dT<double>>("tconv", 3, 2, 9, 2, 4, 1, rng);
    specs.push_back(std::move(s));
  }
  {
    Spec s{"batchnorm1d", {}, {3, 4, 10}};
    s.net.add<BatchNorm1dT<double>>("bn", 4);
    specs.push_back(std::move(s));
  }
  for (auto [name, kind] :
       {std::pair<const char*, Activation>{"relu", Activation::ReLU},
        {"sigmoid", Activation::Sigmoid},
        {"tanh", Activation::Tanh}}) {
    Spec s{name, {}, {2, 3, 16}};
    s.net.add<ActivationLayerT<double>>(name, kind);
    specs.push_back(std::move(s));
  }
  {
    Spec s{"adaptive_avg_pool", {}, {2, 3, 17}};
    s.net.add<AdaptiveAvgPool1T<double>>("pool");
    specs.push_back(std::move(s));
  }
  {
    Spec s{"flatten", {}, {2, 3, 5}};
    s.net.add<FlattenT<double>>("flatten");
    specs.push_back(std::move(s));
  }
  {
    Spec s{"linear", {}, {3, 6}};
    Rng rng(next());
    s.net.add<LinearT<double>>("fc", 6, 4, rng);
    specs.push_back(std::move(s));
  }
  {
    Spec s{"attention_gate", {}, {2, 4, 12}};
    Rng rng(next());
    s.net.add<AttentionGateT<double>>("attn", 4, rng);
    specs.push_back(std::move(s));
  }
  {
    Spec s{"encoder", {}, {2, 1, 64}};
    s.net = build_encoder<double>(next());
    specs.push_back(std::move(s));
  }
  {
    Spec s{"decoder", {}, {2, 256, 4}};
    s.net = build_decoder<double>(next());
    specs.push_back(std::move(s));
  }
  {
    // Same composition as a classification head: private conv block,
    // attention gate, pooled MLP.
    Spec s{"head_stack", {}, {2, 8, 16}};
    Rng rng(next());
    s.net.add<Conv1dT<double>>("conv", 8, 12, 9, 2, 4, rng);
    s.net.add<BatchNorm1dT<double>>("bn", 12);
    s.net.add<ActivationLayerT<double>>("relu", Activation::ReLU);
    s.net.add<AttentionGateT<double>>("attn", 12, rng);
    s.net.add<AdaptiveAvgPool1T<double>>("pool");
    s.net.add<FlattenT<double>>("flatten");
    s.net.add<LinearT<double>>("fc1", 12, 8, rng);
    s.net.add<ActivationLayerT<double>>("fc1relu", Activation::ReLU);
    s.net.add<LinearT<double>>("fc2", 8, 3, rng);
    specs.push_back(std::move(s));
  }

  std::vector<BatteryCase> out;
  for (auto& spec : specs) {
    TensorT<double> x = random_input(spec.in_shape, derive_seed(seed, 0x100 + out.size()));
    GradCheckReport params =
        grad_check(spec.net, x, derive_seed(seed, 0x200 + out.size()), samples_per_tensor);
    double input_err = grad_check_input(spec.net, x, derive_seed(seed, 0x300 + out.size()),
                                        samples_per_tensor);
    BatteryCase c;
    c.name = spec.name;
    c.finite = params.finite && std::isfinite(input_err);
    c.max_rel_err = std::max(params.max_rel_err, input_err);
    c.pass = c.finite && c.max_rel_err < tol;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace lava::nn
