#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "lava/adam.hpp"
#include "lava/gradcheck.hpp"
#include "lava/layers.hpp"
#include "lava/nn.hpp"
#include "lava/rng.hpp"
#include "lava/threading.hpp"

using namespace lava;
using namespace lava::nn;

namespace {

Tensor64 random_tensor(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0,
                       double hi = 1.0) {
  Tensor64 t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

// Finite-difference check of the input gradient through a random projection
// loss. Complements grad_check, which covers parameter gradients.
double input_grad_max_rel(SequentialT<double>& m, const Tensor64& x0, uint64_t seed,
                          int64_t samples = 16, bool train = true, double step = 1e-5) {
  Tensor64 y = m.forward(x0, train);
  Tensor64 proj(y.shape());
  Rng prng(derive_seed(seed, 7));
  for (auto& v : proj.vec()) v = prng.uniform(-1.0, 1.0);
  auto loss_of = [&](const Tensor64& out) {
    double s = 0;
    for (int64_t i = 0; i < out.numel(); ++i) s += proj.at(i) * out.at(i);
    return s;
  };
  m.zero_grad();
  m.forward(x0, train);
  Tensor64 gx = m.backward(proj, /*need_gx=*/true);
  Tensor64 x = x0;
  Rng rng(derive_seed(seed, 8));
  double worst = 0;
  const int64_t count = std::min<int64_t>(samples, x.numel());
  for (int64_t s = 0; s < count; ++s) {
    const int64_t i = x.numel() <= samples ? s : static_cast<int64_t>(rng.uniform_int(x.numel()));
    const double orig = x.at(i);
    x.at(i) = orig + step;
    const double lp = loss_of(m.forward(x, train));
    x.at(i) = orig - step;
    const double lm = loss_of(m.forward(x, train));
    x.at(i) = orig;
    const double numeric = (lp - lm) / (2 * step);
    const double rel =
        std::abs(numeric - gx.at(i)) / std::max(std::abs(numeric) + std::abs(gx.at(i)), 1e-6);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor(std::vector<int64_t>{}), ValidationError);
  CHECK_THROWS_AS(Tensor(std::vector<int64_t>{1, 2, 3, 4}), ValidationError);
  CHECK_THROWS_AS(Tensor(std::vector<int64_t>{2, 0}), ValidationError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.f, 2.f, 3.f}), ValidationError);
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.shape_str() == "(2,3)");
}

TEST_CASE("rng is deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) differs |= (a2.next_u64() != c.next_u64());
  CHECK(differs);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("conv1d forward hand cases") {
  SUBCASE("identity kernel") {
    Tensor64 x({1, 1, 5}, {1, 2, 3, 4, 5});
    Tensor64 w({1, 1, 1}, {1});
    Tensor64 b({1}, {0});
    Tensor64 y = conv1d_forward(x, w, b, 1, 0);
    for (int64_t i = 0; i < 5; ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("sliding window") {
    Tensor64 x({1, 1, 5}, {1, 2, 3, 4, 5});
    Tensor64 w({1, 1, 3}, {1, 0, -1});
    Tensor64 b({1}, {0});
    Tensor64 y = conv1d_forward(x, w, b, 1, 0);
    REQUIRE(y.dim(2) == 3);
    CHECK(y.at(0) == doctest::Approx(-2));
    CHECK(y.at(1) == doctest::Approx(-2));
    CHECK(y.at(2) == doctest::Approx(-2));
  }
  SUBCASE("length chain 48000 to 3000") {
    int64_t L = 48000;
    for (int i = 0; i < 4; ++i) L = conv1d_out_len(L, 9, 2, 4);
    CHECK(L == 3000);
    CHECK(conv1d_out_len(48000, 9, 2, 4) == 24000);
  }
  SUBCASE("channel mismatch throws") {
    Tensor64 x({1, 2, 5});
    Tensor64 w({1, 3, 3});
    Tensor64 b({1});
    CHECK_THROWS_AS(conv1d_forward(x, w, b, 1, 0), ValidationError);
  }
}

TEST_CASE("conv1d backward") {
  SUBCASE("zero grad_out gives zero grads") {
    Tensor64 x = random_tensor({2, 2, 7}, 1);
    Tensor64 w = random_tensor({3, 2, 3}, 2);
    Tensor64 gy({2, 3, conv1d_out_len(7, 3, 2, 1)});
    auto [gx, gw, gb] = conv1d_backward(x, w, gy, 2, 1);
    for (int64_t i = 0; i < gx.numel(); ++i) CHECK(gx.at(i) == 0);
    for (int64_t i = 0; i < gw.numel(); ++i) CHECK(gw.at(i) == 0);
    for (int64_t i = 0; i < gb.numel(); ++i) CHECK(gb.at(i) == 0);
  }
  SUBCASE("grad_b sums grad_out") {
    Tensor64 x = random_tensor({1, 1, 7}, 3);
    Tensor64 w = random_tensor({2, 1, 3}, 4);
    Tensor64 gy = TensorT<double>::full({1, 2, 4}, 1.0);
    auto [gx, gw, gb] = conv1d_backward(x, w, gy, 2, 1);
    CHECK(gb.at(0) == doctest::Approx(4));
    CHECK(gb.at(1) == doctest::Approx(4));
  }
  SUBCASE("matches finite differences") {
    SequentialT<double> m;
    Rng rng(11);
    m.add<Conv1dT<double>>("conv", 2, 3, 3, 2, 1, rng);
    Tensor64 x = random_tensor({2, 2, 7}, 12);
    auto report = grad_check(m, x, 13, 64);
    CHECK(report.finite);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(input_grad_max_rel(m, x, 14, 28) < 1e-4);
  }
}

TEST_CASE("conv_transpose1d") {
  SUBCASE("length formula") {
    CHECK(conv_transpose1d_out_len(3000, 9, 2, 4, 1) == 6000);
    CHECK(conv_transpose1d_out_len(3, 1, 1, 0, 0) == 3);
  }
  SUBCASE("identity") {
    Tensor64 x({1, 1, 4}, {1, -2, 3, -4});
    Tensor64 w({1, 1, 1}, {1});
    Tensor64 b({1}, {0});
    Tensor64 y = conv_transpose1d_forward(x, w, b, 1, 0, 0);
    for (int64_t i = 0; i < 4; ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("adjoint of conv1d") {
    // <conv(x), y> == <x, conv_transpose(y)> with shared weights and zero bias
    const int64_t Cin = 3, Cout = 2, L = 16, K = 9, S = 2, P = 4, OP = 1;
    // same weight data, reinterpreted as (in=Cout, out=Cin, K)
    Tensor64 w_conv = random_tensor({Cout, Cin, K}, 21);
    Tensor64 w_tr({Cout, Cin, K}, w_conv.vec());
    Tensor64 zb_out({Cout}), zb_in({Cin});
    Tensor64 x = random_tensor({1, Cin, L}, 22);
    const int64_t Lout = conv1d_out_len(L, K, S, P);
    Tensor64 y = random_tensor({1, Cout, Lout}, 23);
    Tensor64 cx = conv1d_forward(x, w_conv, zb_out, S, P);
    REQUIRE(conv_transpose1d_out_len(Lout, K, S, P, OP) == L);
    Tensor64 cty = conv_transpose1d_forward(y, w_tr, zb_in, S, P, OP);
    double lhs = 0, rhs = 0;
    for (int64_t i = 0; i < cx.numel(); ++i) lhs += cx.at(i) * y.at(i);
    for (int64_t i = 0; i < x.numel(); ++i) rhs += x.at(i) * cty.at(i);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-8));
  }
  SUBCASE("matches finite differences") {
    SequentialT<double> m;
    Rng rng(31);
    m.add<ConvTranspose1dT<double>>("convt", 3, 2, 3, 2, 1, 1, rng);
    Tensor64 x = random_tensor({2, 3, 6}, 32);
    auto report = grad_check(m, x, 33, 64);
    CHECK(report.finite);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(input_grad_max_rel(m, x, 34, 24) < 1e-4);
  }
  SUBCASE("bad output padding throws") {
    Tensor64 x({1, 1, 4});
    Tensor64 w({1, 1, 3});
    Tensor64 b({1});
    CHECK_THROWS_AS(conv_transpose1d_forward(x, w, b, 2, 1, 2), ValidationError);
  }
}

TEST_CASE("batchnorm1d") {
  SUBCASE("train mode normalizes per channel") {
    Tensor64 x = random_tensor({4, 3, 11}, 41, -3.0, 5.0);
    Tensor64 gamma = TensorT<double>::full({3}, 1.0), beta({3});
    Tensor64 rm({3}), rv = TensorT<double>::full({3}, 1.0);
    BatchNormCache<double> cache;
    Tensor64 y = batchnorm1d_forward(x, gamma, beta, rm, rv, true, &cache);
    for (int64_t c = 0; c < 3; ++c) {
      double mean = 0, var = 0;
      for (int64_t b = 0; b < 4; ++b)
        for (int64_t t = 0; t < 11; ++t) mean += y.at(b, c, t);
      mean /= 44;
      for (int64_t b = 0; b < 4; ++b)
        for (int64_t t = 0; t < 11; ++t) var += (y.at(b, c, t) - mean) * (y.at(b, c, t) - mean);
      var /= 44;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
  SUBCASE("eval mode applies running stats") {
    Tensor64 x = TensorT<double>::full({1, 1, 1}, 0.5);
    Tensor64 gamma = TensorT<double>::full({1}, 2.0), beta = TensorT<double>::full({1}, 1.0);
    Tensor64 rm({1}), rv = TensorT<double>::full({1}, 1.0);
    Tensor64 y = batchnorm1d_forward(x, gamma, beta, rm, rv, false, nullptr);
    CHECK(y.at(0) == doctest::Approx(2.0).epsilon(1e-5));
  }
  SUBCASE("degenerate train batch throws") {
    Tensor64 x({1, 2, 1});
    Tensor64 gamma = TensorT<double>::full({2}, 1.0), beta({2});
    Tensor64 rm({2}), rv = TensorT<double>::full({2}, 1.0);
    CHECK_THROWS_AS(batchnorm1d_forward(x, gamma, beta, rm, rv, true, nullptr), ValidationError);
  }
  SUBCASE("train backward matches finite differences") {
    SequentialT<double> m;
    m.add<BatchNorm1dT<double>>("bn", 3);
    Tensor64 x = random_tensor({2, 3, 5}, 42);
    auto report = grad_check(m, x, 43, 64);
    CHECK(report.finite);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(input_grad_max_rel(m, x, 44, 30) < 1e-4);
  }
  SUBCASE("eval backward matches finite differences") {
    SequentialT<double> m;
    auto* bn = m.add<BatchNorm1dT<double>>("bn", 3);
    Rng rng(45);
    for (auto* p : bn->params())
      if (p->name == "bn.running_var")
        for (auto& v : p->value.vec()) v = rng.uniform(0.5, 2.0);
      else if (p->name == "bn.running_mean")
        for (auto& v : p->value.vec()) v = rng.uniform(-1.0, 1.0);
    Tensor64 x = random_tensor({2, 3, 5}, 46);
    CHECK(input_grad_max_rel(m, x, 47, 30, /*train=*/false) < 1e-4);
  }
  SUBCASE("running stats update with momentum") {
    Tensor64 x = random_tensor({2, 1, 8}, 48, 1.0, 3.0);
    Tensor64 gamma = TensorT<double>::full({1}, 1.0), beta({1});
    Tensor64 rm({1}), rv = TensorT<double>::full({1}, 1.0);
    batchnorm1d_forward(x, gamma, beta, rm, rv, true, nullptr);
    double mean = 0;
    for (int64_t i = 0; i < x.numel(); ++i) mean += x.at(i);
    mean /= static_cast<double>(x.numel());
    CHECK(rm.at(0) == doctest::Approx(0.1 * mean).epsilon(1e-9));
    CHECK(rv.at(0) != doctest::Approx(1.0));
  }
}

TEST_CASE("activations") {
  Tensor64 x({1, 1, 3}, {-1.0, 0.3, 2.0});
  SUBCASE("values") {
    Tensor64 zero({1, 1, 1}, {0.0});
    CHECK(activation_forward(zero, Activation::Sigmoid).at(0) == doctest::Approx(0.5));
    Tensor64 pair({1, 1, 2}, {-3.2, 3.2});
    Tensor64 r = activation_forward(pair, Activation::ReLU);
    CHECK(r.at(0) == 0.0);
    CHECK(r.at(1) == doctest::Approx(3.2));
    Tensor64 s = activation_forward(x, Activation::Sigmoid);
    for (int64_t i = 0; i < 3; ++i) {
      CHECK(s.at(i) > 0.0);
      CHECK(s.at(i) < 1.0);
    }
  }
  SUBCASE("derivatives at -1, 0.3, 2") {
    for (Activation kind : {Activation::ReLU, Activation::Sigmoid, Activation::Tanh}) {
      Tensor64 y = activation_forward(x, kind);
      Tensor64 ones = TensorT<double>::full({1, 1, 3}, 1.0);
      Tensor64 g = activation_backward(ones, y, kind);
      const double h = 1e-6;
      for (int64_t i = 0; i < 3; ++i) {
        Tensor64 xp = x, xm = x;
        xp.at(i) += h;
        xm.at(i) -= h;
        const double numeric =
            (activation_forward(xp, kind).at(i) - activation_forward(xm, kind).at(i)) / (2 * h);
        const double rel =
            std::abs(numeric - g.at(i)) / std::max(std::abs(numeric) + std::abs(g.at(i)), 1e-6);
        CHECK(rel < 1e-6);
      }
    }
  }
}

TEST_CASE("adaptive average pool") {
  Tensor64 x({1, 2, 3}, {1, 2, 3, 5, 5, 5});
  Tensor64 y = adaptive_avg_pool1_forward(x);
  CHECK(y.at(0, 0, 0) == doctest::Approx(2.0));
  CHECK(y.at(0, 1, 0) == doctest::Approx(5.0));
  Tensor64 gy = TensorT<double>::full({1, 1, 1}, 1.0);
  Tensor64 gx = adaptive_avg_pool1_backward(gy, 4);
  for (int64_t i = 0; i < 4; ++i) CHECK(gx.at(i) == doctest::Approx(0.25));
}

TEST_CASE("linear") {
  SUBCASE("identity") {
    Tensor64 x({1, 2}, {3.0, -4.0});
    Tensor64 w({2, 2}, {1, 0, 0, 1});
    Tensor64 b({2});
    Tensor64 y = linear_forward(x, w, b);
    CHECK(y.at(0, 0) == doctest::Approx(3.0));
    CHECK(y.at(0, 1) == doctest::Approx(-4.0));
  }
  SUBCASE("hand matrix product") {
    Tensor64 x({1, 2}, {1, 2});
    Tensor64 w({2, 2}, {1, 1, 1, -1});
    Tensor64 b({2}, {0, 1});
    Tensor64 y = linear_forward(x, w, b);
    CHECK(y.at(0, 0) == doctest::Approx(3.0));
    CHECK(y.at(0, 1) == doctest::Approx(0.0));
  }
  SUBCASE("matches finite differences tightly") {
    SequentialT<double> m;
    Rng rng(51);
    m.add<LinearT<double>>("fc", 5, 4, rng);
    Tensor64 x2 = random_tensor({3, 5}, 52);
    auto report = grad_check(m, x2, 53, 64);
    CHECK(report.finite);
    CHECK(report.max_rel_err < 1e-6);
  }
}

TEST_CASE("softmax") {
  SUBCASE("symmetry") {
    auto p = softmax<double>({0, 0, 0});
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3));
  }
  SUBCASE("shift invariance and stability") {
    auto p1 = softmax<double>({2, 1, 0});
    auto p2 = softmax<double>({12, 11, 10});
    for (size_t i = 0; i < 3; ++i) CHECK(std::abs(p1[i] - p2[i]) < 1e-7);
    auto big = softmax<double>({1000, 999, 998});
    double s = 0;
    for (double v : big) {
      CHECK(std::isfinite(v));
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("order preserving") {
    auto p = softmax<double>({2, 1, 0});
    CHECK(p[0] > p[1]);
    CHECK(p[1] > p[2]);
    double s = p[0] + p[1] + p[2];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross entropy gradient matches finite differences") {
  Tensor64 logits = random_tensor({4, 3}, 61, -2.0, 2.0);
  std::vector<int> labels = {0, 2, 1, 2};
  Tensor64 grad;
  const double loss = cross_entropy(logits, labels, &grad);
  CHECK(loss > 0);
  const double h = 1e-6;
  for (int64_t i = 0; i < logits.numel(); ++i) {
    Tensor64 lp = logits, lm = logits;
    lp.at(i) += h;
    lm.at(i) -= h;
    const double numeric =
        (cross_entropy<double>(lp, labels, nullptr) - cross_entropy<double>(lm, labels, nullptr)) /
        (2 * h);
    CHECK(std::abs(numeric - grad.at(i)) < 1e-7);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamT<double> p;
    p.name = "w";
    p.value = Tensor64({2}, {1.0, -2.0});
    p.grad = Tensor64(std::vector<int64_t>{2});
    AdamT<double>::Config cfg;
    cfg.weight_decay = 0;
    AdamT<double> opt({&p}, cfg);
    opt.step();
    CHECK(p.value.at(0) == 1.0);
    CHECK(p.value.at(1) == -2.0);
    CHECK(opt.steps() == 1);
  }
  SUBCASE("first step magnitude is about lr") {
    ParamT<double> p;
    p.name = "w";
    p.value = Tensor64(std::vector<int64_t>{1});
    p.grad = TensorT<double>::full({1}, 1.0);
    AdamT<double>::Config cfg;
    cfg.lr = 1e-4;
    cfg.weight_decay = 0;
    AdamT<double> opt({&p}, cfg);
    opt.step();
    CHECK(std::abs(p.value.at(0) + 1e-4) < 1e-6);
  }
  SUBCASE("frozen params untouched") {
    ParamT<double> p;
    p.name = "w";
    p.value = TensorT<double>::full({1}, 5.0);
    p.grad = TensorT<double>::full({1}, 3.0);
    p.trainable = false;
    AdamT<double> opt({&p}, {});
    opt.step();
    CHECK(p.value.at(0) == 5.0);
  }
}

TEST_CASE("parameter initialization") {
  auto build = [](uint64_t seed) {
    SequentialT<double> m;
    Rng rng(seed);
    m.add<Conv1dT<double>>("conv0", 2, 4, 3, 1, 1, rng);
    m.add<LinearT<double>>("fc", 8, 2, rng);
    return m;
  };
  auto m1 = build(7), m2 = build(7), m3 = build(8);
  auto p1 = m1.params(), p2 = m2.params(), p3 = m3.params();
  bool same = true, differs = false;
  for (size_t i = 0; i < p1.size(); ++i) {
    same &= p1[i]->value.vec() == p2[i]->value.vec();
    differs |= p1[i]->value.vec() != p3[i]->value.vec();
  }
  CHECK(same);
  CHECK(differs);

  SequentialT<double> m;
  Rng rng(9);
  auto* conv = m.add<Conv1dT<double>>("conv0", 2, 4, 3, 1, 1, rng);
  const double bound = std::sqrt(6.0 / (2 * 3));
  for (auto v : conv->weight().value.vec()) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
  for (auto v : conv->bias().value.vec()) CHECK(v == 0.0);
}

TEST_CASE("attention gate") {
  SUBCASE("gates the input multiplicatively") {
    SequentialT<double> m;
    Rng rng(71);
    auto* gate = m.add<AttentionGateT<double>>("attn", 2, rng);
    for (auto* p : gate->params())
      std::fill(p->value.vec().begin(), p->value.vec().end(), 0.0);
    Tensor64 x = random_tensor({1, 2, 4}, 72);
    Tensor64 y = m.forward(x, false);
    // zero conv means sigmoid(0) = 0.5 everywhere
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == doctest::Approx(0.5 * x.at(i)));
  }
  SUBCASE("matches finite differences") {
    SequentialT<double> m;
    Rng rng(73);
    m.add<AttentionGateT<double>>("attn", 3, rng);
    Tensor64 x = random_tensor({2, 3, 5}, 74);
    auto report = grad_check(m, x, 75, 64);
    CHECK(report.finite);
    CHECK(report.max_rel_err < 1e-4);
    CHECK(input_grad_max_rel(m, x, 76, 30) < 1e-4);
  }
}

TEST_CASE("composed stack matches finite differences") {
  SequentialT<double> m;
  Rng rng(81);
  m.add<Conv1dT<double>>("conv0", 1, 4, 9, 2, 4, rng);
  m.add<BatchNorm1dT<double>>("bn1", 4);
  m.add<ActivationLayerT<double>>("relu2", Activation::ReLU);
  m.add<Conv1dT<double>>("conv3", 4, 6, 9, 2, 4, rng);
  m.add<BatchNorm1dT<double>>("bn4", 6);
  m.add<ActivationLayerT<double>>("relu5", Activation::ReLU);
  m.add<AttentionGateT<double>>("attn6", 6, rng);
  m.add<AdaptiveAvgPool1T<double>>("pool7");
  m.add<FlattenT<double>>("flat8");
  m.add<LinearT<double>>("fc9", 6, 3, rng);
  Tensor64 x = random_tensor({2, 1, 32}, 82);
  auto report = grad_check(m, x, 83, 16);
  CHECK(report.finite);
  CHECK(report.max_rel_err < 1e-4);
  CHECK(input_grad_max_rel(m, x, 84, 16) < 1e-4);
}

TEST_CASE("gemm kernels match a naive oracle") {
  const int64_t M = 13, R = 27, N = 201;
  Tensor64 A = random_tensor({M, R}, 91);
  Tensor64 B = random_tensor({R, N}, 92);
  Tensor64 Bt({N, R});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t r = 0; r < R; ++r) Bt.at(i, r) = B.at(r, i);
  Tensor64 At({R, M});
  for (int64_t r = 0; r < R; ++r)
    for (int64_t i = 0; i < M; ++i) At.at(r, i) = A.at(i, r);
  Tensor64 ref({M, N});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) {
      double s = 0;
      for (int64_t r = 0; r < R; ++r) s += A.at(i, r) * B.at(r, j);
      ref.at(i, j) = s;
    }
  Tensor64 c1({M, N}), c2({M, N}), c3({M, N});
  gemm_nn(M, R, N, A.data(), R, B.data(), N, c1.data(), N);
  gemm_nt(M, R, N, A.data(), R, Bt.data(), R, c2.data(), N);
  gemm_tn(M, R, N, At.data(), M, B.data(), N, c3.data(), N);
  for (int64_t i = 0; i < ref.numel(); ++i) {
    CHECK(c1.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-12));
    CHECK(c2.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-12));
    CHECK(c3.at(i) == doctest::Approx(ref.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("thread count does not change results") {
  // forward and backward through a conv big enough to cross the parallel
  // threshold must be bit-identical for 1 and 4 threads
  const int saved = num_threads();
  auto run = [&]() {
    SequentialT<float> m;
    Rng rng(95);
    m.add<Conv1dT<float>>("conv", 8, 16, 9, 2, 4, rng);
    Tensor x({2, 8, 512});
    Rng xr(96);
    for (auto& v : x.vec()) v = static_cast<float>(xr.uniform(-1.0, 1.0));
    Tensor y = m.forward(x, false);
    Tensor gy(y.shape());
    Rng gr(97);
    for (auto& v : gy.vec()) v = static_cast<float>(gr.uniform(-1.0, 1.0));
    Tensor gx = m.backward(gy, true);
    std::vector<float> out = y.vec();
    out.insert(out.end(), gx.vec().begin(), gx.vec().end());
    for (auto* p : m.trainable_params())
      out.insert(out.end(), p->grad.vec().begin(), p->grad.vec().end());
    return out;
  };
  set_num_threads(1);
  auto r1 = run();
  set_num_threads(4);
  auto r4 = run();
  set_num_threads(saved);
  REQUIRE(r1.size() == r4.size());
  CHECK(std::memcmp(r1.data(), r4.data(), r1.size() * sizeof(float)) == 0);
}

TEST_CASE("gradcheck battery covers every layer kind and passes") {
  auto cases = run_gradcheck_battery(17);
  std::set<std::string> names;
  for (const auto& c : cases) {
    names.insert(c.name);
    CHECK_MESSAGE(c.finite, c.name, " produced non-finite gradients");
    CHECK_MESSAGE(c.pass, c.name, " max_rel_err=", c.max_rel_err);
  }
  for (const char* required :
       {"conv1d", "conv_transpose1d", "batchnorm1d", "relu", "sigmoid", "tanh",
        "adaptive_avg_pool", "flatten", "linear", "attention_gate", "encoder",
        "decoder", "head_stack"})
    CHECK_MESSAGE(names.count(required), "battery missing ", required);
}
