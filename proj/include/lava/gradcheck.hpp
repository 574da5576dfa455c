#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lava/layers.hpp"
#include "lava/rng.hpp"

namespace lava::nn {

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> tensors;
  double max_rel_err = 0.0;
  bool finite = true;

  std::string to_string() const {
    std::string s;
    for (const auto& e : tensors)
      s += e.tensor + ": max_rel_err=" + std::to_string(e.max_rel_err) + " (" +
           std::to_string(e.checked) + " entries)\n";
    s += "overall: " + std::to_string(max_rel_err) + (finite ? "" : " [non-finite]") + "\n";
    return s;
  }
};

// Checks analytic gradients of a 64-bit model against central finite
// differences through a fixed random projection loss. Runs in eval-style
// full differentiability (batch-norm layers participate via whatever mode
// `train` selects). Sampled entries keep large tensors tractable.
inline GradCheckReport grad_check(SequentialT<double>& model, const TensorT<double>& input,
                                  uint64_t seed, int64_t samples_per_tensor = 24,
                                  bool train = true, double step = 1e-5) {
  TensorT<double> y = model.forward(input, train);
  TensorT<double> proj(y.shape());
  Rng prng(derive_seed(seed, 0x70726f6a));
  for (auto& v : proj.vec()) v = prng.uniform(-1.0, 1.0);

  auto loss_of = [&](const TensorT<double>& out) {
    double s = 0;
    for (int64_t i = 0; i < out.numel(); ++i) s += proj.at(i) * out.at(i);
    return s;
  };

  model.zero_grad();
  model.forward(input, train);
  model.backward(proj, /*need_gx=*/false);

  GradCheckReport report;
  auto params = model.trainable_params();
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ParamT<double>& p = *params[pi];
    GradCheckEntry entry;
    entry.tensor = p.name;
    Rng rng(derive_seed(seed, 1000 + pi));
    const int64_t n = p.value.numel();
    const int64_t count = std::min<int64_t>(samples_per_tensor, n);
    for (int64_t s = 0; s < count; ++s) {
      const int64_t idx = n <= samples_per_tensor ? s : rng.uniform_int(n);
      const double orig = p.value.at(idx);
      p.value.at(idx) = orig + step;
      const double lp = loss_of(model.forward(input, train));
      p.value.at(idx) = orig - step;
      const double lm = loss_of(model.forward(input, train));
      p.value.at(idx) = orig;
      const double numeric = (lp - lm) / (2 * step);
      const double analytic = p.grad.at(idx);
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        report.finite = false;
        continue;
      }
      // The floor compares near-zero gradients absolutely; a bias feeding a
      // batch norm, for example, has a true gradient of exactly zero.
      const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-4);
      const double rel = std::abs(analytic - numeric) / denom;
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

// Finite-difference check of the gradient with respect to the input, through
// the same random projection loss. Returns the worst relative error over the
// sampled input entries; needed for layers with no parameters of their own.
inline double grad_check_input(SequentialT<double>& model, const TensorT<double>& x0,
                               uint64_t seed, int64_t samples = 24,
                               bool train = true, double step = 1e-5) {
  TensorT<double> y = model.forward(x0, train);
  TensorT<double> proj(y.shape());
  Rng prng(derive_seed(seed, 0x696e70));
  for (auto& v : proj.vec()) v = prng.uniform(-1.0, 1.0);

  auto loss_of = [&](const TensorT<double>& out) {
    double s = 0;
    for (int64_t i = 0; i < out.numel(); ++i) s += proj.at(i) * out.at(i);
    return s;
  };

  model.zero_grad();
  model.forward(x0, train);
  TensorT<double> gx = model.backward(proj, /*need_gx=*/true);

  TensorT<double> x = x0;
  Rng rng(derive_seed(seed, 0x696e71));
  double worst = 0;
  const int64_t count = std::min<int64_t>(samples, x.numel());
  for (int64_t s = 0; s < count; ++s) {
    const int64_t i = x.numel() <= samples ? s : int64_t(rng.uniform_int(uint64_t(x.numel())));
    const double orig = x.at(i);
    x.at(i) = orig + step;
    const double lp = loss_of(model.forward(x, train));
    x.at(i) = orig - step;
    const double lm = loss_of(model.forward(x, train));
    x.at(i) = orig;
    const double numeric = (lp - lm) / (2 * step);
    const double analytic = gx.at(i);
    if (!std::isfinite(numeric) || !std::isfinite(analytic))
      return std::numeric_limits<double>::infinity();
    const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-4);
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

// One module configuration checked against finite differences: worst
// relative error over its parameter and input gradients.
struct BatteryCase {
  std::string name;
  double max_rel_err = 0.0;
  bool finite = true;
  bool pass = false;
};

// Every layer kind in the toolkit plus the composed encoder, decoder, and
// classification-head stacks, checked in double precision on small shapes.
std::vector<BatteryCase> run_gradcheck_battery(uint64_t seed, double tol = 1e-4,
                                               int64_t samples_per_tensor = 24);

}  // namespace lava::nn
