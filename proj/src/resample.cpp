#include "lava/resample.hpp"

#include <cmath>

namespace lava {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kKaiserBeta = 8.0;
constexpr int kZeroCrossings = 32;

double bessel_i0(double x) {
  // power series; terms fall off fast for the argument range used here
  double sum = 1.0, term = 1.0;
  const double half = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= half / k;
    const double add = term * term;
    sum += add;
    if (add < sum * 1e-16) break;
  }
  return sum;
}

}  // namespace

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ValidationError("resample: target rate must be positive");
  if (w.rate <= 0) throw ValidationError("resample: source rate must be positive");
  if (w.rate == target_rate) return w;

  const int64_t n_in = w.length();
  const int64_t n_out = static_cast<int64_t>(
      std::llround(static_cast<double>(n_in) * target_rate / w.rate));
  Waveform out;
  out.rate = target_rate;
  out.silence = w.silence;
  out.samples.assign(static_cast<size_t>(n_out), 0.0f);
  if (n_in == 0 || n_out == 0) return out;

  // cutoff in cycles per input sample; sinc zeros fall every 1/(2 fc) samples
  const double fc = 0.9 * std::min(w.rate, target_rate) / 2.0 / w.rate;
  const double half_width = kZeroCrossings / (2.0 * fc);
  const double i0_beta = bessel_i0(kKaiserBeta);
  const double step = static_cast<double>(w.rate) / target_rate;

  for (int64_t i = 0; i < n_out; ++i) {
    const double center = i * step;
    const int64_t j_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(center - half_width)));
    const int64_t j_hi =
        std::min<int64_t>(n_in - 1, static_cast<int64_t>(std::floor(center + half_width)));
    double acc = 0.0, wsum = 0.0;
    for (int64_t j = j_lo; j <= j_hi; ++j) {
      const double tau = j - center;
      const double u = 2.0 * fc * tau;
      const double sinc = u == 0.0 ? 1.0 : std::sin(kPi * u) / (kPi * u);
      const double r = tau / half_width;
      const double window = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      const double weight = sinc * window;
      acc += weight * w.samples[static_cast<size_t>(j)];
      wsum += weight;
    }
    // normalizing by the realized weight sum keeps DC exact, including at
    // the edges where the kernel is truncated
    out.samples[static_cast<size_t>(i)] = wsum != 0.0 ? static_cast<float>(acc / wsum) : 0.0f;
  }
  return out;
}

}  // namespace lava
