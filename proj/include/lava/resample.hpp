#pragma once

#include "lava/wav.hpp"

namespace lava {

// Band-limited rate conversion by Kaiser-windowed sinc interpolation
// (beta 8.0, 32 zero crossings per side, cutoff 0.9 * min(rate, target) / 2).
// Matching rates return the input unchanged, bit for bit.
Waveform resample(const Waveform& w, int target_rate = 16000);

}  // namespace lava
