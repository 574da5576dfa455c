#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lava/common.hpp"

namespace lava {

struct Waveform {
  std::vector<float> samples;
  int rate = 16000;
  // set by normalize_peak when the input was all-zero
  bool silence = false;

  int64_t length() const { return static_cast<int64_t>(samples.size()); }
};

// Reads a RIFF/WAVE file with PCM16, PCM24, or float32 samples and 1 or 2
// channels. Stereo is mixed to mono by the per-sample channel mean; integer
// samples are scaled by 2^(bits-1). Parse errors name the byte offset.
Waveform load_wav(const std::string& path);

// Same parser over an in-memory buffer; `origin` names the source in errors.
Waveform parse_wav(const std::vector<uint8_t>& bytes, const std::string& origin);

// Writes mono PCM16 at the waveform's rate.
void write_wav_pcm16(const std::string& path, const Waveform& w);

std::vector<uint8_t> encode_wav_pcm16(const Waveform& w);

}  // namespace lava
