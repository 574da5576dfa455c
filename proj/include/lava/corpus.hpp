#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lava/resample.hpp"
#include "lava/tensor.hpp"
#include "lava/wav.hpp"

namespace lava {

inline constexpr int kTargetRate = 16000;
inline constexpr int64_t kTargetLength = 48000;

inline const std::vector<std::string> kTechnologies = {"ASV", "FoR", "Codec"};
inline const std::vector<std::string> kModels = {"F01", "F02", "F03", "F04", "F05", "F06"};

// Divides every sample by the peak magnitude; all-zero input is returned
// unchanged with the silence flag set.
Waveform normalize_peak(const Waveform& w);

// Keeps the first n samples, or zero-pads up to n.
Waveform fit_length(const Waveform& w, int64_t n = kTargetLength);

// load -> resample -> normalize_peak -> fit_length
Waveform preprocess(const std::string& path);
Waveform preprocess(Waveform w);

// First n samples of a rank-1 waveform tensor; the tensor itself when n <= 0
// or n covers the whole waveform.
Tensor crop_front(const Tensor& w, int64_t n);

struct ManifestEntry {
  std::string path;
  std::optional<std::string> technology;  // ASV | FoR | Codec
  std::optional<std::string> model;       // F01..F06, implies technology Codec
  std::string authenticity;               // real | fake
  std::string split;                      // train | val | test

  bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

// Resolves an entry's (manifest-relative) path against the directory of the
// manifest file it came from.
std::string resolve_path(const std::string& manifest_path, const std::string& entry_path);

struct ClassRecipe {
  double bandlimit_hz = 0;  // 0 keeps all harmonics
  int quant_levels = 0;     // 0 skips quantization
  double comb_hz = 0;       // 0 skips the comb resonator
  double noise_amp = 0;
};

struct ClassCounts {
  int train = 0, val = 0, test = 0;
};

// Synthetic stand-in corpus. Class names: "real", the three technologies
// (ASV/FoR fakes, and F01..F06 which are the Codec technology's models), and
// "unseen" (a codec-style recipe absent from training, for the
// generalization harness).
struct SynthSpec {
  uint64_t seed = 0;
  std::string out_dir;
  int rate = kTargetRate;
  int64_t length = kTargetLength;
  std::map<std::string, ClassCounts> counts;
  std::map<std::string, ClassRecipe> recipes = default_recipes();

  static std::map<std::string, ClassRecipe> default_recipes();
};

// Desk-scale default: 300/100/100 per technology, the Codec quota split
// evenly over F01..F06, plus test-only real and unseen pools.
SynthSpec desk_synth_spec(const std::string& out_dir, uint64_t seed);

// Writes one WAV per sample plus manifest.jsonl into spec.out_dir and
// returns the manifest. Fully determined by (spec, seed).
std::vector<ManifestEntry> synth_corpus(const SynthSpec& spec);

// Renders a single synthetic sample without touching disk.
Waveform synth_sample(const SynthSpec& spec, const std::string& class_name, int64_t index);

}  // namespace lava
