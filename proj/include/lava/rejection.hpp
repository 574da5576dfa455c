#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "lava/corpus.hpp"
#include "lava/heads.hpp"

namespace lava {

// Open-set rejection: thresholds are calibrated on training-set softmax
// confidences and applied to every prediction; anything under the cutoff
// is renamed "unknown" while keeping the raw argmax for diagnostics.

// Confidence cutoff that rejects every prediction (confidences never
// exceed 1).
inline constexpr float kRejectAll = 2.0f;

struct CalibrationRecord {
  float confidence = 0.0f;  // max softmax probability, in (0, 1]
  bool correct = false;
};

struct RejectionThreshold {
  std::string level;  // "ada" | "admr"
  float tau = kRejectAll;
  float target_acc = 0.85f;
  bool failed = false;  // no threshold met the accuracy target
  int n_records = 0;
  double accepted_fraction = 0.0;
  double accepted_accuracy = 0.0;
};

struct Prediction {
  std::string label;       // vocab entry, or "unknown" when rejected
  int class_index = -1;    // raw argmax, kept even when rejected
  float confidence = 0.0f;
  bool accepted = false;
};

// One record per sample of the chosen split: predicted-class confidence and
// whether the argmax matches the entry's label at the head's level.
std::vector<CalibrationRecord> collect_confidences(
    Head& head, const std::vector<ManifestEntry>& entries,
    const std::string& manifest_path, const std::string& split = "train");

// In-memory variant over waveform tensors and vocabulary-index labels.
std::vector<CalibrationRecord> collect_confidences(
    Head& head, const std::vector<Tensor>& waves, const std::vector<int>& labels);

// Smallest threshold (over the distinct confidence values) whose accepted
// subset reaches the target accuracy; the reject-all sentinel with the
// failure flag when none does.
RejectionThreshold calibrate_threshold(const std::vector<CalibrationRecord>& records,
                                       float target_acc = 0.85f,
                                       const std::string& level = "");

// Accept/reject rule on one probability vector: accepted iff the maximum
// probability is >= tau (so tau equal to the confidence accepts).
Prediction decide(const std::vector<float>& probs,
                  const std::vector<std::string>& vocab, float tau);

// Report form; tau and target_acc are exact decimal strings so reading them
// back reproduces the float bit for bit.
nlohmann::json threshold_to_json(const RejectionThreshold& th);

}  // namespace lava
