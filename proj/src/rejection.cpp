#include "lava/rejection.hpp"

#include <algorithm>
#include <cmath>

#include "lava/checkpoint.hpp"
#include "lava/nn.hpp"

namespace lava {

namespace {

CalibrationRecord record_from_logits(const std::vector<float>& logits,
                                     int true_label) {
  std::vector<float> probs = nn::softmax(logits);
  int arg = int(std::max_element(probs.begin(), probs.end()) - probs.begin());
  return {probs[size_t(arg)], arg == true_label};
}

}  // namespace

std::vector<CalibrationRecord> collect_confidences(
    Head& head, const std::vector<Tensor>& waves,
    const std::vector<int>& labels) {
  if (waves.empty()) throw ValidationError("collect_confidences: empty split");
  if (waves.size() != labels.size())
    throw ValidationError("collect_confidences: label count mismatch");
  std::vector<CalibrationRecord> records;
  records.reserve(waves.size());
  for (size_t i = 0; i < waves.size(); ++i) {
    auto logits = head_logits_from_features(head, prefix_features(head, waves[i]));
    records.push_back(record_from_logits(logits, labels[i]));
  }
  return records;
}

std::vector<CalibrationRecord> collect_confidences(
    Head& head, const std::vector<ManifestEntry>& entries,
    const std::string& manifest_path, const std::string& split) {
  std::vector<Tensor> waves;
  std::vector<int> labels;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    int y = head.spec.index_of(head_label(head.spec, e));
    Waveform w = preprocess(resolve_path(manifest_path, e.path));
    Tensor t(std::vector<int64_t>{int64_t(w.samples.size())});
    t.vec() = w.samples;
    waves.push_back(std::move(t));
    labels.push_back(y);
  }
  if (waves.empty())
    throw ValidationError("collect_confidences: no '" + split + "' entries");
  return collect_confidences(head, waves, labels);
}

RejectionThreshold calibrate_threshold(
    const std::vector<CalibrationRecord>& records, float target_acc,
    const std::string& level) {
  if (records.empty())
    throw ValidationError("calibrate_threshold: no calibration records");
  if (!(target_acc > 0.0f) || target_acc > 1.0f)
    throw ValidationError("calibrate_threshold: target accuracy must be in (0, 1]");
  for (const auto& r : records)
    if (!(r.confidence > 0.0f) || r.confidence > 1.0f)
      throw ValidationError("calibrate_threshold: confidence outside (0, 1]");

  // Sorted descending, every distinct confidence is a candidate cutoff; the
  // accepted set at a candidate is the prefix down to it.
  std::vector<const CalibrationRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CalibrationRecord* a, const CalibrationRecord* b) {
                     return a->confidence > b->confidence;
                   });

  RejectionThreshold out;
  out.level = level;
  out.target_acc = target_acc;
  out.n_records = int(records.size());
  out.failed = true;

  int accepted = 0, correct = 0;
  int best_accepted = 0, best_correct = 0;
  for (size_t i = 0; i < sorted.size(); ++i) {
    ++accepted;
    correct += sorted[i]->correct;
    // Only the last record of a run of equal confidences closes a candidate.
    if (i + 1 < sorted.size() &&
        sorted[i + 1]->confidence == sorted[i]->confidence)
      continue;
    if (double(correct) >= double(target_acc) * double(accepted)) {
      out.tau = sorted[i]->confidence;
      out.failed = false;
      best_accepted = accepted;
      best_correct = correct;
    }
  }

  if (out.failed) {
    out.tau = kRejectAll;
    out.accepted_fraction = 0.0;
    out.accepted_accuracy = 0.0;
  } else {
    out.accepted_fraction = double(best_accepted) / double(records.size());
    out.accepted_accuracy = double(best_correct) / double(best_accepted);
  }
  return out;
}

Prediction decide(const std::vector<float>& probs,
                  const std::vector<std::string>& vocab, float tau) {
  if (probs.empty()) throw ValidationError("decide: empty probability vector");
  if (probs.size() != vocab.size())
    throw ValidationError("decide: " + std::to_string(probs.size()) +
                          " probabilities for " + std::to_string(vocab.size()) +
                          " classes");
  double sum = 0.0;
  for (float p : probs) sum += p;
  if (std::abs(sum - 1.0) > 1e-5)
    throw ValidationError("decide: probabilities sum to " + std::to_string(sum));

  Prediction pred;
  pred.class_index =
      int(std::max_element(probs.begin(), probs.end()) - probs.begin());
  pred.confidence = probs[size_t(pred.class_index)];
  pred.accepted = pred.confidence >= tau;
  pred.label = pred.accepted ? vocab[size_t(pred.class_index)] : "unknown";
  return pred;
}

nlohmann::json threshold_to_json(const RejectionThreshold& th) {
  return {{"level", th.level},
          {"tau", format_exact(th.tau)},
          {"target_acc", format_exact(th.target_acc)},
          {"failed", th.failed},
          {"n_records", th.n_records},
          {"accepted_fraction", th.accepted_fraction},
          {"accepted_accuracy", th.accepted_accuracy}};
}

}  // namespace lava
