#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "lava/rejection.hpp"

namespace lava {

// Classification metrics over (true label, prediction) pairs. Two readings
// of rejected predictions: "off" scores the raw argmax as if no threshold
// existed; "as-error" scores rejected samples as an extra "unknown"
// predicted column that is always wrong and never a precision denominator.

enum class RejectionMode { Off, AsError };

RejectionMode rejection_mode_from_string(const std::string& s);
std::string to_string(RejectionMode mode);

struct ClassMetrics {
  std::string label;
  int64_t support = 0;
  int64_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  // Zero-denominator cases resolve to 0 and drop the corresponding flag.
  bool precision_defined = true;
  bool recall_defined = true;
};

struct Metrics {
  RejectionMode mode = RejectionMode::Off;
  std::vector<std::string> vocab;       // true-label order, confusion rows
  std::vector<std::string> pred_vocab;  // confusion columns (+"unknown")
  std::vector<std::vector<int64_t>> confusion;
  std::vector<ClassMetrics> per_class;
  int64_t total = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
  double rejection_rate = 0.0;
};

struct LabeledPrediction {
  std::string truth;
  Prediction pred;
};

Metrics compute_metrics(const std::vector<LabeledPrediction>& pairs,
                        const std::vector<std::string>& vocab,
                        RejectionMode mode);

nlohmann::json metrics_to_json(const Metrics& m);

}  // namespace lava
