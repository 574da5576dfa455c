#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lava/heads.hpp"
#include "lava/metrics.hpp"
#include "lava/rejection.hpp"

namespace lava {

// Hierarchical inference: the ADA head attributes the technology; samples it
// accepts as Codec are forwarded to the ADMR head for model recognition.
// Rejection applies independently at both levels.

inline constexpr const char* kCodecLabel = "Codec";
inline constexpr const char* kUnknownLabel = "unknown";

struct FinalAttribution {
  std::string technology;            // technology label or "unknown"
  std::optional<std::string> model;  // only for accepted-Codec samples

  bool operator==(const FinalAttribution&) const = default;
};

struct PipelineResult {
  Prediction ada;
  std::optional<Prediction> admr;
  FinalAttribution final;
};

// Probability producers for the two levels; the real system wraps trained
// heads, harness tests substitute stubs. The ADMR producer is evaluated
// lazily, only for samples routed to level 2.
using ProbFn = std::function<std::vector<float>()>;

// Pure routing rule over one sample's probability vectors. A null admr
// producer is a configuration error if and only if routing reaches level 2.
PipelineResult route(const std::vector<float>& ada_probs,
                     const ProbFn& admr_probs,
                     const std::vector<std::string>& ada_vocab,
                     const std::vector<std::string>& admr_vocab, float tau_ada,
                     float tau_admr);

struct PipelineModel {
  Head* ada = nullptr;
  Head* admr = nullptr;  // may stay null until routing needs it
  float tau_ada = kRejectAll;
  float tau_admr = kRejectAll;
};

// Full-path inference on one preprocessed waveform.
PipelineResult infer(const Waveform& w, PipelineModel& model);

nlohmann::json pipeline_result_to_json(const PipelineResult& r);

// Per-sample scorer used by the evaluation harnesses: maps a manifest entry
// to its two probability vectors (ADMR lazily). Returned by model_scorer for
// trained heads; tests pass stubs with known outcomes.
using SampleScorer =
    std::function<std::pair<std::vector<float>, ProbFn>(const ManifestEntry&)>;

// Vocabularies and thresholds the harnesses route with.
struct RoutingConfig {
  std::vector<std::string> ada_vocab = kTechnologies;
  std::vector<std::string> admr_vocab = kModels;
  float tau_ada = 0.0f;  // zero accepts every prediction
  float tau_admr = 0.0f;
};

// Scorer that loads each entry's audio, runs the shared frozen prefix once,
// and evaluates each head on the cached features.
SampleScorer model_scorer(PipelineModel& model, const std::string& manifest_path);

struct GroupBreakdown {
  int64_t count = 0;
  int64_t ada_accepted = 0;
  int64_t ada_rejected = 0;
  int64_t ada_correct = 0;  // rule depends on the group, see report definition
  int64_t ada_errors = 0;
  int64_t forwarded = 0;
};

struct ModelBreakdown {
  int64_t forwarded = 0;
  int64_t correct_model = 0;
  int64_t wrong_model = 0;
  int64_t rejected = 0;
};

struct ErrorPropReport {
  std::string definition;  // the exact error-accounting rule, spelled out
  int64_t total = 0;
  int64_t real_count = 0;
  int64_t fake_count = 0;
  int64_t ada_errors = 0;
  int64_t ada_correct = 0;
  double ada_error_rate = 0.0;
  int64_t forwarded = 0;
  int64_t admr_errors = 0;
  double admr_error_rate = 0.0;  // among forwarded samples
  bool admr_rate_defined = true; // false when nothing was forwarded
  std::map<std::string, GroupBreakdown> per_group;   // "real", technologies
  std::map<std::string, ModelBreakdown> per_model;   // true Codec models
};

// Error propagation through the hierarchy on a mixed real+fake test split.
// ADA errors: real accepted as anything, fake rejected, or fake attributed
// to the wrong technology. ADMR errors (among forwarded samples): a true
// Codec sample whose final model attribution is not its true model, or any
// acceptance of a forwarded non-Codec or real sample.
ErrorPropReport error_propagation_eval(const std::vector<ManifestEntry>& entries,
                                       const SampleScorer& scorer,
                                       const RoutingConfig& routing);

nlohmann::json error_prop_to_json(const ErrorPropReport& r);

struct GeneralizationReport {
  int64_t total = 0;
  int64_t ada_rejected = 0;
  double ada_rejection_rate = 0.0;
  // Distribution of ADA labels over accepted samples (fractions of accepted).
  std::map<std::string, int64_t> accepted_label_counts;
  std::map<std::string, double> accepted_label_fractions;
  // Level-2 decisions over forwarded samples: per-model acceptance plus
  // rejection, fractions of forwarded.
  int64_t forwarded = 0;
  std::map<std::string, int64_t> admr_decision_counts;  // models + "unknown"
  std::map<std::string, double> admr_decision_fractions;
  // Behavioral expectation, when configured: "reject" or "reject-or-<label>".
  std::string expectation;
  double conforming_fraction = 0.0;
  bool expectation_set = false;
};

// Open-set behavior on fakes from a source absent from all training data.
GeneralizationReport generalization_eval(const std::vector<ManifestEntry>& entries,
                                         const SampleScorer& scorer,
                                         const RoutingConfig& routing,
                                         const std::string& expectation = "");

nlohmann::json generalization_to_json(const GeneralizationReport& r);

// Metrics-harness pass: per-level labeled predictions for a test split.
// ADA pairs cover every fake entry with a technology label; ADMR pairs cover
// every Codec entry with a model label (scored directly, routing ignored).
struct EvalPairs {
  std::vector<LabeledPrediction> ada;
  std::vector<LabeledPrediction> admr;
};

EvalPairs collect_eval_pairs(const std::vector<ManifestEntry>& entries,
                             const SampleScorer& scorer,
                             const RoutingConfig& routing);

}  // namespace lava
