#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lava/autoencoder.hpp"
#include "lava/checkpoint.hpp"
#include "lava/corpus.hpp"
#include "lava/heads.hpp"
#include "lava/pipeline.hpp"
#include "lava/rejection.hpp"

namespace lava {

// End-to-end orchestration: synthesize a corpus, train the autoencoder and
// both heads, calibrate rejection thresholds, evaluate, and write a
// reproducible report bundle. Every knob lives in the config so the same
// code path serves desk-scale runs, ablation sweeps, and smoke tests.

struct CorpusScale {
  int tech_train = 300;  // per technology; the Codec quota is split over F01..F06
  int tech_val = 100;
  int tech_test = 100;
  int real_test = 100;
  int unseen_test = 100;
};

struct AeScale {
  int train_cap = 64;  // stratified over the fake classes
  int val_cap = 16;
  int max_epochs = 2;
  int batch_size = 16;
  float lr = 1e-4f;
  int patience = 5;
  int64_t crop = 12000;  // 0 trains on full-length waveforms
};

struct HeadScale {
  int max_epochs = 5;
  int batch_size = 16;
  float lr = 1e-3f;
  int patience = 2;
  int64_t crop = 4800;
  int ada_train_cap = 96;  // per technology, 0 = all
  int ada_val_cap = 32;
};

struct AblationScale {
  bool enabled = false;
  std::vector<uint64_t> seeds = {1, 2, 3};
  int max_epochs = 4;
  int train_cap = 0;  // per model, 0 = all
  int val_cap = 0;
};

struct ExperimentConfig {
  std::string out_dir;
  uint64_t seed = 7;
  bool attention = true;
  float target_acc = 0.85f;
  int64_t calibration_crop = 4800;  // 0 scores full-length
  std::string expectation = "reject";
  CorpusScale corpus;
  AeScale ae;
  HeadScale heads;
  AblationScale ablation;
};

// Strict parse: unknown keys, wrong types, or out-of-range values are
// validation errors naming the offending field.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

struct AblationRun {
  uint64_t seed = 0;
  bool attention = false;
  double admr_macro_f1 = 0.0;  // rejection off, evaluated at the training crop
};

struct ExperimentSummary {
  std::string out_dir;
  double ada_macro_f1 = 0.0;   // rejection off, full-length test split
  double admr_macro_f1 = 0.0;  // rejection off, full-length test split
  RejectionThreshold ada_threshold;
  RejectionThreshold admr_threshold;
  double unseen_rejection_rate = 0.0;
  std::vector<AblationRun> ablation;
  std::vector<std::string> report_files;  // relative to out_dir
  std::map<std::string, double> stage_seconds;
  double total_seconds = 0.0;
};

// Synthesis spec for a scaled corpus: ASV and FoR at the per-technology
// counts, the Codec quota split over F01..F06, real and unseen test-only.
SynthSpec corpus_spec(const CorpusScale& scale, const std::string& out_dir,
                      uint64_t seed);

// Checkpoint carrying both halves of a trained autoencoder plus its
// training provenance.
Checkpoint autoencoder_checkpoint(AeTrainResult& res, uint64_t seed,
                                  int64_t train_crop);

nlohmann::json experiment_summary_to_json(const ExperimentSummary& s);

// Runs every stage in order; any stage failure rethrows the underlying
// error prefixed with the stage name. All outputs except the run manifest's
// timestamp block are byte-deterministic in (config, seed).
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

}  // namespace lava
