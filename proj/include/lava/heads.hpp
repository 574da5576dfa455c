#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lava/autoencoder.hpp"
#include "lava/checkpoint.hpp"
#include "lava/corpus.hpp"
#include "lava/layers.hpp"

namespace lava {

// Attribution heads on top of the frozen encoder. Each head owns a private
// copy of the encoder's final conv block and trains only that copy plus its
// own attention gate and classifier; the first three encoder blocks and all
// batch-norm tensors stay frozen, with batch norms pinned to eval mode.

struct HeadSpec {
  std::string level;               // "ada" | "admr"
  std::vector<std::string> vocab;  // class labels, logits index order
  bool attention = true;

  static HeadSpec ada(bool attention = true) {
    return {"ada", kTechnologies, attention};
  }
  static HeadSpec admr(bool attention = true) {
    return {"admr", kModels, attention};
  }

  int n_classes() const { return int(vocab.size()); }
  int index_of(const std::string& label) const;
};

struct Head {
  HeadSpec spec;
  nn::Sequential prefix;  // frozen encoder blocks 1..3
  nn::Sequential stack;   // private final conv -> frozen bn -> relu
                          // [-> attention] -> pool -> flatten -> mlp
  nn::AttentionGateT<float>* attn = nullptr;  // null when attention disabled
};

// Fresh head with seeded parameters (prefix included, normally overwritten
// from a checkpoint).
Head make_head(const HeadSpec& spec, uint64_t seed);

// Head whose frozen prefix, private conv copy, and frozen bn come from a
// trained autoencoder checkpoint; gate and classifier are freshly seeded.
Head head_from_encoder(const HeadSpec& spec, const Checkpoint& encoder_ckpt,
                       uint64_t seed);

Checkpoint head_to_checkpoint(Head& head, uint64_t seed);
Head head_from_checkpoint(const Checkpoint& ckpt);

// Gated latent per the head's attention module: z * sigmoid(conv1x1(z)).
// Identity when the head was built without attention. z is (256, T').
Tensor attention_apply(Head& head, const Tensor& z);

// Frozen-prefix features of one waveform tensor (any length), shape
// (128, L/8). The same features feed training, calibration, and inference.
Tensor prefix_features(Head& head, const Tensor& wave);

// Eval-mode logits from cached prefix features.
std::vector<float> head_logits_from_features(Head& head, const Tensor& feat);

// Full eval path on a preprocessed waveform; returns n_classes raw logits.
std::vector<float> head_forward(Head& head, const Waveform& w);

struct HeadTrainConfig {
  int max_epochs = 50;
  int batch_size = 16;
  float lr = 1e-4f;
  float weight_decay = 1e-5f;
  int patience = 5;
  uint64_t seed = 0;
  int64_t train_crop = 0;  // crop loaded waveforms to this many samples (0 = full)
};

struct HeadEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  bool best_so_far = false;
};

struct HeadTrainResult {
  std::vector<HeadEpochStats> history;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

// Core training loop over in-memory waveform tensors with vocabulary-index
// labels. Only the head's trainable set is updated; every frozen tensor is
// bit-identical afterwards.
HeadTrainResult train_head(Head& head, const std::vector<Tensor>& train_x,
                           const std::vector<int>& train_y,
                           const std::vector<Tensor>& val_x,
                           const std::vector<int>& val_y,
                           const HeadTrainConfig& cfg);

// Manifest-driven wrapper. ADA trains on fake train/val entries labeled by
// technology and requires all three technologies present; ADMR trains on
// Codec entries labeled by model. Labels outside the vocabulary, real
// entries, or empty splits are validation errors.
HeadTrainResult train_head(Head& head, const std::vector<ManifestEntry>& entries,
                           const std::string& manifest_path,
                           const HeadTrainConfig& cfg);

// Label for one manifest entry at this head's level ("ada" -> technology,
// "admr" -> model). Throws when the field is absent or out of vocabulary.
std::string head_label(const HeadSpec& spec, const ManifestEntry& entry);

}  // namespace lava
