#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lava/adam.hpp"
#include "lava/corpus.hpp"
#include "lava/layers.hpp"
#include "lava/tensor.hpp"

namespace lava {

// Convolutional autoencoder over raw waveforms. The encoder downsamples by
// a factor of 16 through four strided conv blocks; the decoder mirrors it
// with transposed convolutions and squashes the output through tanh.

inline constexpr int kLatentChannels = 256;
inline constexpr int kEncoderStrideTotal = 16;
inline constexpr float kDefaultLossBeta = 1e-4f;

// Encoder: 4 x [Conv1d(k=9, s=2, p=4) -> BatchNorm1d -> ReLU],
// channels 1 -> 32 -> 64 -> 128 -> 256.
template <class T>
nn::SequentialT<T> build_encoder(uint64_t seed) {
  nn::SequentialT<T> net;
  int chans[5] = {1, 32, 64, 128, 256};
  Rng rng(derive_seed(seed, 0x656e63));
  for (int i = 0; i < 4; ++i) {
    net.template add<nn::Conv1dT<T>>("enc.conv" + std::to_string(i + 1),
                                     chans[i], chans[i + 1], 9, 2, 4, rng);
    net.template add<nn::BatchNorm1dT<T>>("enc.bn" + std::to_string(i + 1),
                                          chans[i + 1]);
    net.template add<nn::ActivationLayerT<T>>(
        "enc.relu" + std::to_string(i + 1), nn::Activation::ReLU);
  }
  return net;
}

// Decoder: 4 x ConvTranspose1d(k=9, s=2, p=4, output_padding=1),
// channels 256 -> 128 -> 64 -> 32 -> 1. BatchNorm+ReLU after the first
// three, tanh after the last.
template <class T>
nn::SequentialT<T> build_decoder(uint64_t seed) {
  nn::SequentialT<T> net;
  int chans[5] = {256, 128, 64, 32, 1};
  Rng rng(derive_seed(seed, 0x646563));
  for (int i = 0; i < 4; ++i) {
    net.template add<nn::ConvTranspose1dT<T>>(
        "dec.tconv" + std::to_string(i + 1), chans[i], chans[i + 1], 9, 2, 4,
        1, rng);
    if (i < 3) {
      net.template add<nn::BatchNorm1dT<T>>("dec.bn" + std::to_string(i + 1),
                                            chans[i + 1]);
      net.template add<nn::ActivationLayerT<T>>(
          "dec.relu" + std::to_string(i + 1), nn::Activation::ReLU);
    } else {
      net.template add<nn::ActivationLayerT<T>>("dec.tanh",
                                                nn::Activation::Tanh);
    }
  }
  return net;
}

// Smoothed L1 reconstruction loss, mean reduction. Quadratic inside the
// strict |x - xhat| < beta window, linear outside; the boundary point lies
// on the linear branch. Optionally writes d(loss)/d(xhat) into grad.
template <class T>
T smoothed_l1(const TensorT<T>& x, const TensorT<T>& xhat, T beta,
              TensorT<T>* grad = nullptr) {
  if (!x.same_shape(xhat))
    throw ValidationError("smoothed_l1: shape mismatch " + x.shape_str() +
                          " vs " + xhat.shape_str());
  if (!(beta > T(0))) throw ValidationError("smoothed_l1: beta must be > 0");
  if (grad) *grad = TensorT<T>::zeros(x.shape());
  const int64_t n = x.numel();
  const T* px = x.data();
  const T* ph = xhat.data();
  T* pg = grad ? grad->data() : nullptr;
  double acc = 0.0;
  const T inv_n = T(1) / T(n);
  for (int64_t i = 0; i < n; ++i) {
    T d = px[i] - ph[i];
    T a = std::abs(d);
    if (a < beta) {
      acc += 0.5 * double(d) * double(d) / double(beta);
      if (pg) pg[i] = (ph[i] - px[i]) / beta * inv_n;
    } else {
      acc += double(a) - 0.5 * double(beta);
      if (pg) pg[i] = (d > T(0) ? T(-1) : T(1)) * inv_n;
    }
  }
  return T(acc / double(n));
}

struct Autoencoder {
  nn::Sequential encoder;
  nn::Sequential decoder;

  static Autoencoder create(uint64_t seed) {
    return {build_encoder<float>(seed), build_decoder<float>(seed)};
  }
};

// Deterministic encode of one preprocessed waveform. Returns the latent
// feature map with shape (256, input_length / 16).
Tensor encode(nn::Sequential& encoder, const Waveform& w);

// Full round trip through encoder and decoder; returns a waveform-length
// tensor with values in (-1, 1).
Tensor reconstruct(Autoencoder& ae, const Waveform& w);

// Validation-loss early stopping with zero min-delta: an epoch improves only
// if its loss is strictly below the best seen. Training stops once more than
// `patience` consecutive epochs have passed without improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw ValidationError("early stopping: patience must be >= 1");
  }

  // Feed one epoch's validation loss; returns true if it is the new best.
  bool observe(double val_loss) {
    ++epoch_;
    if (best_epoch_ == 0 || val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ > patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_loss_ = 0.0;
};

struct AeTrainConfig {
  int max_epochs = 50;
  int batch_size = 16;
  float lr = 1e-4f;
  float weight_decay = 1e-5f;
  int patience = 5;
  float beta = kDefaultLossBeta;
  uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool best_so_far = false;
};

struct AeTrainResult {
  Autoencoder model;  // parameters from the best validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

// Core training loop over in-memory waveforms (each a rank-1 tensor, all
// the same length). Early stopping: training halts once the validation
// loss has failed to improve on the best seen for more than `patience`
// consecutive epochs, and the returned model carries the best epoch's
// parameters.
AeTrainResult train_autoencoder(const std::vector<Tensor>& train,
                                const std::vector<Tensor>& val,
                                const AeTrainConfig& cfg);

// Manifest-driven wrapper: loads and preprocesses the train and val splits,
// rejecting any entry labeled real (the autoencoder only ever sees fakes).
// Entry paths resolve relative to the manifest's directory.
AeTrainResult train_autoencoder(const std::vector<ManifestEntry>& entries,
                                const std::string& manifest_path,
                                const AeTrainConfig& cfg);

// Single optimization step on one batch; exposed for the training loop and
// for closed-loop convergence tests. Returns the batch loss.
float autoencoder_step(Autoencoder& ae, nn::Adam& opt, const Tensor& batch,
                       float beta);

// Mean reconstruction loss of a batch in eval mode.
double autoencoder_eval_loss(Autoencoder& ae, const std::vector<Tensor>& data,
                             int batch_size, float beta);

}  // namespace lava
