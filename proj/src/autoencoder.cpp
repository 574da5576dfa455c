#include "lava/autoencoder.hpp"

#include <algorithm>
#include <numeric>

#include "lava/adam.hpp"

namespace lava {

namespace {

Tensor to_input(const Waveform& w) {
  if (w.rate != kTargetRate || int64_t(w.samples.size()) != kTargetLength)
    throw ValidationError(
        "encode: waveform must be preprocessed to " +
        std::to_string(kTargetLength) + " samples at " +
        std::to_string(kTargetRate) + " Hz, got " +
        std::to_string(w.samples.size()) + " at " + std::to_string(w.rate));
  return Tensor({1, 1, kTargetLength}, w.samples);
}

Tensor make_batch(const std::vector<Tensor>& data,
                  const std::vector<int64_t>& idx, int64_t lo, int64_t hi) {
  const int64_t len = data[size_t(idx[size_t(lo)])].numel();
  Tensor batch = Tensor::zeros({hi - lo, 1, len});
  for (int64_t b = lo; b < hi; ++b) {
    const Tensor& s = data[size_t(idx[size_t(b)])];
    std::copy(s.data(), s.data() + len, batch.data() + (b - lo) * len);
  }
  return batch;
}

std::vector<std::vector<float>> snapshot_params(Autoencoder& ae) {
  std::vector<std::vector<float>> out;
  for (auto* p : ae.encoder.params()) out.push_back(p->value.vec());
  for (auto* p : ae.decoder.params()) out.push_back(p->value.vec());
  return out;
}

void restore_params(Autoencoder& ae,
                    const std::vector<std::vector<float>>& snap) {
  size_t i = 0;
  for (auto* p : ae.encoder.params()) p->value.vec() = snap[i++];
  for (auto* p : ae.decoder.params()) p->value.vec() = snap[i++];
}

}  // namespace

Tensor encode(nn::Sequential& encoder, const Waveform& w) {
  Tensor z = encoder.forward(to_input(w), false);
  return Tensor({z.dim(1), z.dim(2)}, z.vec());
}

Tensor reconstruct(Autoencoder& ae, const Waveform& w) {
  Tensor y = ae.decoder.forward(ae.encoder.forward(to_input(w), false), false);
  return Tensor({y.dim(2)}, y.vec());
}

float autoencoder_step(Autoencoder& ae, nn::Adam& opt, const Tensor& batch,
                       float beta) {
  Tensor z = ae.encoder.forward(batch, true);
  Tensor xhat = ae.decoder.forward(z, true);
  Tensor grad;
  float loss = smoothed_l1(batch, xhat, beta, &grad);
  ae.encoder.zero_grad();
  ae.decoder.zero_grad();
  Tensor gz = ae.decoder.backward(grad, true);
  ae.encoder.backward(gz, false);
  opt.step();
  return loss;
}

double autoencoder_eval_loss(Autoencoder& ae, const std::vector<Tensor>& data,
                             int batch_size, float beta) {
  std::vector<int64_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  for (int64_t lo = 0; lo < int64_t(data.size()); lo += batch_size) {
    int64_t hi = std::min<int64_t>(lo + batch_size, int64_t(data.size()));
    Tensor batch = make_batch(data, idx, lo, hi);
    Tensor xhat = ae.decoder.forward(ae.encoder.forward(batch, false), false);
    total += double(smoothed_l1(batch, xhat, beta)) * double(hi - lo);
  }
  return total / double(data.size());
}

AeTrainResult train_autoencoder(const std::vector<Tensor>& train,
                                const std::vector<Tensor>& val,
                                const AeTrainConfig& cfg) {
  if (train.empty()) throw ValidationError("train_autoencoder: empty train split");
  if (val.empty()) throw ValidationError("train_autoencoder: empty val split");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1 ||
      !(cfg.beta > 0.0f))
    throw ValidationError("train_autoencoder: invalid config");

  AeTrainResult res;
  res.model = Autoencoder::create(cfg.seed);
  auto params = res.model.encoder.trainable_params();
  for (auto* p : res.model.decoder.trainable_params()) params.push_back(p);
  nn::Adam::Config ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  nn::Adam opt(params, ocfg);

  EarlyStopping stopper(cfg.patience);
  std::vector<std::vector<float>> best_snap;

  std::vector<int64_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, uint64_t(epoch)));
    shuffle_rng.shuffle(idx);

    double train_total = 0.0;
    for (int64_t lo = 0; lo < int64_t(train.size()); lo += cfg.batch_size) {
      int64_t hi = std::min<int64_t>(lo + cfg.batch_size, int64_t(train.size()));
      Tensor batch = make_batch(train, idx, lo, hi);
      train_total +=
          double(autoencoder_step(res.model, opt, batch, cfg.beta)) *
          double(hi - lo);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = train_total / double(train.size());
    st.val_loss =
        autoencoder_eval_loss(res.model, val, cfg.batch_size, cfg.beta);
    st.best_so_far = stopper.observe(st.val_loss);
    res.history.push_back(st);
    res.stopped_epoch = epoch;

    if (st.best_so_far) best_snap = snapshot_params(res.model);
    if (stopper.should_stop()) break;
  }

  res.best_epoch = stopper.best_epoch();
  restore_params(res.model, best_snap);
  return res;
}

AeTrainResult train_autoencoder(const std::vector<ManifestEntry>& entries,
                                const std::string& manifest_path,
                                const AeTrainConfig& cfg) {
  std::vector<Tensor> train, val;
  for (const auto& e : entries) {
    if (e.split != "train" && e.split != "val") continue;
    if (e.authenticity != "fake")
      throw ValidationError("train_autoencoder: entry '" + e.path +
                            "' is labeled real; training data must be fake");
    Waveform w = preprocess(resolve_path(manifest_path, e.path));
    Tensor t(std::vector<int64_t>{int64_t(w.samples.size())});
    t.vec() = w.samples;
    (e.split == "train" ? train : val).push_back(std::move(t));
  }
  if (train.empty()) throw ValidationError("train_autoencoder: no train entries");
  if (val.empty()) throw ValidationError("train_autoencoder: no val entries");
  return train_autoencoder(train, val, cfg);
}

}  // namespace lava
