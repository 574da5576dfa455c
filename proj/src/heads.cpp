#include "lava/heads.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "lava/adam.hpp"
#include "lava/nn.hpp"

namespace lava {

namespace {

constexpr int64_t kPrefixChannels = 128;
constexpr int64_t kHeadChannels = 256;

void freeze_net(nn::Sequential& net) {
  for (auto* p : net.params()) p->trainable = false;
  for (size_t i = 0; i < net.size(); ++i)
    if (auto* bn = dynamic_cast<nn::BatchNorm1dT<float>*>(net.layer(i)))
      bn->frozen_stats = true;
}

void copy_param(nn::Sequential& net, const std::string& dst,
                const Checkpoint& ckpt, const std::string& src) {
  auto* p = net.find_param(dst);
  if (!p) throw InternalError("head has no parameter '" + dst + "'");
  const Tensor& t = ckpt.get(src);
  if (!t.same_shape(p->value))
    throw ValidationError("checkpoint tensor '" + src + "' has shape " +
                          t.shape_str() + ", head expects " +
                          p->value.shape_str());
  p->value = t;
}

Tensor batch_features(const std::vector<Tensor>& feats,
                      const std::vector<int64_t>& idx, int64_t lo, int64_t hi) {
  const auto& f0 = feats[size_t(idx[size_t(lo)])];
  Tensor batch = Tensor::zeros({hi - lo, f0.dim(0), f0.dim(1)});
  for (int64_t b = lo; b < hi; ++b) {
    const Tensor& f = feats[size_t(idx[size_t(b)])];
    if (!f.same_shape(f0))
      throw ValidationError("train_head: mixed feature shapes in one batch");
    std::copy(f.data(), f.data() + f.numel(), batch.data() + (b - lo) * f.numel());
  }
  return batch;
}

struct EvalResult {
  double loss = 0.0;
  double acc = 0.0;
};

EvalResult eval_head(Head& head, const std::vector<Tensor>& feats,
                     const std::vector<int>& labels, int batch_size) {
  std::vector<int64_t> idx(feats.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  int64_t hits = 0;
  for (int64_t lo = 0; lo < int64_t(feats.size()); lo += batch_size) {
    int64_t hi = std::min<int64_t>(lo + batch_size, int64_t(feats.size()));
    Tensor batch = batch_features(feats, idx, lo, hi);
    Tensor logits = head.stack.forward(batch, false);
    std::vector<int> y(labels.begin() + lo, labels.begin() + hi);
    total += double(nn::cross_entropy<float>(logits, y, nullptr)) * double(hi - lo);
    const int n = head.spec.n_classes();
    for (int64_t b = 0; b < hi - lo; ++b) {
      const float* row = logits.data() + b * n;
      int arg = int(std::max_element(row, row + n) - row);
      hits += (arg == y[size_t(b)]);
    }
  }
  return {total / double(feats.size()), double(hits) / double(feats.size())};
}

}  // namespace

int HeadSpec::index_of(const std::string& label) const {
  for (size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == label) return int(i);
  throw ValidationError("label '" + label + "' is not in the " + level +
                        " vocabulary");
}

Head make_head(const HeadSpec& spec, uint64_t seed) {
  if (spec.vocab.empty())
    throw ValidationError("head vocabulary must not be empty");
  Head head;
  head.spec = spec;

  head.prefix = nn::Sequential();
  {
    int chans[4] = {1, 32, 64, 128};
    Rng rng(derive_seed(seed, 0x70666978));
    for (int i = 0; i < 3; ++i) {
      head.prefix.add<nn::Conv1dT<float>>("enc.conv" + std::to_string(i + 1),
                                          chans[i], chans[i + 1], 9, 2, 4, rng);
      head.prefix.add<nn::BatchNorm1dT<float>>("enc.bn" + std::to_string(i + 1),
                                               chans[i + 1]);
      head.prefix.add<nn::ActivationLayerT<float>>(
          "enc.relu" + std::to_string(i + 1), nn::Activation::ReLU);
    }
  }
  freeze_net(head.prefix);

  Rng rng(derive_seed(seed, 0x68656164));
  head.stack = nn::Sequential();
  head.stack.add<nn::Conv1dT<float>>("head.conv", kPrefixChannels,
                                     kHeadChannels, 9, 2, 4, rng);
  auto* bn = head.stack.add<nn::BatchNorm1dT<float>>("head.bn", kHeadChannels);
  bn->frozen_stats = true;
  head.stack.add<nn::ActivationLayerT<float>>("head.relu", nn::Activation::ReLU);
  if (spec.attention)
    head.attn = head.stack.add<nn::AttentionGateT<float>>("head.attn",
                                                          kHeadChannels, rng);
  head.stack.add<nn::AdaptiveAvgPool1T<float>>("head.pool");
  head.stack.add<nn::FlattenT<float>>("head.flatten");
  head.stack.add<nn::LinearT<float>>("head.fc1", kHeadChannels, 128, rng);
  head.stack.add<nn::ActivationLayerT<float>>("head.fc1relu",
                                              nn::Activation::ReLU);
  head.stack.add<nn::LinearT<float>>("head.fc2", 128, spec.n_classes(), rng);

  auto* bn_param = head.stack.find_param("head.bn.weight");
  bn_param->trainable = false;
  head.stack.find_param("head.bn.bias")->trainable = false;
  return head;
}

Head head_from_encoder(const HeadSpec& spec, const Checkpoint& encoder_ckpt,
                       uint64_t seed) {
  if (encoder_ckpt.arch != kArchAutoencoder)
    throw ValidationError("head_from_encoder: expected an '" +
                          std::string(kArchAutoencoder) +
                          "' checkpoint, got '" + encoder_ckpt.arch + "'");
  Head head = make_head(spec, seed);
  for (int i = 1; i <= 3; ++i) {
    std::string conv = "enc.conv" + std::to_string(i);
    std::string bn = "enc.bn" + std::to_string(i);
    copy_param(head.prefix, conv + ".weight", encoder_ckpt, conv + ".weight");
    copy_param(head.prefix, conv + ".bias", encoder_ckpt, conv + ".bias");
    for (const char* f : {".weight", ".bias", ".running_mean", ".running_var"})
      copy_param(head.prefix, bn + f, encoder_ckpt, bn + f);
  }
  copy_param(head.stack, "head.conv.weight", encoder_ckpt, "enc.conv4.weight");
  copy_param(head.stack, "head.conv.bias", encoder_ckpt, "enc.conv4.bias");
  for (const char* f : {".weight", ".bias", ".running_mean", ".running_var"})
    copy_param(head.stack, std::string("head.bn") + f, encoder_ckpt,
               std::string("enc.bn4") + f);
  return head;
}

Checkpoint head_to_checkpoint(Head& head, uint64_t seed) {
  Checkpoint ckpt;
  ckpt.arch = kArchHead;
  ckpt.meta = {{"kind", "head"},
               {"level", head.spec.level},
               {"vocab", head.spec.vocab},
               {"attention", head.spec.attention},
               {"seed", seed},
               {"bn_eps", 1e-5},
               {"bn_momentum", 0.1}};
  pack_params(head.prefix, ckpt);
  pack_params(head.stack, ckpt);
  return ckpt;
}

Head head_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.arch != kArchHead)
    throw ValidationError("expected a '" + std::string(kArchHead) +
                          "' checkpoint, got '" + ckpt.arch + "'");
  HeadSpec spec;
  try {
    spec.level = ckpt.meta.at("level").get<std::string>();
    spec.vocab = ckpt.meta.at("vocab").get<std::vector<std::string>>();
    spec.attention = ckpt.meta.at("attention").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("head checkpoint metadata invalid: ") +
                          e.what());
  }
  if (spec.level != "ada" && spec.level != "admr")
    throw ValidationError("head checkpoint has unknown level '" + spec.level +
                          "'");
  Head head = make_head(spec, 0);
  unpack_params(ckpt, head.prefix);
  unpack_params(ckpt, head.stack);
  return head;
}

Tensor attention_apply(Head& head, const Tensor& z) {
  if (z.rank() != 2)
    throw ValidationError("attention_apply: latent must be rank 2, got " +
                          z.shape_str());
  if (z.dim(0) != kHeadChannels)
    throw ValidationError("attention_apply: latent must have " +
                          std::to_string(kHeadChannels) + " channels, got " +
                          std::to_string(z.dim(0)));
  if (!head.attn) return z;
  Tensor x({1, z.dim(0), z.dim(1)}, z.vec());
  Tensor y = head.attn->forward(x, false);
  return Tensor({z.dim(0), z.dim(1)}, y.vec());
}

Tensor prefix_features(Head& head, const Tensor& wave) {
  if (wave.rank() != 1)
    throw ValidationError("prefix_features: expected a rank-1 waveform tensor");
  Tensor x({1, 1, wave.numel()}, wave.vec());
  Tensor f = head.prefix.forward(x, false);
  return Tensor({f.dim(1), f.dim(2)}, f.vec());
}

std::vector<float> head_logits_from_features(Head& head, const Tensor& feat) {
  if (feat.rank() != 2 || feat.dim(0) != kPrefixChannels)
    throw ValidationError("head features must be (" +
                          std::to_string(kPrefixChannels) + ", T), got " +
                          feat.shape_str());
  Tensor x({1, feat.dim(0), feat.dim(1)}, feat.vec());
  Tensor logits = head.stack.forward(x, false);
  return logits.vec();
}

std::vector<float> head_forward(Head& head, const Waveform& w) {
  if (w.rate != kTargetRate || int64_t(w.samples.size()) != kTargetLength)
    throw ValidationError(
        "head_forward: waveform must be preprocessed to " +
        std::to_string(kTargetLength) + " samples at " +
        std::to_string(kTargetRate) + " Hz");
  Tensor wave(std::vector<int64_t>{kTargetLength});
  wave.vec() = w.samples;
  return head_logits_from_features(head, prefix_features(head, wave));
}

HeadTrainResult train_head(Head& head, const std::vector<Tensor>& train_x,
                           const std::vector<int>& train_y,
                           const std::vector<Tensor>& val_x,
                           const std::vector<int>& val_y,
                           const HeadTrainConfig& cfg) {
  if (train_x.empty() || val_x.empty())
    throw ValidationError("train_head: empty train or val split");
  if (train_x.size() != train_y.size() || val_x.size() != val_y.size())
    throw ValidationError("train_head: label count mismatch");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1)
    throw ValidationError("train_head: invalid config");
  for (int y : train_y)
    if (y < 0 || y >= head.spec.n_classes())
      throw ValidationError("train_head: label index out of range");
  for (int y : val_y)
    if (y < 0 || y >= head.spec.n_classes())
      throw ValidationError("train_head: label index out of range");

  // Snapshot everything outside the trainable set to assert the freeze
  // contract when training finishes.
  std::vector<std::pair<nn::Param*, std::vector<float>>> frozen;
  for (auto* p : head.prefix.params()) frozen.push_back({p, p->value.vec()});
  for (auto* p : head.stack.params())
    if (!p->trainable) frozen.push_back({p, p->value.vec()});

  std::vector<Tensor> train_f, val_f;
  train_f.reserve(train_x.size());
  val_f.reserve(val_x.size());
  for (const auto& w : train_x) train_f.push_back(prefix_features(head, w));
  for (const auto& w : val_x) val_f.push_back(prefix_features(head, w));

  nn::Adam::Config ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  nn::Adam opt(head.stack.trainable_params(), ocfg);

  EarlyStopping stopper(cfg.patience);
  std::vector<std::vector<float>> best_snap;
  auto snapshot = [&] {
    std::vector<std::vector<float>> snap;
    for (auto* p : head.stack.trainable_params()) snap.push_back(p->value.vec());
    return snap;
  };

  HeadTrainResult res;
  std::vector<int64_t> idx(train_f.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, uint64_t(epoch)));
    shuffle_rng.shuffle(idx);

    double train_total = 0.0;
    for (int64_t lo = 0; lo < int64_t(train_f.size()); lo += cfg.batch_size) {
      int64_t hi = std::min<int64_t>(lo + cfg.batch_size, int64_t(train_f.size()));
      Tensor batch = batch_features(train_f, idx, lo, hi);
      std::vector<int> y;
      y.reserve(size_t(hi - lo));
      for (int64_t b = lo; b < hi; ++b) y.push_back(train_y[size_t(idx[size_t(b)])]);

      Tensor logits = head.stack.forward(batch, true);
      Tensor grad;
      float loss = nn::cross_entropy(logits, y, &grad);
      head.stack.zero_grad();
      head.stack.backward(grad, false);
      opt.step();
      train_total += double(loss) * double(hi - lo);
    }

    EvalResult ev = eval_head(head, val_f, val_y, cfg.batch_size);
    HeadEpochStats st;
    st.epoch = epoch;
    st.train_loss = train_total / double(train_f.size());
    st.val_loss = ev.loss;
    st.val_acc = ev.acc;
    st.best_so_far = stopper.observe(st.val_loss);
    res.history.push_back(st);
    res.stopped_epoch = epoch;

    if (st.best_so_far) best_snap = snapshot();
    if (stopper.should_stop()) break;
  }

  res.best_epoch = stopper.best_epoch();
  {
    size_t i = 0;
    for (auto* p : head.stack.trainable_params()) p->value.vec() = best_snap[i++];
  }

  for (auto& [p, before] : frozen)
    if (p->value.vec() != before)
      throw InternalError("train_head: frozen tensor '" + p->name +
                          "' changed during training");
  return res;
}

std::string head_label(const HeadSpec& spec, const ManifestEntry& entry) {
  if (entry.authenticity != "fake")
    throw ValidationError("entry '" + entry.path +
                          "' is labeled real; heads train on fakes only");
  if (spec.level == "ada") {
    if (!entry.technology)
      throw ValidationError("entry '" + entry.path +
                            "' has no technology label");
    return *entry.technology;
  }
  if (spec.level == "admr") {
    if (!entry.model)
      throw ValidationError("entry '" + entry.path + "' has no model label");
    return *entry.model;
  }
  throw InternalError("unknown head level '" + spec.level + "'");
}

HeadTrainResult train_head(Head& head, const std::vector<ManifestEntry>& entries,
                           const std::string& manifest_path,
                           const HeadTrainConfig& cfg) {
  std::vector<Tensor> train_x, val_x;
  std::vector<int> train_y, val_y;
  std::set<std::string> train_classes;
  for (const auto& e : entries) {
    if (e.split != "train" && e.split != "val") continue;
    std::string label = head_label(head.spec, e);
    int y = head.spec.index_of(label);
    Waveform w = preprocess(resolve_path(manifest_path, e.path));
    Tensor t(std::vector<int64_t>{int64_t(w.samples.size())});
    t.vec() = w.samples;
    t = crop_front(t, cfg.train_crop);
    if (e.split == "train") {
      train_x.push_back(std::move(t));
      train_y.push_back(y);
      train_classes.insert(label);
    } else {
      val_x.push_back(std::move(t));
      val_y.push_back(y);
    }
  }
  if (train_classes.size() != head.spec.vocab.size())
    throw ValidationError("train_head: train split covers " +
                          std::to_string(train_classes.size()) + " of " +
                          std::to_string(head.spec.vocab.size()) + " " +
                          head.spec.level + " classes");
  return train_head(head, train_x, train_y, val_x, val_y, cfg);
}

}  // namespace lava
