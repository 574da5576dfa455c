#include "lava/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>

#include "lava/checkpoint.hpp"
#include "lava/metrics.hpp"
#include "lava/nn.hpp"

namespace lava {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// config parsing

void check_keys(const nlohmann::json& j, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw ValidationError("config: " + where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ValidationError("config: unknown key '" + key + "' in " + where);
}

int64_t get_int(const nlohmann::json& j, const std::string& where,
                const std::string& key, int64_t dflt, int64_t lo, int64_t hi) {
  if (!j.contains(key)) return dflt;
  const auto& v = j.at(key);
  if (!v.is_number_integer())
    throw ValidationError("config: " + where + "." + key + " must be an integer");
  int64_t x = v.get<int64_t>();
  if (x < lo || x > hi)
    throw ValidationError("config: " + where + "." + key + " must be in [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return x;
}

uint64_t get_seed(const nlohmann::json& j, const std::string& where,
                  const std::string& key, uint64_t dflt) {
  if (!j.contains(key)) return dflt;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<int64_t>() < 0))
    throw ValidationError("config: " + where + "." + key +
                          " must be a non-negative integer");
  return v.get<uint64_t>();
}

float get_float(const nlohmann::json& j, const std::string& where,
                const std::string& key, float dflt, double lo, double hi) {
  if (!j.contains(key)) return dflt;
  const auto& v = j.at(key);
  if (!v.is_number())
    throw ValidationError("config: " + where + "." + key + " must be a number");
  double x = v.get<double>();
  if (x < lo || x > hi)
    throw ValidationError("config: " + where + "." + key + " out of range");
  return float(x);
}

bool get_bool(const nlohmann::json& j, const std::string& where,
              const std::string& key, bool dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_boolean())
    throw ValidationError("config: " + where + "." + key + " must be a boolean");
  return j.at(key).get<bool>();
}

std::string get_str(const nlohmann::json& j, const std::string& where,
                    const std::string& key, const std::string& dflt) {
  if (!j.contains(key)) return dflt;
  if (!j.at(key).is_string())
    throw ValidationError("config: " + where + "." + key + " must be a string");
  return j.at(key).get<std::string>();
}

// ---------------------------------------------------------------------------
// stage running

class StageClock {
 public:
  explicit StageClock(std::map<std::string, double>& out) : out_(out) {}

  template <class F>
  auto run(const char* name, F&& f) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        record(name, t0);
      } else {
        auto r = f();
        record(name, t0);
        return r;
      }
    } catch (const ValidationError& e) {
      throw ValidationError(tagged(name, e.what()));
    } catch (const IoError& e) {
      throw IoError(tagged(name, e.what()));
    } catch (const InternalError& e) {
      throw InternalError(tagged(name, e.what()));
    }
  }

 private:
  static std::string tagged(const char* name, const char* what) {
    return "[" + std::string(name) + "] " + what;
  }
  void record(const char* name,
              std::chrono::steady_clock::time_point t0) {
    out_[name] += std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  }
  std::map<std::string, double>& out_;
};

// ---------------------------------------------------------------------------
// data selection

// Fine synthesis class of a fake entry: the model for Codec samples, the
// technology otherwise.
std::string fine_class(const ManifestEntry& e) {
  return e.model ? *e.model : *e.technology;
}

// Round-robin merge across groups, preserving in-group order, up to `cap`
// entries in total (0 = no cap). Keeps capped subsets stratified.
std::vector<const ManifestEntry*> round_robin(
    const std::vector<std::vector<const ManifestEntry*>>& groups, int64_t cap) {
  std::vector<const ManifestEntry*> picked;
  for (size_t offset = 0;; ++offset) {
    bool any = false;
    for (const auto& g : groups) {
      if (offset >= g.size()) continue;
      any = true;
      if (cap > 0 && int64_t(picked.size()) >= cap) return picked;
      picked.push_back(g[offset]);
    }
    if (!any) return picked;
  }
}

// Fake entries of one split bucketed by fine class, in manifest order.
std::map<std::string, std::vector<const ManifestEntry*>> fake_groups(
    const std::vector<ManifestEntry>& manifest, const std::string& split) {
  std::map<std::string, std::vector<const ManifestEntry*>> groups;
  for (const auto& e : manifest)
    if (e.split == split && e.authenticity == "fake" && e.technology)
      groups[fine_class(e)].push_back(&e);
  return groups;
}

struct LevelData {
  std::vector<Tensor> train_x, val_x;
  std::vector<int> train_y, val_y;
};

class WaveLoader {
 public:
  explicit WaveLoader(std::string manifest_path)
      : manifest_path_(std::move(manifest_path)) {}

  // Full-length preprocessed waveform, cached across stages.
  const Tensor& cached(const ManifestEntry& e) {
    auto it = cache_.find(e.path);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(e.path, load(e)).first->second;
  }

  // One-shot load that bypasses the cache (for streamed passes).
  Tensor load(const ManifestEntry& e) const {
    Waveform w = preprocess(resolve_path(manifest_path_, e.path));
    Tensor t(std::vector<int64_t>{int64_t(w.samples.size())});
    t.vec() = w.samples;
    return t;
  }

 private:
  std::string manifest_path_;
  std::map<std::string, Tensor> cache_;
};

// Capped, stratified train/val tensors for one head level.
LevelData select_level(const std::vector<ManifestEntry>& manifest,
                       WaveLoader& loader, const HeadSpec& spec, int64_t crop,
                       int64_t train_cap, int64_t val_cap) {
  LevelData data;
  for (const auto& [split, cap] :
       {std::pair<const char*, int64_t>{"train", train_cap}, {"val", val_cap}}) {
    auto groups = fake_groups(manifest, split);
    for (const auto& coarse : spec.vocab) {
      std::vector<std::vector<const ManifestEntry*>> fine;
      for (const auto& [name, g] : groups) {
        const ManifestEntry* probe = g.front();
        if (spec.level == "admr" && !probe->model) continue;
        if (head_label(spec, *probe) == coarse) fine.push_back(g);
      }
      int y = spec.index_of(coarse);
      for (const ManifestEntry* e : round_robin(fine, cap)) {
        Tensor t = crop_front(loader.cached(*e), crop);
        if (split == std::string("train")) {
          data.train_x.push_back(std::move(t));
          data.train_y.push_back(y);
        } else {
          data.val_x.push_back(std::move(t));
          data.val_y.push_back(y);
        }
      }
    }
  }
  if (data.train_x.empty())
    throw ValidationError("no train samples selected for level " + spec.level);
  if (data.val_x.empty())
    throw ValidationError("no val samples selected for level " + spec.level);
  return data;
}

// ---------------------------------------------------------------------------
// report plumbing

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open report " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for report " + path.string());
}

std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Shortest decimal that parses back to exactly this float, emitted as a
// JSON number so the config snapshot round-trips through the parser.
double json_float(float x) { return std::stod(format_exact(x)); }

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  check_keys(j, "root",
             {"out_dir", "seed", "attention", "target_acc", "calibration_crop",
              "expectation", "corpus", "ae", "heads", "ablation"});
  ExperimentConfig cfg;
  cfg.out_dir = get_str(j, "root", "out_dir", "");
  if (cfg.out_dir.empty())
    throw ValidationError("config: out_dir is required and must be non-empty");
  cfg.seed = get_seed(j, "root", "seed", cfg.seed);
  cfg.attention = get_bool(j, "root", "attention", cfg.attention);
  cfg.target_acc = get_float(j, "root", "target_acc", cfg.target_acc, 1e-6, 1.0);
  cfg.calibration_crop = get_int(j, "root", "calibration_crop",
                                 cfg.calibration_crop, 0, kTargetLength);
  cfg.expectation = get_str(j, "root", "expectation", cfg.expectation);

  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    check_keys(c, "corpus",
               {"tech_train", "tech_val", "tech_test", "real_test", "unseen_test"});
    cfg.corpus.tech_train = int(get_int(c, "corpus", "tech_train",
                                        cfg.corpus.tech_train, 6, 1000000));
    cfg.corpus.tech_val = int(get_int(c, "corpus", "tech_val",
                                      cfg.corpus.tech_val, 6, 1000000));
    cfg.corpus.tech_test = int(get_int(c, "corpus", "tech_test",
                                       cfg.corpus.tech_test, 6, 1000000));
    cfg.corpus.real_test = int(get_int(c, "corpus", "real_test",
                                       cfg.corpus.real_test, 0, 1000000));
    cfg.corpus.unseen_test = int(get_int(c, "corpus", "unseen_test",
                                         cfg.corpus.unseen_test, 0, 1000000));
  }
  if (j.contains("ae")) {
    const auto& a = j.at("ae");
    check_keys(a, "ae", {"train_cap", "val_cap", "max_epochs", "batch_size",
                         "lr", "patience", "crop"});
    cfg.ae.train_cap = int(get_int(a, "ae", "train_cap", cfg.ae.train_cap, 1, 1000000));
    cfg.ae.val_cap = int(get_int(a, "ae", "val_cap", cfg.ae.val_cap, 1, 1000000));
    cfg.ae.max_epochs = int(get_int(a, "ae", "max_epochs", cfg.ae.max_epochs, 1, 10000));
    cfg.ae.batch_size = int(get_int(a, "ae", "batch_size", cfg.ae.batch_size, 1, 4096));
    cfg.ae.lr = get_float(a, "ae", "lr", cfg.ae.lr, 1e-9, 10.0);
    cfg.ae.patience = int(get_int(a, "ae", "patience", cfg.ae.patience, 1, 10000));
    cfg.ae.crop = get_int(a, "ae", "crop", cfg.ae.crop, 0, kTargetLength);
  }
  if (j.contains("heads")) {
    const auto& h = j.at("heads");
    check_keys(h, "heads", {"max_epochs", "batch_size", "lr", "patience",
                            "crop", "ada_train_cap", "ada_val_cap"});
    cfg.heads.max_epochs = int(get_int(h, "heads", "max_epochs", cfg.heads.max_epochs, 1, 10000));
    cfg.heads.batch_size = int(get_int(h, "heads", "batch_size", cfg.heads.batch_size, 1, 4096));
    cfg.heads.lr = get_float(h, "heads", "lr", cfg.heads.lr, 1e-9, 10.0);
    cfg.heads.patience = int(get_int(h, "heads", "patience", cfg.heads.patience, 1, 10000));
    cfg.heads.crop = get_int(h, "heads", "crop", cfg.heads.crop, 0, kTargetLength);
    cfg.heads.ada_train_cap = int(get_int(h, "heads", "ada_train_cap",
                                          cfg.heads.ada_train_cap, 0, 1000000));
    cfg.heads.ada_val_cap = int(get_int(h, "heads", "ada_val_cap",
                                        cfg.heads.ada_val_cap, 0, 1000000));
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    check_keys(a, "ablation", {"enabled", "seeds", "max_epochs", "train_cap", "val_cap"});
    cfg.ablation.enabled = get_bool(a, "ablation", "enabled", cfg.ablation.enabled);
    if (a.contains("seeds")) {
      if (!a.at("seeds").is_array() || a.at("seeds").empty())
        throw ValidationError("config: ablation.seeds must be a non-empty array");
      cfg.ablation.seeds.clear();
      for (const auto& s : a.at("seeds")) {
        if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<int64_t>() < 0))
          throw ValidationError("config: ablation.seeds entries must be non-negative integers");
        cfg.ablation.seeds.push_back(s.get<uint64_t>());
      }
    }
    cfg.ablation.max_epochs = int(get_int(a, "ablation", "max_epochs",
                                          cfg.ablation.max_epochs, 1, 10000));
    cfg.ablation.train_cap = int(get_int(a, "ablation", "train_cap",
                                         cfg.ablation.train_cap, 0, 1000000));
    cfg.ablation.val_cap = int(get_int(a, "ablation", "val_cap",
                                       cfg.ablation.val_cap, 0, 1000000));
  }
  if (cfg.heads.crop != 0 && cfg.heads.crop < 64)
    throw ValidationError("config: heads.crop must be 0 or >= 64 samples");
  if (cfg.ae.crop != 0 && cfg.ae.crop < 64)
    throw ValidationError("config: ae.crop must be 0 or >= 64 samples");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {
      {"out_dir", cfg.out_dir},
      {"seed", cfg.seed},
      {"attention", cfg.attention},
      {"target_acc", json_float(cfg.target_acc)},
      {"calibration_crop", cfg.calibration_crop},
      {"expectation", cfg.expectation},
      {"corpus",
       {{"tech_train", cfg.corpus.tech_train},
        {"tech_val", cfg.corpus.tech_val},
        {"tech_test", cfg.corpus.tech_test},
        {"real_test", cfg.corpus.real_test},
        {"unseen_test", cfg.corpus.unseen_test}}},
      {"ae",
       {{"train_cap", cfg.ae.train_cap},
        {"val_cap", cfg.ae.val_cap},
        {"max_epochs", cfg.ae.max_epochs},
        {"batch_size", cfg.ae.batch_size},
        {"lr", json_float(cfg.ae.lr)},
        {"patience", cfg.ae.patience},
        {"crop", cfg.ae.crop}}},
      {"heads",
       {{"max_epochs", cfg.heads.max_epochs},
        {"batch_size", cfg.heads.batch_size},
        {"lr", json_float(cfg.heads.lr)},
        {"patience", cfg.heads.patience},
        {"crop", cfg.heads.crop},
        {"ada_train_cap", cfg.heads.ada_train_cap},
        {"ada_val_cap", cfg.heads.ada_val_cap}}},
      {"ablation",
       {{"enabled", cfg.ablation.enabled},
        {"seeds", cfg.ablation.seeds},
        {"max_epochs", cfg.ablation.max_epochs},
        {"train_cap", cfg.ablation.train_cap},
        {"val_cap", cfg.ablation.val_cap}}}};
}

SynthSpec corpus_spec(const CorpusScale& scale, const std::string& out_dir,
                      uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.out_dir = out_dir;
  spec.counts["ASV"] = {scale.tech_train, scale.tech_val, scale.tech_test};
  spec.counts["FoR"] = {scale.tech_train, scale.tech_val, scale.tech_test};
  for (size_t m = 0; m < kModels.size(); ++m) {
    const int n = int(kModels.size());
    auto share = [&](int total) { return total / n + (int(m) < total % n ? 1 : 0); };
    spec.counts[kModels[m]] = {share(scale.tech_train), share(scale.tech_val),
                               share(scale.tech_test)};
  }
  spec.counts["real"] = {0, 0, scale.real_test};
  spec.counts["unseen"] = {0, 0, scale.unseen_test};
  return spec;
}

Checkpoint autoencoder_checkpoint(AeTrainResult& res, uint64_t seed,
                                  int64_t train_crop) {
  Checkpoint ck;
  ck.arch = kArchAutoencoder;
  ck.meta["seed"] = seed;
  ck.meta["beta"] = format_exact(kDefaultLossBeta);
  ck.meta["best_epoch"] = res.best_epoch;
  ck.meta["stopped_epoch"] = res.stopped_epoch;
  ck.meta["train_crop"] = train_crop;
  pack_params(res.model.encoder, ck);
  pack_params(res.model.decoder, ck);
  return ck;
}

nlohmann::json experiment_summary_to_json(const ExperimentSummary& s) {
  nlohmann::json ablation = nlohmann::json::array();
  for (const auto& r : s.ablation)
    ablation.push_back({{"seed", r.seed},
                        {"attention", r.attention},
                        {"admr_macro_f1", r.admr_macro_f1}});
  return {{"out_dir", s.out_dir},
          {"ada_macro_f1", s.ada_macro_f1},
          {"admr_macro_f1", s.admr_macro_f1},
          {"ada_threshold", threshold_to_json(s.ada_threshold)},
          {"admr_threshold", threshold_to_json(s.admr_threshold)},
          {"unseen_rejection_rate", s.unseen_rejection_rate},
          {"ablation", ablation},
          {"report_files", s.report_files},
          {"stage_seconds", s.stage_seconds},
          {"total_seconds", s.total_seconds}};
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw ValidationError("run_experiment: out_dir is empty");
  auto wall0 = std::chrono::steady_clock::now();
  const std::string started_at = utc_timestamp();

  ExperimentSummary summary;
  summary.out_dir = cfg.out_dir;
  StageClock clock(summary.stage_seconds);

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + cfg.out_dir + ": " + ec.message());

  const uint64_t seed_ae = derive_seed(cfg.seed, 1);
  const uint64_t seed_ada = derive_seed(cfg.seed, 2);
  const uint64_t seed_admr = derive_seed(cfg.seed, 3);

  // -- corpus ---------------------------------------------------------------
  const std::string corpus_dir = (fs::path(cfg.out_dir) / "corpus").string();
  const std::string manifest_path = (fs::path(corpus_dir) / "manifest.jsonl").string();
  std::vector<ManifestEntry> manifest = clock.run("corpus", [&] {
    return synth_corpus(corpus_spec(cfg.corpus, corpus_dir, cfg.seed));
  });

  WaveLoader loader(manifest_path);

  // -- autoencoder ----------------------------------------------------------
  Checkpoint ae_ck;
  AeTrainResult ae_res = clock.run("train-ae", [&] {
    std::vector<Tensor> train, val;
    for (const auto& [split, cap, dst] :
         {std::tuple<const char*, int, std::vector<Tensor>*>{"train", cfg.ae.train_cap, &train},
          {"val", cfg.ae.val_cap, &val}}) {
      auto groups = fake_groups(manifest, split);
      std::vector<std::vector<const ManifestEntry*>> all;
      for (const auto& [name, g] : groups) all.push_back(g);
      for (const ManifestEntry* e : round_robin(all, cap))
        dst->push_back(crop_front(loader.cached(*e), cfg.ae.crop));
    }
    AeTrainConfig acfg;
    acfg.max_epochs = cfg.ae.max_epochs;
    acfg.batch_size = cfg.ae.batch_size;
    acfg.lr = cfg.ae.lr;
    acfg.patience = cfg.ae.patience;
    acfg.seed = seed_ae;
    return train_autoencoder(train, val, acfg);
  });
  clock.run("train-ae", [&] {
    ae_ck = autoencoder_checkpoint(ae_res, seed_ae, cfg.ae.crop);
    save_checkpoint(ae_ck, (fs::path(cfg.out_dir) / "ae.ckpt").string());
  });

  // -- heads ----------------------------------------------------------------
  Head ada = head_from_encoder(HeadSpec::ada(cfg.attention), ae_ck, seed_ada);
  Head admr = head_from_encoder(HeadSpec::admr(cfg.attention), ae_ck, seed_admr);

  HeadTrainConfig hcfg;
  hcfg.max_epochs = cfg.heads.max_epochs;
  hcfg.batch_size = cfg.heads.batch_size;
  hcfg.lr = cfg.heads.lr;
  hcfg.patience = cfg.heads.patience;

  HeadTrainResult ada_res = clock.run("train-ada", [&] {
    LevelData d = select_level(manifest, loader, ada.spec, cfg.heads.crop,
                               cfg.heads.ada_train_cap, cfg.heads.ada_val_cap);
    HeadTrainConfig c = hcfg;
    c.seed = seed_ada;
    return train_head(ada, d.train_x, d.train_y, d.val_x, d.val_y, c);
  });
  HeadTrainResult admr_res = clock.run("train-admr", [&] {
    LevelData d = select_level(manifest, loader, admr.spec, cfg.heads.crop, 0, 0);
    HeadTrainConfig c = hcfg;
    c.seed = seed_admr;
    return train_head(admr, d.train_x, d.train_y, d.val_x, d.val_y, c);
  });

  // -- calibration ----------------------------------------------------------
  // Train-split confidences at the calibration crop; thresholds then apply
  // to full-length inference.
  clock.run("calibrate", [&] {
    for (auto& [head, seed, name] :
         {std::tuple<Head*, uint64_t, const char*>{&ada, seed_ada, "ada.ckpt"},
          {&admr, seed_admr, "admr.ckpt"}}) {
      std::vector<Tensor> waves;
      std::vector<int> labels;
      for (const auto& e : manifest) {
        if (e.split != "train" || e.authenticity != "fake") continue;
        if (head->spec.level == "admr" && !e.model) continue;
        waves.push_back(crop_front(loader.cached(e), cfg.calibration_crop));
        labels.push_back(head->spec.index_of(head_label(head->spec, e)));
      }
      RejectionThreshold th = calibrate_threshold(
          collect_confidences(*head, waves, labels), cfg.target_acc,
          head->spec.level);

      Checkpoint ck = head_to_checkpoint(*head, seed);
      ck.meta["tau"] = format_exact(th.tau);
      ck.meta["target_acc"] = format_exact(th.target_acc);
      ck.meta["calibration"] = {{"failed", th.failed},
                                {"n_records", th.n_records},
                                {"accepted_fraction", th.accepted_fraction},
                                {"accepted_accuracy", th.accepted_accuracy},
                                {"crop", cfg.calibration_crop}};
      save_checkpoint(ck, (fs::path(cfg.out_dir) / name).string());
      (head->spec.level == "ada" ? summary.ada_threshold : summary.admr_threshold) = th;
    }
    write_json_file(fs::path(cfg.out_dir) / "calibration.json",
                    {{"ada", threshold_to_json(summary.ada_threshold)},
                     {"admr", threshold_to_json(summary.admr_threshold)}});
    summary.report_files.push_back("calibration.json");
  });

  // -- evaluation -----------------------------------------------------------
  RoutingConfig routing;
  routing.tau_ada = summary.ada_threshold.tau;
  routing.tau_admr = summary.admr_threshold.tau;

  PipelineModel model;
  model.ada = &ada;
  model.admr = &admr;
  model.tau_ada = routing.tau_ada;
  model.tau_admr = routing.tau_admr;

  // Full-length scoring is the expensive part, so each entry is scored once
  // and the harnesses replay the recorded probability vectors.
  struct Scored {
    std::vector<float> ada;
    std::optional<std::vector<float>> admr;
  };
  auto score_entries = [&](const std::vector<ManifestEntry>& entries) {
    SampleScorer base = model_scorer(model, manifest_path);
    auto memo = std::make_shared<std::map<std::string, Scored>>();
    for (const auto& e : entries) {
      auto [ada_probs, admr_fn] = base(e);
      Scored s;
      Prediction p = decide(ada_probs, routing.ada_vocab, routing.tau_ada);
      if ((p.accepted && p.label == kCodecLabel) || e.model) s.admr = admr_fn();
      s.ada = std::move(ada_probs);
      memo->emplace(e.path, std::move(s));
    }
    return SampleScorer([memo](const ManifestEntry& e) {
      const Scored& s = memo->at(e.path);
      ProbFn fn;
      if (s.admr) {
        std::vector<float> probs = *s.admr;
        fn = [probs]() { return probs; };
      }
      return std::make_pair(s.ada, fn);
    });
  };

  clock.run("evaluate", [&] {
    std::vector<ManifestEntry> test_entries;
    for (const auto& e : manifest)
      if (e.split == "test") test_entries.push_back(e);
    SampleScorer replay = score_entries(test_entries);

    EvalPairs pairs = collect_eval_pairs(test_entries, replay, routing);
    Metrics ada_off = compute_metrics(pairs.ada, routing.ada_vocab, RejectionMode::Off);
    Metrics ada_err = compute_metrics(pairs.ada, routing.ada_vocab, RejectionMode::AsError);
    Metrics admr_off = compute_metrics(pairs.admr, routing.admr_vocab, RejectionMode::Off);
    Metrics admr_err = compute_metrics(pairs.admr, routing.admr_vocab, RejectionMode::AsError);
    summary.ada_macro_f1 = ada_off.macro_f1;
    summary.admr_macro_f1 = admr_off.macro_f1;
    write_json_file(fs::path(cfg.out_dir) / "metrics_ada.json",
                    {{"off", metrics_to_json(ada_off)},
                     {"as_error", metrics_to_json(ada_err)}});
    write_json_file(fs::path(cfg.out_dir) / "metrics_admr.json",
                    {{"off", metrics_to_json(admr_off)},
                     {"as_error", metrics_to_json(admr_err)}});
    summary.report_files.push_back("metrics_ada.json");
    summary.report_files.push_back("metrics_admr.json");

    ErrorPropReport ep = error_propagation_eval(test_entries, replay, routing);
    write_json_file(fs::path(cfg.out_dir) / "error_prop.json", error_prop_to_json(ep));
    summary.report_files.push_back("error_prop.json");

    std::vector<ManifestEntry> unseen = read_manifest(
        (fs::path(corpus_dir) / "generalization.jsonl").string());
    nlohmann::json gen;
    if (unseen.empty()) {
      gen = {{"skipped", "no unseen entries in the corpus"}};
    } else {
      SampleScorer gen_replay = score_entries(unseen);
      GeneralizationReport gr =
          generalization_eval(unseen, gen_replay, routing, cfg.expectation);
      summary.unseen_rejection_rate = gr.ada_rejection_rate;
      gen = generalization_to_json(gr);
    }
    write_json_file(fs::path(cfg.out_dir) / "generalization.json", gen);
    summary.report_files.push_back("generalization.json");
  });

  // -- ablation -------------------------------------------------------------
  if (cfg.ablation.enabled) {
    clock.run("ablation", [&] {
      LevelData d = select_level(manifest, loader, HeadSpec::admr(true),
                                 cfg.heads.crop, cfg.ablation.train_cap,
                                 cfg.ablation.val_cap);
      std::vector<Tensor> test_x;
      std::vector<std::string> test_truth;
      for (const auto& e : manifest) {
        if (e.split != "test" || !e.model) continue;
        test_x.push_back(crop_front(loader.cached(e), cfg.heads.crop));
        test_truth.push_back(*e.model);
      }
      if (test_x.empty())
        throw ValidationError("ablation: no Codec test entries to score");

      nlohmann::json runs = nlohmann::json::array();
      for (uint64_t s : cfg.ablation.seeds) {
        for (bool attention : {true, false}) {
          Head h = head_from_encoder(HeadSpec::admr(attention), ae_ck,
                                     derive_seed(s, 3));
          HeadTrainConfig c = hcfg;
          c.max_epochs = cfg.ablation.max_epochs;
          c.seed = derive_seed(s, 3);
          train_head(h, d.train_x, d.train_y, d.val_x, d.val_y, c);

          std::vector<LabeledPrediction> ps;
          for (size_t i = 0; i < test_x.size(); ++i) {
            std::vector<float> probs = nn::softmax(
                head_logits_from_features(h, prefix_features(h, test_x[i])));
            ps.push_back({test_truth[i], decide(probs, kModels, 0.0f)});
          }
          Metrics m = compute_metrics(ps, kModels, RejectionMode::Off);
          summary.ablation.push_back({s, attention, m.macro_f1});
          runs.push_back({{"seed", s},
                          {"attention", attention},
                          {"admr_macro_f1", m.macro_f1},
                          {"admr_accuracy", m.accuracy}});
        }
      }
      write_json_file(fs::path(cfg.out_dir) / "ablation.json",
                      {{"eval_crop", cfg.heads.crop},
                       {"train_crop", cfg.heads.crop},
                       {"runs", runs}});
      summary.report_files.push_back("ablation.json");
    });
  }

  // -- run manifest ---------------------------------------------------------
  summary.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  clock.run("manifest", [&] {
    nlohmann::json histories;
    {
      nlohmann::json h = nlohmann::json::array();
      for (const auto& s : ae_res.history)
        h.push_back({{"epoch", s.epoch},
                     {"train_loss", s.train_loss},
                     {"val_loss", s.val_loss},
                     {"best", s.best_so_far}});
      histories["autoencoder"] = {{"epochs", h},
                                  {"best_epoch", ae_res.best_epoch},
                                  {"stopped_epoch", ae_res.stopped_epoch}};
    }
    for (const auto& [name, res] :
         {std::pair<const char*, const HeadTrainResult*>{"ada", &ada_res},
          {"admr", &admr_res}}) {
      nlohmann::json h = nlohmann::json::array();
      for (const auto& s : res->history)
        h.push_back({{"epoch", s.epoch},
                     {"train_loss", s.train_loss},
                     {"val_loss", s.val_loss},
                     {"val_acc", s.val_acc},
                     {"best", s.best_so_far}});
      histories[name] = {{"epochs", h},
                         {"best_epoch", res->best_epoch},
                         {"stopped_epoch", res->stopped_epoch}};
    }

    nlohmann::json rm;
    rm["config"] = experiment_config_to_json(cfg);
    rm["seeds"] = {{"corpus", cfg.seed},
                   {"autoencoder", seed_ae},
                   {"ada", seed_ada},
                   {"admr", seed_admr},
                   {"ablation", cfg.ablation.seeds}};
    rm["versions"] = {{"bundle_format", 1},
                      {"checkpoint_format", kCheckpointVersion},
                      {"corpus_recipe", 1}};
    rm["decisions"] = {
        {"trim", "keep the first 3 seconds, zero-pad shorter input"},
        {"loss_reduction", "mean over all reconstruction elements"},
        {"calibration_rule",
         "smallest distinct confidence whose accepted subset reaches the "
         "target accuracy; ties grouped before testing"},
        {"calibration_split", "train"},
        {"calibration_crop", cfg.calibration_crop},
        {"selection",
         "per-class caps take entries round-robin over synthesis classes in "
         "manifest order"},
        {"error_accounting", "spelled out in error_prop.json under 'definition'"}};
    rm["artifacts"] = {"ae.ckpt", "ada.ckpt", "admr.ckpt"};
    rm["reports"] = summary.report_files;
    rm["training"] = histories;
    // Everything nondeterministic lives under this one key.
    rm["timing"] = {{"started", started_at},
                    {"finished", utc_timestamp()},
                    {"stage_seconds", summary.stage_seconds},
                    {"total_seconds", summary.total_seconds}};
    write_json_file(fs::path(cfg.out_dir) / "run_manifest.json", rm);
    summary.report_files.push_back("run_manifest.json");
  });

  summary.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return summary;
}

}  // namespace lava
