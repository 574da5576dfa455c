#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "lava/autoencoder.hpp"
#include "lava/checkpoint.hpp"
#include "lava/corpus.hpp"
#include "lava/experiment.hpp"
#include "lava/gradcheck.hpp"
#include "lava/heads.hpp"
#include "lava/metrics.hpp"
#include "lava/pipeline.hpp"
#include "lava/rejection.hpp"
#include "lava/threading.hpp"

using namespace lava;

namespace {

void emit(const nlohmann::json& j, const std::string& out_path, int indent = 2) {
  std::cout << j.dump(indent) << "\n";
  if (out_path.empty()) return;
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + out_path + " for writing");
  out << j.dump(indent) << "\n";
  if (!out) throw IoError("write failed for " + out_path);
}

Tensor load_wave_tensor(const std::string& manifest_path, const ManifestEntry& e,
                        int64_t crop) {
  Waveform w = preprocess(resolve_path(manifest_path, e.path));
  Tensor t(std::vector<int64_t>{int64_t(w.samples.size())});
  t.vec() = w.samples;
  return crop_front(t, crop);
}

struct LoadedHead {
  Head head;
  Checkpoint ckpt;
  float tau = kRejectAll;
};

// Threshold resolution order: explicit override, then the tau recorded by
// `calibrate`; a head that has neither cannot make accept/reject decisions.
LoadedHead load_head(const std::string& path, std::optional<float> tau_override) {
  LoadedHead lh{Head{}, load_checkpoint(path), kRejectAll};
  lh.head = head_from_checkpoint(lh.ckpt);
  if (tau_override) {
    lh.tau = *tau_override;
  } else if (lh.ckpt.meta.contains("tau")) {
    lh.tau = std::stof(lh.ckpt.meta.at("tau").get<std::string>());
  } else {
    throw ValidationError("checkpoint " + path +
                          " has no calibrated threshold; run 'lava calibrate' "
                          "on it or pass an explicit --tau option");
  }
  return lh;
}

HeadSpec spec_for(const std::string& level, bool attention) {
  if (level == "ada") return HeadSpec::ada(attention);
  if (level == "admr") return HeadSpec::admr(attention);
  throw ValidationError("--level must be 'ada' or 'admr', got '" + level + "'");
}

// Calibration pool for one head: fake entries of the split the head can be
// scored on (model recognition needs a model label).
std::vector<const ManifestEntry*> calibration_pool(
    const std::vector<ManifestEntry>& entries, const HeadSpec& spec,
    const std::string& split) {
  std::vector<const ManifestEntry*> pool;
  for (const auto& e : entries) {
    if (e.split != split || e.authenticity != "fake" || !e.technology) continue;
    if (spec.level == "admr" && !e.model) continue;
    pool.push_back(&e);
  }
  if (pool.empty())
    throw ValidationError("no usable fake entries in split '" + split + "'");
  return pool;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical attribution of audio deepfakes: technology\n"
               "classification with model recognition for codec-based fakes,\n"
               "confidence-thresholded so unfamiliar sources are rejected."};
  app.set_version_flag("--version", "0.1.0");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads for tensor kernels")
      ->check(CLI::Range(1, 256));

  std::map<std::string, std::function<void()>> actions;

  // ---- synth-corpus -------------------------------------------------------
  std::string sc_out;
  uint64_t sc_seed = 7;
  CorpusScale sc_scale;
  {
    auto* sc = app.add_subcommand(
        "synth-corpus", "Write a synthetic labeled corpus with manifests");
    sc->add_option("--out", sc_out, "Output directory")->required();
    sc->add_option("--seed", sc_seed, "Corpus seed");
    sc->add_option("--tech-train", sc_scale.tech_train,
                   "Train samples per technology");
    sc->add_option("--tech-val", sc_scale.tech_val, "Val samples per technology");
    sc->add_option("--tech-test", sc_scale.tech_test, "Test samples per technology");
    sc->add_option("--real-test", sc_scale.real_test, "Real test samples");
    sc->add_option("--unseen-test", sc_scale.unseen_test,
                   "Unseen-source test samples");
    actions["synth-corpus"] = [&] {
      std::vector<ManifestEntry> manifest =
          synth_corpus(corpus_spec(sc_scale, sc_out, sc_seed));
      std::vector<ManifestEntry> unseen = read_manifest(
          (std::filesystem::path(sc_out) / "generalization.jsonl").string());
      emit({{"out_dir", sc_out},
            {"manifest", (std::filesystem::path(sc_out) / "manifest.jsonl").string()},
            {"generalization_manifest",
             (std::filesystem::path(sc_out) / "generalization.jsonl").string()},
            {"entries", manifest.size()},
            {"unseen_entries", unseen.size()}},
           "");
    };
  }

  // ---- preprocess ---------------------------------------------------------
  std::string pp_audio, pp_out;
  {
    auto* sc = app.add_subcommand(
        "preprocess", "Resample to 16 kHz mono, peak-normalize, fit to 3 s");
    sc->add_option("--audio", pp_audio, "Input WAV file")->required();
    sc->add_option("--out", pp_out, "Output WAV file")->required();
    actions["preprocess"] = [&] {
      Waveform w = preprocess(pp_audio);
      write_wav_pcm16(pp_out, w);
      emit({{"path", pp_out},
            {"rate", w.rate},
            {"samples", w.length()},
            {"silence", w.silence}},
           "");
    };
  }

  // ---- train-ae -----------------------------------------------------------
  std::string ae_manifest, ae_out;
  AeTrainConfig ae_cfg;
  int64_t ae_crop = 0;
  {
    auto* sc = app.add_subcommand(
        "train-ae", "Train the convolutional autoencoder on fake audio");
    sc->add_option("--manifest", ae_manifest, "Corpus manifest (jsonl)")->required();
    sc->add_option("--out", ae_out, "Checkpoint to write")->required();
    sc->add_option("--epochs", ae_cfg.max_epochs, "Epoch cap")->check(CLI::PositiveNumber);
    sc->add_option("--batch", ae_cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
    sc->add_option("--lr", ae_cfg.lr, "Learning rate")->check(CLI::PositiveNumber);
    sc->add_option("--patience", ae_cfg.patience, "Early-stopping patience")
        ->check(CLI::PositiveNumber);
    sc->add_option("--seed", ae_cfg.seed, "Training seed");
    sc->add_option("--crop", ae_crop,
                   "Train on the first N samples of each waveform (0 = full)")
        ->check(CLI::NonNegativeNumber);
    actions["train-ae"] = [&] {
      std::vector<ManifestEntry> entries = read_manifest(ae_manifest);
      std::vector<Tensor> train, val;
      for (const auto& e : entries) {
        if (e.authenticity != "fake") continue;
        if (e.split == "train")
          train.push_back(load_wave_tensor(ae_manifest, e, ae_crop));
        else if (e.split == "val")
          val.push_back(load_wave_tensor(ae_manifest, e, ae_crop));
      }
      if (train.empty()) throw ValidationError("manifest has no fake train entries");
      if (val.empty()) throw ValidationError("manifest has no fake val entries");
      AeTrainResult res = train_autoencoder(train, val, ae_cfg);
      save_checkpoint(autoencoder_checkpoint(res, ae_cfg.seed, ae_crop), ae_out);
      emit({{"checkpoint", ae_out},
            {"train_samples", train.size()},
            {"val_samples", val.size()},
            {"epochs", res.history.size()},
            {"best_epoch", res.best_epoch},
            {"stopped_epoch", res.stopped_epoch},
            {"best_val_loss", res.history.empty()
                                  ? 0.0
                                  : res.history[size_t(res.best_epoch - 1)].val_loss}},
           "");
    };
  }

  // ---- train-head ---------------------------------------------------------
  std::string th_level, th_manifest, th_encoder, th_out;
  bool th_no_attention = false;
  HeadTrainConfig th_cfg;
  {
    auto* sc = app.add_subcommand(
        "train-head", "Train an attribution head on the frozen encoder");
    sc->add_option("--level", th_level, "'ada' (technology) or 'admr' (model)")
        ->required();
    sc->add_option("--manifest", th_manifest, "Corpus manifest (jsonl)")->required();
    sc->add_option("--encoder", th_encoder, "Trained autoencoder checkpoint")
        ->required();
    sc->add_option("--out", th_out, "Checkpoint to write")->required();
    sc->add_flag("--no-attention", th_no_attention, "Drop the attention gate");
    sc->add_option("--epochs", th_cfg.max_epochs, "Epoch cap")->check(CLI::PositiveNumber);
    sc->add_option("--batch", th_cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
    sc->add_option("--lr", th_cfg.lr, "Learning rate")->check(CLI::PositiveNumber);
    sc->add_option("--patience", th_cfg.patience, "Early-stopping patience")
        ->check(CLI::PositiveNumber);
    sc->add_option("--seed", th_cfg.seed, "Training seed");
    sc->add_option("--crop", th_cfg.train_crop,
                   "Train on the first N samples of each waveform (0 = full)")
        ->check(CLI::NonNegativeNumber);
    actions["train-head"] = [&] {
      HeadSpec spec = spec_for(th_level, !th_no_attention);
      Head head = head_from_encoder(spec, load_checkpoint(th_encoder), th_cfg.seed);
      std::vector<ManifestEntry> entries;
      for (const auto& e : read_manifest(th_manifest)) {
        if (e.authenticity != "fake" || !e.technology) continue;
        if (spec.level == "admr" && !e.model) continue;
        entries.push_back(e);
      }
      HeadTrainResult res = train_head(head, entries, th_manifest, th_cfg);
      Checkpoint ck = head_to_checkpoint(head, th_cfg.seed);
      ck.meta["best_epoch"] = res.best_epoch;
      ck.meta["stopped_epoch"] = res.stopped_epoch;
      ck.meta["train_crop"] = th_cfg.train_crop;
      save_checkpoint(ck, th_out);
      emit({{"checkpoint", th_out},
            {"level", spec.level},
            {"attention", spec.attention},
            {"epochs", res.history.size()},
            {"best_epoch", res.best_epoch},
            {"stopped_epoch", res.stopped_epoch},
            {"best_val_acc", res.history.empty()
                                 ? 0.0
                                 : res.history[size_t(res.best_epoch - 1)].val_acc}},
           "");
    };
  }

  // ---- calibrate ----------------------------------------------------------
  std::string cal_manifest, cal_ckpt, cal_out, cal_split = "train";
  float cal_target = 0.85f;
  int64_t cal_crop = 0;
  {
    auto* sc = app.add_subcommand(
        "calibrate", "Pick the rejection threshold for a trained head");
    sc->add_option("--manifest", cal_manifest, "Corpus manifest (jsonl)")->required();
    sc->add_option("--ckpt", cal_ckpt, "Trained head checkpoint")->required();
    sc->add_option("--out", cal_out,
                   "Checkpoint to write (may equal --ckpt)")->required();
    sc->add_option("--target-acc", cal_target,
                   "Required accuracy among accepted samples")
        ->check(CLI::Range(1e-6, 1.0));
    sc->add_option("--split", cal_split, "Split to calibrate on");
    sc->add_option("--crop", cal_crop,
                   "Score the first N samples of each waveform (0 = full)")
        ->check(CLI::NonNegativeNumber);
    actions["calibrate"] = [&] {
      Checkpoint ck = load_checkpoint(cal_ckpt);
      Head head = head_from_checkpoint(ck);
      std::vector<ManifestEntry> entries = read_manifest(cal_manifest);
      std::vector<Tensor> waves;
      std::vector<int> labels;
      for (const ManifestEntry* e :
           calibration_pool(entries, head.spec, cal_split)) {
        waves.push_back(load_wave_tensor(cal_manifest, *e, cal_crop));
        labels.push_back(head.spec.index_of(head_label(head.spec, *e)));
      }
      RejectionThreshold th = calibrate_threshold(
          collect_confidences(head, waves, labels), cal_target, head.spec.level);
      uint64_t seed = ck.meta.contains("seed") ? ck.meta.at("seed").get<uint64_t>() : 0;
      Checkpoint out_ck = head_to_checkpoint(head, seed);
      for (const char* carry : {"best_epoch", "stopped_epoch", "train_crop"})
        if (ck.meta.contains(carry)) out_ck.meta[carry] = ck.meta.at(carry);
      out_ck.meta["tau"] = format_exact(th.tau);
      out_ck.meta["target_acc"] = format_exact(th.target_acc);
      out_ck.meta["calibration"] = {{"failed", th.failed},
                                    {"n_records", th.n_records},
                                    {"accepted_fraction", th.accepted_fraction},
                                    {"accepted_accuracy", th.accepted_accuracy},
                                    {"split", cal_split},
                                    {"crop", cal_crop}};
      save_checkpoint(out_ck, cal_out);
      nlohmann::json j = threshold_to_json(th);
      j["checkpoint"] = cal_out;
      emit(j, "");
    };
  }

  // ---- infer --------------------------------------------------------------
  std::string in_audio, in_ada, in_admr;
  double in_tau_ada = -1.0, in_tau_admr = -1.0;
  {
    auto* sc = app.add_subcommand(
        "infer", "Attribute one audio file through both levels");
    sc->add_option("--audio", in_audio, "WAV file to attribute")->required();
    sc->add_option("--ada", in_ada, "Calibrated technology head checkpoint")
        ->required();
    sc->add_option("--admr", in_admr,
                   "Calibrated model-recognition head checkpoint");
    sc->add_option("--tau-ada", in_tau_ada, "Override the stored ADA threshold")
        ->check(CLI::Range(0.0, 2.0));
    sc->add_option("--tau-admr", in_tau_admr, "Override the stored ADMR threshold")
        ->check(CLI::Range(0.0, 2.0));
    actions["infer"] = [&] {
      auto opt = [](double v) {
        return v < 0 ? std::optional<float>{} : std::optional<float>{float(v)};
      };
      LoadedHead ada = load_head(in_ada, opt(in_tau_ada));
      std::optional<LoadedHead> admr;
      if (!in_admr.empty()) admr = load_head(in_admr, opt(in_tau_admr));
      PipelineModel model;
      model.ada = &ada.head;
      model.tau_ada = ada.tau;
      if (admr) {
        model.admr = &admr->head;
        model.tau_admr = admr->tau;
      }
      PipelineResult r = infer(preprocess(in_audio), model);
      std::cout << pipeline_result_to_json(r).dump() << "\n";
    };
  }

  // ---- eval ---------------------------------------------------------------
  std::string ev_mode, ev_manifest, ev_ada, ev_admr, ev_out;
  std::string ev_split = "test", ev_expectation;
  double ev_tau_ada = -1.0, ev_tau_admr = -1.0;
  {
    auto* sc = app.add_subcommand(
        "eval", "Score a manifest split through the trained hierarchy");
    sc->add_option("--mode", ev_mode,
                   "'metrics', 'error-prop', or 'generalization'")
        ->required()
        ->check(CLI::IsMember({"metrics", "error-prop", "generalization"}));
    sc->add_option("--manifest", ev_manifest, "Manifest to score (jsonl)")
        ->required();
    sc->add_option("--ada", ev_ada, "Calibrated technology head checkpoint")
        ->required();
    sc->add_option("--admr", ev_admr,
                   "Calibrated model-recognition head checkpoint")
        ->required();
    sc->add_option("--split", ev_split, "Split to score");
    sc->add_option("--expectation", ev_expectation,
                   "Generalization expectation: 'reject' or 'reject-or-<label>'");
    sc->add_option("--tau-ada", ev_tau_ada, "Override the stored ADA threshold")
        ->check(CLI::Range(0.0, 2.0));
    sc->add_option("--tau-admr", ev_tau_admr, "Override the stored ADMR threshold")
        ->check(CLI::Range(0.0, 2.0));
    sc->add_option("--out", ev_out, "Also write the report to this file");
    actions["eval"] = [&] {
      auto opt = [](double v) {
        return v < 0 ? std::optional<float>{} : std::optional<float>{float(v)};
      };
      LoadedHead ada = load_head(ev_ada, opt(ev_tau_ada));
      LoadedHead admr = load_head(ev_admr, opt(ev_tau_admr));
      PipelineModel model;
      model.ada = &ada.head;
      model.admr = &admr.head;
      model.tau_ada = ada.tau;
      model.tau_admr = admr.tau;
      SampleScorer scorer = model_scorer(model, ev_manifest);
      RoutingConfig routing;
      routing.tau_ada = ada.tau;
      routing.tau_admr = admr.tau;

      std::vector<ManifestEntry> selected;
      for (const auto& e : read_manifest(ev_manifest))
        if (e.split == ev_split) selected.push_back(e);
      if (selected.empty())
        throw ValidationError("manifest has no entries in split '" + ev_split + "'");

      nlohmann::json out;
      if (ev_mode == "metrics") {
        EvalPairs pairs = collect_eval_pairs(selected, scorer, routing);
        auto both = [&](const std::vector<LabeledPrediction>& ps,
                        const std::vector<std::string>& vocab) {
          return nlohmann::json{
              {"off", metrics_to_json(compute_metrics(ps, vocab, RejectionMode::Off))},
              {"as_error",
               metrics_to_json(compute_metrics(ps, vocab, RejectionMode::AsError))}};
        };
        out = {{"ada", both(pairs.ada, routing.ada_vocab)},
               {"admr", pairs.admr.empty()
                            ? nlohmann::json(nullptr)
                            : both(pairs.admr, routing.admr_vocab)}};
      } else if (ev_mode == "error-prop") {
        out = error_prop_to_json(error_propagation_eval(selected, scorer, routing));
      } else {
        out = generalization_to_json(
            generalization_eval(selected, scorer, routing, ev_expectation));
      }
      emit(out, ev_out);
    };
  }

  // ---- run-experiment -------------------------------------------------------
  std::string re_config;
  {
    auto* sc = app.add_subcommand(
        "run-experiment",
        "Corpus, training, calibration, evaluation, and reports in one run");
    sc->add_option("--config", re_config, "Experiment config (json)")->required();
    actions["run-experiment"] = [&] {
      ExperimentSummary s = run_experiment(load_experiment_config(re_config));
      emit(experiment_summary_to_json(s), "");
    };
  }

  // ---- gradcheck ------------------------------------------------------------
  uint64_t gc_seed = 17;
  double gc_tol = 1e-4;
  int64_t gc_samples = 24;
  {
    auto* sc = app.add_subcommand(
        "gradcheck",
        "Check every layer's gradients against finite differences");
    sc->add_option("--seed", gc_seed, "Battery seed");
    sc->add_option("--tol", gc_tol, "Max relative error")->check(CLI::PositiveNumber);
    sc->add_option("--samples", gc_samples, "Entries sampled per tensor")
        ->check(CLI::PositiveNumber);
    actions["gradcheck"] = [&] {
      std::vector<nn::BatteryCase> cases =
          nn::run_gradcheck_battery(gc_seed, gc_tol, gc_samples);
      std::vector<std::string> failed;
      for (const auto& c : cases) {
        std::printf("%-18s max_rel_err=%-12.3g %s\n", c.name.c_str(),
                    c.max_rel_err, c.pass ? "ok" : "FAIL");
        if (!c.pass) failed.push_back(c.name);
      }
      if (!failed.empty()) {
        std::string names;
        for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
        throw InternalError("gradient check failed for: " + names);
      }
      std::printf("gradcheck: %zu cases passed\n", cases.size());
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  if (threads > 0) set_num_threads(threads);

  try {
    for (auto& [name, fn] : actions)
      if (app.got_subcommand(name)) {
        fn();
        return 0;
      }
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
