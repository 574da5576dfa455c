#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lava/experiment.hpp"

using namespace lava;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Smallest configuration the validator allows, sized so a full run stays in
// seconds: six samples per technology per split, one epoch everywhere,
// aggressive crops.
ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.out_dir = out_dir;
  cfg.seed = 21;
  cfg.corpus = {6, 6, 6, 2, 2};
  cfg.ae = {8, 4, 1, 4, 1e-4f, 5, 2048};
  cfg.heads = {1, 4, 1e-3f, 2, 1024, 6, 6};
  cfg.calibration_crop = 1024;
  cfg.ablation.enabled = false;
  return cfg;
}

nlohmann::json tiny_json(const std::string& out_dir) {
  return experiment_config_to_json(tiny_config(out_dir));
}

}  // namespace

TEST_CASE("experiment config: defaults and round trip") {
  ExperimentConfig cfg = experiment_config_from_json({{"out_dir", "somewhere"}});
  CHECK(cfg.out_dir == "somewhere");
  CHECK(cfg.seed == 7);
  CHECK(cfg.attention);
  CHECK(cfg.target_acc == doctest::Approx(0.85f));
  CHECK(cfg.corpus.tech_train == 300);
  CHECK(cfg.ae.crop == 12000);
  CHECK(cfg.heads.ada_train_cap == 96);
  CHECK_FALSE(cfg.ablation.enabled);
  CHECK(cfg.ablation.seeds == std::vector<uint64_t>{1, 2, 3});

  ExperimentConfig custom = tiny_config("elsewhere");
  custom.attention = false;
  custom.target_acc = 0.9f;
  custom.expectation = "reject-or-Codec";
  custom.ablation.enabled = true;
  custom.ablation.seeds = {11, 12};
  nlohmann::json j = experiment_config_to_json(custom);
  ExperimentConfig back = experiment_config_from_json(j);
  CHECK(experiment_config_to_json(back).dump() == j.dump());
}

TEST_CASE("experiment config: rejects malformed input") {
  auto with = [](nlohmann::json patch) {
    nlohmann::json j = {{"out_dir", "x"}};
    j.update(patch, true);
    return j;
  };

  CHECK_THROWS_AS(experiment_config_from_json(nlohmann::json::object()),
                  ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(nlohmann::json::array()),
                  ValidationError);
  CHECK_THROWS_WITH_AS(experiment_config_from_json(with({{"typo", 1}})),
                       doctest::Contains("typo"), ValidationError);
  CHECK_THROWS_WITH_AS(
      experiment_config_from_json(with({{"corpus", {{"tech_trian", 6}}}})),
      doctest::Contains("tech_trian"), ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(with({{"seed", "abc"}})),
                  ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(with({{"seed", -4}})),
                  ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(with({{"attention", 3}})),
                  ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(with({{"target_acc", 0.0}})),
                  ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(with({{"target_acc", 1.5}})),
                  ValidationError);
  CHECK_THROWS_AS(
      experiment_config_from_json(with({{"corpus", {{"tech_train", 2}}}})),
      ValidationError);
  CHECK_THROWS_AS(
      experiment_config_from_json(with({{"corpus", {{"tech_train", 6.5}}}})),
      ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(with({{"ae", {{"crop", 32}}}})),
                  ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(with({{"heads", {{"crop", 8}}}})),
                  ValidationError);
  CHECK_THROWS_AS(
      experiment_config_from_json(with({{"ae", {{"lr", "fast"}}}})),
      ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(
                      with({{"ablation", {{"seeds", nlohmann::json::array()}}}})),
                  ValidationError);
  CHECK_THROWS_AS(
      experiment_config_from_json(with({{"ablation", {{"seeds", {1, -2}}}}})),
      ValidationError);
  CHECK_THROWS_AS(
      experiment_config_from_json(with({{"expectation", 7}})),
      ValidationError);
}

TEST_CASE("experiment config: file loading") {
  fs::path dir = fresh_dir("lava_expcfg_tests");
  fs::path good = dir / "good.json";
  {
    std::ofstream out(good);
    out << tiny_json("out").dump();
  }
  ExperimentConfig cfg = load_experiment_config(good.string());
  CHECK(cfg.seed == 21);
  CHECK(cfg.corpus.tech_test == 6);

  fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << "{not json";
  }
  CHECK_THROWS_AS(load_experiment_config(bad.string()), ValidationError);
  CHECK_THROWS_AS(load_experiment_config((dir / "absent.json").string()), IoError);
}

TEST_CASE("experiment: tiny end-to-end run produces the full report bundle") {
  fs::path dir = fresh_dir("lava_exp_smoke");
  ExperimentConfig cfg = tiny_config((dir / "run").string());
  cfg.ablation.enabled = true;
  cfg.ablation.seeds = {5};
  cfg.ablation.max_epochs = 1;

  ExperimentSummary s = run_experiment(cfg);

  CHECK(s.out_dir == cfg.out_dir);
  CHECK(s.ada_macro_f1 >= 0.0);
  CHECK(s.ada_macro_f1 <= 1.0);
  CHECK(s.admr_macro_f1 >= 0.0);
  CHECK(s.admr_macro_f1 <= 1.0);
  CHECK(s.ada_threshold.level == "ada");
  CHECK(s.admr_threshold.level == "admr");
  CHECK(s.ada_threshold.n_records == 18);
  CHECK(s.admr_threshold.n_records == 6);
  CHECK(s.unseen_rejection_rate >= 0.0);
  CHECK(s.unseen_rejection_rate <= 1.0);
  CHECK(s.total_seconds > 0.0);
  for (const char* stage : {"corpus", "train-ae", "train-ada", "train-admr",
                            "calibrate", "evaluate", "ablation", "manifest"})
    CHECK_MESSAGE(s.stage_seconds.count(stage), "missing stage ", stage);

  REQUIRE(s.ablation.size() == 2);
  CHECK(s.ablation[0].seed == 5);
  CHECK(s.ablation[0].attention != s.ablation[1].attention);

  std::vector<std::string> expected = {
      "calibration.json", "metrics_ada.json", "metrics_admr.json",
      "error_prop.json",  "generalization.json", "ablation.json",
      "run_manifest.json"};
  CHECK(s.report_files == expected);
  for (const auto& name : expected)
    CHECK_MESSAGE(fs::exists(fs::path(cfg.out_dir) / name), "missing ", name);
  for (const char* name : {"ae.ckpt", "ada.ckpt", "admr.ckpt"})
    CHECK_MESSAGE(fs::exists(fs::path(cfg.out_dir) / name), "missing ", name);

  auto report = [&](const std::string& name) {
    return nlohmann::json::parse(slurp(fs::path(cfg.out_dir) / name));
  };
  nlohmann::json cal = report("calibration.json");
  CHECK(cal.contains("ada"));
  CHECK(cal.at("admr").at("n_records") == 6);

  nlohmann::json ma = report("metrics_ada.json");
  CHECK(ma.contains("off"));
  CHECK(ma.contains("as_error"));
  CHECK(ma.at("off").at("total") == 18);
  nlohmann::json mm = report("metrics_admr.json");
  CHECK(mm.at("off").at("total") == 6);

  nlohmann::json ep = report("error_prop.json");
  CHECK(ep.at("total") == 20);
  CHECK(ep.at("definition").get<std::string>().size() > 40);

  nlohmann::json gen = report("generalization.json");
  CHECK(gen.at("total") == 2);
  CHECK(gen.at("expectation") == "reject");

  nlohmann::json ab = report("ablation.json");
  REQUIRE(ab.at("runs").size() == 2);
  for (const auto& r : ab.at("runs")) {
    CHECK(r.at("seed") == 5);
    double f1 = r.at("admr_macro_f1").get<double>();
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 1.0);
  }

  nlohmann::json rm = report("run_manifest.json");
  for (const char* key :
       {"config", "seeds", "versions", "decisions", "artifacts", "reports",
        "training", "timing"})
    CHECK_MESSAGE(rm.contains(key), "run manifest missing ", key);
  CHECK(rm.at("config").at("seed") == 21);
  CHECK(rm.at("seeds").at("corpus") == 21);
  CHECK(rm.at("training").at("autoencoder").at("epochs").size() == 1);
  CHECK(rm.at("versions").at("checkpoint_format") == kCheckpointVersion);

  std::vector<ManifestEntry> entries = read_manifest(
      (fs::path(cfg.out_dir) / "corpus" / "manifest.jsonl").string());
  CHECK(entries.size() == 3 * 18 + 2);
}

TEST_CASE("experiment: rerunning a config reproduces every byte") {
  fs::path dir = fresh_dir("lava_exp_determinism");
  ExperimentConfig cfg = tiny_config((dir / "run").string());
  cfg.seed = 33;
  cfg.ae.crop = 1024;
  cfg.heads.crop = 512;
  cfg.calibration_crop = 512;

  ExperimentSummary first = run_experiment(cfg);
  std::vector<std::string> tracked = first.report_files;
  tracked.insert(tracked.end(), {"ae.ckpt", "ada.ckpt", "admr.ckpt"});
  std::map<std::string, std::string> before;
  for (const auto& name : tracked)
    before[name] = slurp(fs::path(cfg.out_dir) / name);

  ExperimentSummary second = run_experiment(cfg);
  CHECK(second.report_files == first.report_files);
  CHECK(second.ada_macro_f1 == first.ada_macro_f1);
  CHECK(second.admr_macro_f1 == first.admr_macro_f1);
  CHECK(second.ada_threshold.tau == first.ada_threshold.tau);
  CHECK(second.admr_threshold.tau == first.admr_threshold.tau);

  for (const auto& name : tracked) {
    std::string after = slurp(fs::path(cfg.out_dir) / name);
    if (name == "run_manifest.json") {
      nlohmann::json a = nlohmann::json::parse(before[name]);
      nlohmann::json b = nlohmann::json::parse(after);
      CHECK(a.contains("timing"));
      a.erase("timing");
      b.erase("timing");
      CHECK_MESSAGE(a.dump() == b.dump(), "run manifest drifted outside timing");
    } else {
      CHECK_MESSAGE(before[name] == after, name, " changed between identical runs");
    }
  }
}

TEST_CASE("experiment: stage failures carry the stage name") {
  fs::path dir = fresh_dir("lava_exp_failures");
  ExperimentConfig cfg = tiny_config((dir / "run").string());
  cfg.heads.ada_train_cap = 6;
  cfg.ae.train_cap = 8;
  cfg.out_dir = "";
  CHECK_THROWS_AS(run_experiment(cfg), ValidationError);
}
