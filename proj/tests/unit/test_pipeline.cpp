#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "lava/autoencoder.hpp"
#include "lava/checkpoint.hpp"
#include "lava/metrics.hpp"
#include "lava/pipeline.hpp"

using namespace lava;

namespace {

Prediction pred(const std::string& label, bool accepted, int index = 0,
                float confidence = 0.9f) {
  Prediction p;
  p.label = accepted ? label : std::string(kUnknownLabel);
  p.class_index = index;
  p.confidence = confidence;
  p.accepted = accepted;
  return p;
}

// Accepted prediction whose argmax label sits at its vocab position.
LabeledPrediction lp(const std::string& truth, const std::string& label,
                     const std::vector<std::string>& vocab,
                     bool accepted = true) {
  int idx = -1;
  for (size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == label) idx = int(i);
  REQUIRE(idx >= 0);
  Prediction p;
  p.label = accepted ? label : std::string(kUnknownLabel);
  p.class_index = idx;
  p.confidence = 0.9f;
  p.accepted = accepted;
  return {truth, p};
}

// Probability vector peaked at index i; the rest of the mass is spread
// evenly so the vector always sums to one.
std::vector<float> peak(size_t n, size_t i, float conf) {
  std::vector<float> v(n, n > 1 ? (1.0f - conf) / float(n - 1) : 0.0f);
  v[i] = conf;
  return v;
}

ManifestEntry fake_entry(const std::string& tech,
                         const std::optional<std::string>& model = std::nullopt) {
  ManifestEntry e;
  e.path = "wav/" + tech + (model ? "_" + *model : "") + ".wav";
  e.technology = tech;
  e.model = model;
  e.authenticity = "fake";
  e.split = "test";
  return e;
}

ManifestEntry real_entry() {
  ManifestEntry e;
  e.path = "wav/real.wav";
  e.authenticity = "real";
  e.split = "test";
  return e;
}

// Scorer over per-entry probability rules; a null admr rule leaves the
// level-2 producer empty.
SampleScorer stub_scorer(
    std::function<std::vector<float>(const ManifestEntry&)> ada,
    std::function<std::vector<float>(const ManifestEntry&)> admr) {
  return [ada, admr](const ManifestEntry& e) {
    ProbFn fn;
    if (admr) fn = [admr, e]() { return admr(e); };
    return std::make_pair(ada(e), fn);
  };
}

size_t index_in(const std::vector<std::string>& vocab, const std::string& s) {
  for (size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == s) return i;
  REQUIRE(false);
  return 0;
}

}  // namespace

TEST_CASE("metrics: two-class worked example") {
  std::vector<std::string> vocab = {"A", "B"};
  std::vector<LabeledPrediction> pairs = {
      lp("A", "A", vocab), lp("A", "B", vocab), lp("B", "B", vocab),
      lp("B", "B", vocab)};
  Metrics m = compute_metrics(pairs, vocab, RejectionMode::Off);

  CHECK(m.total == 4);
  CHECK(m.accuracy == doctest::Approx(0.75).epsilon(1e-12));

  const ClassMetrics& a = m.per_class[0];
  CHECK(a.support == 2);
  CHECK(a.tp == 1);
  CHECK(a.fp == 0);
  CHECK(a.fn == 1);
  CHECK(a.precision == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.recall == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const ClassMetrics& b = m.per_class[1];
  CHECK(b.support == 2);
  CHECK(b.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(b.recall == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.f1 == doctest::Approx(0.8).epsilon(1e-12));

  CHECK(m.macro_f1 == doctest::Approx(11.0 / 15.0).epsilon(1e-12));
  CHECK(m.macro_precision == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(m.macro_recall == doctest::Approx(0.75).epsilon(1e-12));

  // Equal supports make the weighted averages coincide with the macro ones.
  CHECK(m.weighted_f1 == doctest::Approx(m.macro_f1).epsilon(1e-12));
  CHECK(m.weighted_precision == doctest::Approx(m.macro_precision).epsilon(1e-12));
  CHECK(m.weighted_recall == doctest::Approx(m.macro_recall).epsilon(1e-12));

  CHECK(m.rejection_rate == 0.0);
  CHECK(m.confusion == std::vector<std::vector<int64_t>>{{1, 1}, {0, 2}});
}

TEST_CASE("metrics: perfect predictions score one everywhere") {
  std::vector<std::string> vocab = {"ASV", "FoR", "Codec"};
  std::vector<LabeledPrediction> pairs;
  for (const auto& c : vocab)
    for (int i = 0; i < 3; ++i) pairs.push_back(lp(c, c, vocab));
  Metrics m = compute_metrics(pairs, vocab, RejectionMode::AsError);
  CHECK(m.accuracy == doctest::Approx(1.0));
  CHECK(m.macro_f1 == doctest::Approx(1.0));
  CHECK(m.weighted_f1 == doctest::Approx(1.0));
  for (const auto& c : m.per_class) {
    CHECK(c.precision == doctest::Approx(1.0));
    CHECK(c.recall == doctest::Approx(1.0));
    CHECK(c.precision_defined);
    CHECK(c.recall_defined);
  }
  CHECK(m.rejection_rate == 0.0);
}

TEST_CASE("metrics: accuracy equals confusion trace over total") {
  std::vector<std::string> vocab = {"A", "B", "C"};
  Rng rng(99);
  std::vector<LabeledPrediction> pairs;
  for (int i = 0; i < 200; ++i) {
    const std::string& truth = vocab[size_t(rng.uniform_int(3))];
    const std::string& guess = vocab[size_t(rng.uniform_int(3))];
    pairs.push_back(lp(truth, guess, vocab));
  }
  Metrics m = compute_metrics(pairs, vocab, RejectionMode::Off);
  int64_t trace = 0;
  for (size_t i = 0; i < vocab.size(); ++i) trace += m.confusion[i][i];
  CHECK(m.accuracy == doctest::Approx(double(trace) / double(m.total)).epsilon(1e-12));
}

TEST_CASE("metrics: rejection modes read the same pairs differently") {
  std::vector<std::string> vocab = {"A", "B"};
  // Truth A with a rejected argmax-A prediction, plus accepted singletons.
  std::vector<LabeledPrediction> pairs = {
      lp("A", "A", vocab, false), lp("A", "A", vocab), lp("B", "B", vocab)};

  Metrics off = compute_metrics(pairs, vocab, RejectionMode::Off);
  CHECK(off.accuracy == doctest::Approx(1.0));
  CHECK(off.per_class[0].recall == doctest::Approx(1.0));
  CHECK(off.pred_vocab == vocab);
  CHECK(off.rejection_rate == doctest::Approx(1.0 / 3.0));

  Metrics err = compute_metrics(pairs, vocab, RejectionMode::AsError);
  CHECK(err.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(err.per_class[0].recall == doctest::Approx(0.5));
  // The rejected sample is nobody's false positive.
  CHECK(err.per_class[0].fp == 0);
  CHECK(err.per_class[1].fp == 0);
  CHECK(err.per_class[0].precision == doctest::Approx(1.0));
  CHECK(err.pred_vocab.size() == vocab.size() + 1);
  CHECK(err.pred_vocab.back() == kUnknownLabel);
  CHECK(err.confusion[0][2] == 1);
  CHECK(err.rejection_rate == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("metrics: zero-denominator cases drop the defined flags") {
  std::vector<std::string> vocab = {"A", "B", "C"};
  // C never appears as truth or prediction; B never predicted.
  std::vector<LabeledPrediction> pairs = {
      lp("A", "A", vocab), lp("B", "A", vocab)};
  Metrics m = compute_metrics(pairs, vocab, RejectionMode::Off);

  const ClassMetrics& b = m.per_class[1];
  CHECK_FALSE(b.precision_defined);
  CHECK(b.precision == 0.0);
  CHECK(b.recall_defined);

  const ClassMetrics& c = m.per_class[2];
  CHECK_FALSE(c.precision_defined);
  CHECK_FALSE(c.recall_defined);
  CHECK(c.f1 == 0.0);
}

TEST_CASE("metrics: input validation") {
  std::vector<std::string> vocab = {"A", "B"};
  CHECK_THROWS_AS((void)compute_metrics({}, vocab, RejectionMode::Off),
                  ValidationError);
  CHECK_THROWS_AS((void)compute_metrics({lp("A", "A", vocab)}, {},
                                        RejectionMode::Off),
                  ValidationError);
  CHECK_THROWS_AS((void)compute_metrics({lp("A", "A", vocab),
                                         {"Z", pred("A", true, 0)}},
                                        vocab, RejectionMode::Off),
                  ValidationError);
  Prediction out_of_range = pred("A", true, 7);
  CHECK_THROWS_AS((void)compute_metrics({{"A", out_of_range}}, vocab,
                                        RejectionMode::Off),
                  ValidationError);
  CHECK(rejection_mode_from_string("off") == RejectionMode::Off);
  CHECK(rejection_mode_from_string("as-error") == RejectionMode::AsError);
  CHECK_THROWS_AS((void)rejection_mode_from_string("sometimes"),
                  ValidationError);
}

TEST_CASE("metrics: json carries every block") {
  std::vector<std::string> vocab = {"A", "B"};
  std::vector<LabeledPrediction> pairs = {
      lp("A", "A", vocab), lp("A", "B", vocab), lp("B", "B", vocab, false)};
  nlohmann::json j = metrics_to_json(
      compute_metrics(pairs, vocab, RejectionMode::AsError));
  CHECK(j["labels"] == nlohmann::json(vocab));
  CHECK(j["predicted_labels"].size() == 3);
  CHECK(j["confusion"].size() == 2);
  CHECK(j["per_class"].size() == 2);
  CHECK(j["total"] == 3);
  CHECK(j.contains("accuracy"));
  CHECK(j.contains("macro_avg"));
  CHECK(j.contains("weighted_avg"));
  CHECK(j["rejection_rate"].get<double>() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("route: level-2 invocation exactly for accepted Codec") {
  const auto& techs = kTechnologies;
  const auto& models = kModels;
  for (size_t ti = 0; ti < techs.size(); ++ti) {
    for (bool confident : {false, true}) {
      float conf = confident ? 0.9f : 0.4f;
      bool admr_called = false;
      ProbFn admr = [&]() {
        admr_called = true;
        return peak(models.size(), 2, 0.95f);
      };
      PipelineResult r =
          route(peak(techs.size(), ti, conf), admr, techs, models, 0.5f, 0.5f);

      bool expect_forward = confident && techs[ti] == kCodecLabel;
      CHECK(r.admr.has_value() == expect_forward);
      CHECK(admr_called == expect_forward);
      if (!confident) {
        CHECK_FALSE(r.ada.accepted);
        CHECK(r.ada.label == kUnknownLabel);
        CHECK(r.ada.class_index == int(ti));
        CHECK(r.final == FinalAttribution{kUnknownLabel, std::nullopt});
      } else if (!expect_forward) {
        CHECK(r.final == FinalAttribution{techs[ti], std::nullopt});
      } else {
        CHECK(r.final == FinalAttribution{kCodecLabel, std::string("F03")});
      }
    }
  }
}

TEST_CASE("route: rejected level 2 keeps the technology, model unknown") {
  ProbFn admr = [&]() { return peak(kModels.size(), 4, 0.3f); };
  size_t codec = index_in(kTechnologies, kCodecLabel);
  PipelineResult r = route(peak(3, codec, 0.9f), admr, kTechnologies, kModels,
                           0.5f, 0.5f);
  REQUIRE(r.admr.has_value());
  CHECK_FALSE(r.admr->accepted);
  CHECK(r.admr->class_index == 4);
  CHECK(r.final == FinalAttribution{kCodecLabel, std::string(kUnknownLabel)});
}

TEST_CASE("route: boundary confidence is accepted") {
  PipelineResult r = route(peak(3, 0, 0.5f), {}, kTechnologies, kModels,
                           0.5f, 0.5f);
  CHECK(r.ada.accepted);
  CHECK(r.final.technology == "ASV");
}

TEST_CASE("route: missing level-2 producer errors only when reached") {
  size_t codec = index_in(kTechnologies, kCodecLabel);
  // Non-Codec and rejected-Codec samples never consult the null producer.
  CHECK_NOTHROW((void)route(peak(3, 0, 0.9f), {}, kTechnologies, kModels,
                            0.5f, 0.5f));
  CHECK_NOTHROW((void)route(peak(3, codec, 0.4f), {}, kTechnologies, kModels,
                            0.5f, 0.5f));
  CHECK_THROWS_AS((void)route(peak(3, codec, 0.9f), {}, kTechnologies,
                              kModels, 0.5f, 0.5f),
                  ValidationError);
}

TEST_CASE("pipeline json: result shape for both routing outcomes") {
  size_t codec = index_in(kTechnologies, kCodecLabel);
  ProbFn admr = [&]() { return peak(kModels.size(), 0, 0.99f); };
  nlohmann::json fwd = pipeline_result_to_json(
      route(peak(3, codec, 0.9f), admr, kTechnologies, kModels, 0.5f, 0.5f));
  CHECK(fwd["ada"]["accepted"] == true);
  CHECK(fwd["admr"]["label"] == "F01");
  CHECK(fwd["final"]["technology"] == "Codec");
  CHECK(fwd["final"]["model"] == "F01");

  nlohmann::json rej = pipeline_result_to_json(
      route(peak(3, 1, 0.2f), admr, kTechnologies, kModels, 0.5f, 0.5f));
  CHECK(rej["ada"]["accepted"] == false);
  CHECK(rej["admr"].is_null());
  CHECK(rej["final"]["technology"] == "unknown");
  CHECK(rej["final"]["model"].is_null());
}

TEST_CASE("infer: trained-head smoke run routes like the stub rule") {
  Autoencoder ae = Autoencoder::create(31);
  Checkpoint ck;
  ck.arch = kArchAutoencoder;
  ck.meta = nlohmann::json::object();
  ck.meta["seed"] = 31;
  pack_params(ae.encoder, ck);
  pack_params(ae.decoder, ck);

  Head ada = head_from_encoder(HeadSpec::ada(true), ck, 7);
  Head admr = head_from_encoder(HeadSpec::admr(true), ck, 8);
  PipelineModel model;
  model.ada = &ada;
  model.admr = &admr;

  Waveform w;
  w.rate = kTargetRate;
  w.samples.resize(size_t(kTargetLength));
  Rng rng(5);
  for (auto& s : w.samples) s = float(rng.uniform(-0.5, 0.5));

  // Reject-all thresholds force the unknown attribution.
  PipelineResult rejected = infer(w, model);
  CHECK_FALSE(rejected.ada.accepted);
  CHECK(rejected.final == FinalAttribution{kUnknownLabel, std::nullopt});

  // Accept-everything thresholds surface the raw argmax path.
  model.tau_ada = 0.0f;
  model.tau_admr = 0.0f;
  PipelineResult accepted = infer(w, model);
  CHECK(accepted.ada.accepted);
  CHECK(accepted.admr.has_value() == (accepted.ada.label == kCodecLabel));
  if (accepted.admr) {
    CHECK(accepted.final.technology == kCodecLabel);
    CHECK(accepted.final.model == accepted.admr->label);
  } else {
    CHECK(accepted.final == FinalAttribution{accepted.ada.label, std::nullopt});
  }

  Waveform bad = w;
  bad.samples.pop_back();
  CHECK_THROWS_AS((void)infer(bad, model), ValidationError);
  PipelineModel empty;
  CHECK_THROWS_AS((void)infer(w, empty), ValidationError);
}

TEST_CASE("error propagation: perfect scorer produces zero error rates") {
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 4; ++i) entries.push_back(real_entry());
  for (int i = 0; i < 3; ++i) entries.push_back(fake_entry("ASV"));
  for (int i = 0; i < 3; ++i) entries.push_back(fake_entry("FoR"));
  entries.push_back(fake_entry("Codec", "F02"));
  entries.push_back(fake_entry("Codec", "F05"));

  // Oracle stub: reals get low confidence everywhere, fakes a confident
  // correct label at both levels.
  auto ada_rule = [](const ManifestEntry& e) {
    if (e.authenticity == "real") return peak(3, 0, 0.34f);
    return peak(3, index_in(kTechnologies, *e.technology), 0.95f);
  };
  auto admr_rule = [](const ManifestEntry& e) {
    return peak(6, index_in(kModels, *e.model), 0.95f);
  };
  RoutingConfig routing;
  routing.tau_ada = 0.5f;
  routing.tau_admr = 0.5f;
  ErrorPropReport r = error_propagation_eval(
      entries, stub_scorer(ada_rule, admr_rule), routing);

  CHECK(r.total == 12);
  CHECK(r.real_count == 4);
  CHECK(r.fake_count == 8);
  CHECK(r.ada_errors == 0);
  CHECK(r.ada_correct == 12);
  CHECK(r.ada_error_rate == 0.0);
  CHECK(r.forwarded == 2);
  CHECK(r.admr_errors == 0);
  CHECK(r.admr_rate_defined);
  CHECK(r.admr_error_rate == 0.0);
  CHECK(r.per_group.at("real").ada_rejected == 4);
  CHECK(r.per_group.at("ASV").ada_correct == 3);
  CHECK(r.per_group.at("Codec").forwarded == 2);
  CHECK(r.per_model.at("F02").correct_model == 1);
  CHECK(r.per_model.at("F05").correct_model == 1);
}

TEST_CASE("error propagation: always-Codec scorer charges every level") {
  std::vector<ManifestEntry> entries(10, fake_entry("FoR"));
  size_t codec = index_in(kTechnologies, kCodecLabel);
  auto ada_rule = [codec](const ManifestEntry&) { return peak(3, codec, 0.9f); };
  auto admr_rule = [](const ManifestEntry&) { return peak(6, 0, 0.9f); };
  RoutingConfig routing;
  routing.tau_ada = 0.5f;
  routing.tau_admr = 0.5f;
  ErrorPropReport r = error_propagation_eval(
      entries, stub_scorer(ada_rule, admr_rule), routing);

  CHECK(r.total == 10);
  CHECK(r.ada_errors == 10);
  CHECK(r.ada_error_rate == doctest::Approx(1.0));
  CHECK(r.forwarded == 10);
  // Accepting a wrongly forwarded sample is a level-2 error too.
  CHECK(r.admr_errors == 10);
  CHECK(r.admr_error_rate == doctest::Approx(1.0));
  CHECK(r.per_group.at("FoR").forwarded == 10);
  CHECK(r.per_model.empty());
}

TEST_CASE("error propagation: mixed outcomes match hand counts") {
  // 2 reals: one rejected (fine), one accepted as ASV (error).
  // 2 ASV fakes: one correct, one rejected (error).
  // 3 Codec/F01 fakes: correct model, wrong model, level-2 rejection.
  // 1 Codec/F04 fake misread as FoR (ADA error, not forwarded).
  std::vector<ManifestEntry> entries = {
      real_entry(),          real_entry(),
      fake_entry("ASV"),     fake_entry("ASV"),
      fake_entry("Codec", "F01"), fake_entry("Codec", "F01"),
      fake_entry("Codec", "F01"), fake_entry("Codec", "F04")};
  entries[0].path = "wav/r0.wav";
  entries[1].path = "wav/r1.wav";
  entries[2].path = "wav/a0.wav";
  entries[3].path = "wav/a1.wav";
  entries[4].path = "wav/c0.wav";
  entries[5].path = "wav/c1.wav";
  entries[6].path = "wav/c2.wav";
  entries[7].path = "wav/c3.wav";

  size_t asv = index_in(kTechnologies, "ASV");
  size_t forr = index_in(kTechnologies, "FoR");
  size_t codec = index_in(kTechnologies, kCodecLabel);
  auto ada_rule = [=](const ManifestEntry& e) {
    if (e.path == "wav/r0.wav") return peak(3, asv, 0.3f);
    if (e.path == "wav/r1.wav") return peak(3, asv, 0.9f);
    if (e.path == "wav/a0.wav") return peak(3, asv, 0.9f);
    if (e.path == "wav/a1.wav") return peak(3, asv, 0.3f);
    if (e.path == "wav/c3.wav") return peak(3, forr, 0.9f);
    return peak(3, codec, 0.9f);
  };
  auto admr_rule = [](const ManifestEntry& e) {
    if (e.path == "wav/c0.wav") return peak(6, 0, 0.9f);
    if (e.path == "wav/c1.wav") return peak(6, 3, 0.9f);
    return peak(6, 0, 0.3f);
  };
  RoutingConfig routing;
  routing.tau_ada = 0.5f;
  routing.tau_admr = 0.5f;
  ErrorPropReport r = error_propagation_eval(
      entries, stub_scorer(ada_rule, admr_rule), routing);

  CHECK(r.total == 8);
  // Errors: accepted real, rejected ASV fake, misread Codec fake.
  CHECK(r.ada_errors == 3);
  CHECK(r.ada_correct == 5);
  CHECK(r.ada_error_rate == doctest::Approx(3.0 / 8.0));
  CHECK(r.forwarded == 3);
  // Level-2 errors among forwarded: wrong model and rejection.
  CHECK(r.admr_errors == 2);
  CHECK(r.admr_error_rate == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_group.at("real").ada_errors == 1);
  CHECK(r.per_group.at("ASV").ada_errors == 1);
  CHECK(r.per_group.at("Codec").ada_errors == 1);
  CHECK(r.per_group.at("Codec").forwarded == 3);
  const ModelBreakdown& f01 = r.per_model.at("F01");
  CHECK(f01.forwarded == 3);
  CHECK(f01.correct_model == 1);
  CHECK(f01.wrong_model == 1);
  CHECK(f01.rejected == 1);
  CHECK(r.per_model.count("F04") == 0);

  nlohmann::json j = error_prop_to_json(r);
  CHECK(j["total"] == 8);
  CHECK(j["ada_errors"] == 3);
  CHECK(j["per_model"]["F01"]["wrong_model"] == 1);
  CHECK(j["definition"].is_string());
  CHECK_FALSE(j["definition"].get<std::string>().empty());
}

TEST_CASE("error propagation: group totals always reconcile") {
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 20; ++i) entries.push_back(real_entry());
  for (const auto& t : kTechnologies)
    for (int i = 0; i < 15; ++i)
      entries.push_back(t == kCodecLabel
                            ? fake_entry(t, kModels[size_t(i % 6)])
                            : fake_entry(t));
  Rng rng(123);
  auto ada_rule = [&rng](const ManifestEntry&) {
    return peak(3, size_t(rng.uniform_int(3)),
                0.34f + 0.66f * float(rng.uniform()));
  };
  auto admr_rule = [&rng](const ManifestEntry&) {
    return peak(6, size_t(rng.uniform_int(6)),
                0.17f + 0.83f * float(rng.uniform()));
  };
  RoutingConfig routing;
  routing.tau_ada = 0.6f;
  routing.tau_admr = 0.6f;
  ErrorPropReport r = error_propagation_eval(
      entries, stub_scorer(ada_rule, admr_rule), routing);

  CHECK(r.ada_errors + r.ada_correct == r.total);
  int64_t group_total = 0, group_fwd = 0;
  for (const auto& [name, g] : r.per_group) {
    CHECK(g.ada_errors + g.ada_correct == g.count);
    CHECK(g.ada_accepted + g.ada_rejected == g.count);
    group_total += g.count;
    group_fwd += g.forwarded;
  }
  CHECK(group_total == r.total);
  CHECK(group_fwd == r.forwarded);
  int64_t model_fwd = 0;
  for (const auto& [name, mb] : r.per_model) {
    CHECK(mb.correct_model + mb.wrong_model + mb.rejected == mb.forwarded);
    model_fwd += mb.forwarded;
  }
  CHECK(model_fwd == r.per_group.at(kCodecLabel).forwarded);
}

TEST_CASE("error propagation: validation failures") {
  RoutingConfig routing;
  auto any = stub_scorer([](const ManifestEntry&) { return peak(3, 0, 0.9f); },
                         nullptr);
  CHECK_THROWS_AS((void)error_propagation_eval({}, any, routing),
                  ValidationError);

  ManifestEntry no_tech;
  no_tech.path = "x.wav";
  no_tech.authenticity = "fake";
  CHECK_THROWS_AS((void)error_propagation_eval({no_tech}, any, routing),
                  ValidationError);

  ManifestEntry no_model = fake_entry("Codec");
  CHECK_THROWS_AS((void)error_propagation_eval({no_model}, any, routing),
                  ValidationError);

  // Nothing forwarded leaves the level-2 rate undefined.
  routing.tau_ada = 2.0f;
  ErrorPropReport r = error_propagation_eval({fake_entry("ASV")}, any, routing);
  CHECK(r.forwarded == 0);
  CHECK_FALSE(r.admr_rate_defined);
  CHECK(error_prop_to_json(r)["admr_rate_defined"] == false);
}

TEST_CASE("generalization: all-rejected source conforms to 'reject'") {
  std::vector<ManifestEntry> entries(12, fake_entry("FoR"));
  auto timid = stub_scorer(
      [](const ManifestEntry&) { return peak(3, 1, 0.4f); }, nullptr);
  RoutingConfig routing;
  routing.tau_ada = 0.5f;
  GeneralizationReport r =
      generalization_eval(entries, timid, routing, "reject");
  CHECK(r.total == 12);
  CHECK(r.ada_rejected == 12);
  CHECK(r.ada_rejection_rate == doctest::Approx(1.0));
  CHECK(r.accepted_label_counts.empty());
  CHECK(r.forwarded == 0);
  CHECK(r.expectation_set);
  CHECK(r.conforming_fraction == doctest::Approx(1.0));
}

TEST_CASE("generalization: confident wrong-label source fails 'reject'") {
  std::vector<ManifestEntry> entries(10, fake_entry("FoR"));
  size_t asv = index_in(kTechnologies, "ASV");
  auto bold = stub_scorer(
      [asv](const ManifestEntry&) { return peak(3, asv, 0.95f); }, nullptr);
  RoutingConfig routing;
  routing.tau_ada = 0.5f;

  GeneralizationReport r = generalization_eval(entries, bold, routing, "reject");
  CHECK(r.ada_rejection_rate == 0.0);
  CHECK(r.accepted_label_counts.at("ASV") == 10);
  CHECK(r.accepted_label_fractions.at("ASV") == doctest::Approx(1.0));
  CHECK(r.conforming_fraction == 0.0);

  GeneralizationReport ok =
      generalization_eval(entries, bold, routing, "reject-or-ASV");
  CHECK(ok.conforming_fraction == doctest::Approx(1.0));
}

TEST_CASE("generalization: distributions sum to one over their bases") {
  std::vector<ManifestEntry> entries(60, fake_entry("FoR"));
  Rng rng(7);
  size_t codec = index_in(kTechnologies, kCodecLabel);
  auto scorer = stub_scorer(
      [&rng](const ManifestEntry&) {
        return peak(3, size_t(rng.uniform_int(3)),
                    0.34f + 0.66f * float(rng.uniform()));
      },
      [&rng](const ManifestEntry&) {
        return peak(6, size_t(rng.uniform_int(6)),
                    0.17f + 0.83f * float(rng.uniform()));
      });
  RoutingConfig routing;
  routing.tau_ada = 0.55f;
  routing.tau_admr = 0.6f;
  GeneralizationReport r = generalization_eval(entries, scorer, routing);
  CHECK_FALSE(r.expectation_set);

  int64_t accepted = 0;
  for (const auto& [label, n] : r.accepted_label_counts) accepted += n;
  CHECK(accepted + r.ada_rejected == r.total);
  if (accepted > 0) {
    double sum = 0.0;
    for (const auto& [label, f] : r.accepted_label_fractions) sum += f;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  if (r.forwarded > 0) {
    double sum = 0.0;
    int64_t n = 0;
    for (const auto& [label, f] : r.admr_decision_fractions) sum += f;
    for (const auto& [label, c] : r.admr_decision_counts) n += c;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n == r.forwarded);
  }
  CHECK(r.forwarded == (r.accepted_label_counts.count(kCodecLabel)
                            ? r.accepted_label_counts.at(kCodecLabel)
                            : 0));

  nlohmann::json j = generalization_to_json(r);
  CHECK(j["total"] == 60);
  CHECK(j["expectation"].is_null());
  CHECK_THROWS_AS((void)generalization_eval(entries, scorer, routing, "maybe"),
                  ValidationError);
  CHECK_THROWS_AS((void)generalization_eval({}, scorer, routing),
                  ValidationError);
}

TEST_CASE("eval pairs: per-level coverage ignores level-1 routing") {
  std::vector<ManifestEntry> entries = {
      real_entry(),            fake_entry("ASV"),
      fake_entry("FoR"),       fake_entry("Codec", "F03"),
      fake_entry("Codec", "F06")};
  size_t asv = index_in(kTechnologies, "ASV");
  // ADA rejects everything; ADMR stays confident. The ADMR pairs must still
  // cover both Codec entries because level-2 scoring is direct.
  auto scorer = stub_scorer(
      [asv](const ManifestEntry&) { return peak(3, asv, 0.4f); },
      [](const ManifestEntry& e) {
        return peak(6, e.model ? index_in(kModels, *e.model) : 0, 0.9f);
      });
  RoutingConfig routing;
  routing.tau_ada = 0.5f;
  routing.tau_admr = 0.5f;
  EvalPairs pairs = collect_eval_pairs(entries, scorer, routing);

  CHECK(pairs.ada.size() == 4);
  for (const auto& p : pairs.ada) {
    CHECK_FALSE(p.pred.accepted);
    CHECK(p.pred.class_index == int(asv));
  }
  CHECK(pairs.admr.size() == 2);
  CHECK(pairs.admr[0].truth == "F03");
  CHECK(pairs.admr[0].pred.label == "F03");
  CHECK(pairs.admr[1].truth == "F06");
  CHECK(pairs.admr[1].pred.accepted);

  // Metrics over the collected pairs close the loop with the harness.
  Metrics m = compute_metrics(pairs.admr, kModels, RejectionMode::Off);
  CHECK(m.accuracy == doctest::Approx(1.0));

  CHECK_THROWS_AS(
      (void)collect_eval_pairs({real_entry()}, scorer, routing),
      ValidationError);
}
