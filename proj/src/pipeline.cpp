#include "lava/pipeline.hpp"

#include <algorithm>
#include <memory>
#include <utility>

#include "lava/nn.hpp"

namespace lava {

namespace {

const char* kErrorPropDefinition =
    "ADA error: a real sample accepted with any label, or a fake sample "
    "rejected, or a fake sample accepted with a technology other than its "
    "true one. ADMR error (among forwarded samples): a true Codec sample "
    "whose final model attribution is not its true model (wrong model or "
    "level-2 rejection), or a forwarded non-Codec or real sample that ADMR "
    "accepted.";

std::vector<float> head_probs(Head& head, const Tensor& features) {
  return nn::softmax(head_logits_from_features(head, features));
}

}  // namespace

PipelineResult route(const std::vector<float>& ada_probs,
                     const ProbFn& admr_probs,
                     const std::vector<std::string>& ada_vocab,
                     const std::vector<std::string>& admr_vocab, float tau_ada,
                     float tau_admr) {
  PipelineResult result;
  result.ada = decide(ada_probs, ada_vocab, tau_ada);

  if (!result.ada.accepted) {
    result.final = {kUnknownLabel, std::nullopt};
    return result;
  }
  if (result.ada.label != kCodecLabel) {
    result.final = {result.ada.label, std::nullopt};
    return result;
  }
  if (!admr_probs)
    throw ValidationError(
        "pipeline: sample routed to level 2 but no model-recognition head is "
        "configured");
  result.admr = decide(admr_probs(), admr_vocab, tau_admr);
  result.final = {kCodecLabel,
                  result.admr->accepted ? result.admr->label
                                        : std::string(kUnknownLabel)};
  return result;
}

PipelineResult infer(const Waveform& w, PipelineModel& model) {
  if (!model.ada) throw ValidationError("pipeline: no technology head loaded");
  if (w.rate != kTargetRate || int64_t(w.samples.size()) != kTargetLength)
    throw ValidationError("pipeline: waveform must be preprocessed to " +
                          std::to_string(kTargetLength) + " samples at " +
                          std::to_string(kTargetRate) + " Hz");
  Tensor wave(std::vector<int64_t>{int64_t(w.samples.size())});
  wave.vec() = w.samples;

  Tensor features = prefix_features(*model.ada, wave);
  std::vector<float> ada_probs = head_probs(*model.ada, features);
  ProbFn admr_fn;
  if (model.admr)
    admr_fn = [&]() { return head_probs(*model.admr, features); };
  return route(ada_probs, admr_fn, model.ada->spec.vocab,
               model.admr ? model.admr->spec.vocab : kModels, model.tau_ada,
               model.tau_admr);
}

nlohmann::json pipeline_result_to_json(const PipelineResult& r) {
  nlohmann::json out;
  out["ada"] = {{"label", r.ada.label},
                {"argmax_index", r.ada.class_index},
                {"confidence", r.ada.confidence},
                {"accepted", r.ada.accepted}};
  if (r.admr) {
    out["admr"] = {{"label", r.admr->label},
                   {"argmax_index", r.admr->class_index},
                   {"confidence", r.admr->confidence},
                   {"accepted", r.admr->accepted}};
  } else {
    out["admr"] = nullptr;
  }
  out["final"] = {{"technology", r.final.technology}};
  if (r.final.model)
    out["final"]["model"] = *r.final.model;
  else
    out["final"]["model"] = nullptr;
  return out;
}

SampleScorer model_scorer(PipelineModel& model, const std::string& manifest_path) {
  if (!model.ada || !model.admr)
    throw ValidationError("model_scorer: both heads must be loaded");
  Head* ada = model.ada;
  Head* admr = model.admr;
  return [ada, admr, manifest_path](const ManifestEntry& entry) {
    Waveform w = preprocess(resolve_path(manifest_path, entry.path));
    Tensor wave(std::vector<int64_t>{int64_t(w.samples.size())});
    wave.vec() = w.samples;
    // The two heads share frozen prefix weights, so one pass serves both.
    auto features = std::make_shared<Tensor>(prefix_features(*ada, wave));
    std::vector<float> ada_probs = head_probs(*ada, *features);
    ProbFn admr_fn = [admr, features]() { return head_probs(*admr, *features); };
    return std::make_pair(std::move(ada_probs), std::move(admr_fn));
  };
}

ErrorPropReport error_propagation_eval(const std::vector<ManifestEntry>& entries,
                                       const SampleScorer& scorer,
                                       const RoutingConfig& routing) {
  if (entries.empty())
    throw ValidationError("error_propagation_eval: empty manifest");

  ErrorPropReport report;
  report.definition = kErrorPropDefinition;

  for (const auto& e : entries) {
    const bool real = e.authenticity == "real";
    if (!real && !e.technology)
      throw ValidationError("error_propagation_eval: fake entry '" + e.path +
                            "' has no technology label");
    if (!real && *e.technology == kCodecLabel && !e.model)
      throw ValidationError("error_propagation_eval: Codec entry '" + e.path +
                            "' has no model label");

    auto [ada_probs, admr_fn] = scorer(e);
    PipelineResult r = route(ada_probs, admr_fn, routing.ada_vocab,
                             routing.admr_vocab, routing.tau_ada,
                             routing.tau_admr);

    ++report.total;
    report.real_count += real;
    report.fake_count += !real;

    std::string group = real ? "real" : *e.technology;
    GroupBreakdown& g = report.per_group[group];
    ++g.count;
    g.ada_accepted += r.ada.accepted;
    g.ada_rejected += !r.ada.accepted;

    bool ada_error;
    if (real) {
      ada_error = r.ada.accepted;
    } else {
      ada_error = !r.ada.accepted || r.ada.label != *e.technology;
    }
    g.ada_errors += ada_error;
    g.ada_correct += !ada_error;
    report.ada_errors += ada_error;

    const bool forwarded = r.admr.has_value();
    if (forwarded) {
      ++report.forwarded;
      ++g.forwarded;
      bool admr_error;
      if (!real && *e.technology == kCodecLabel) {
        ModelBreakdown& mb = report.per_model[*e.model];
        ++mb.forwarded;
        if (!r.admr->accepted) {
          ++mb.rejected;
          admr_error = true;
        } else if (r.admr->label == *e.model) {
          ++mb.correct_model;
          admr_error = false;
        } else {
          ++mb.wrong_model;
          admr_error = true;
        }
      } else {
        admr_error = r.admr->accepted;  // wrongful acceptance of a bad forward
      }
      report.admr_errors += admr_error;
    }
  }

  report.ada_correct = report.total - report.ada_errors;
  report.ada_error_rate = double(report.ada_errors) / double(report.total);
  if (report.forwarded > 0) {
    report.admr_error_rate =
        double(report.admr_errors) / double(report.forwarded);
  } else {
    report.admr_rate_defined = false;
  }
  return report;
}

nlohmann::json error_prop_to_json(const ErrorPropReport& r) {
  nlohmann::json groups;
  for (const auto& [name, g] : r.per_group) {
    groups[name] = {{"count", g.count},
                    {"ada_accepted", g.ada_accepted},
                    {"ada_rejected", g.ada_rejected},
                    {"ada_correct", g.ada_correct},
                    {"ada_errors", g.ada_errors},
                    {"forwarded", g.forwarded}};
  }
  nlohmann::json models;
  for (const auto& [name, mb] : r.per_model) {
    models[name] = {{"forwarded", mb.forwarded},
                    {"correct_model", mb.correct_model},
                    {"wrong_model", mb.wrong_model},
                    {"rejected", mb.rejected}};
  }
  return {{"definition", r.definition},
          {"total", r.total},
          {"real_count", r.real_count},
          {"fake_count", r.fake_count},
          {"ada_errors", r.ada_errors},
          {"ada_correct", r.ada_correct},
          {"ada_error_rate", r.ada_error_rate},
          {"forwarded", r.forwarded},
          {"admr_errors", r.admr_errors},
          {"admr_error_rate", r.admr_error_rate},
          {"admr_rate_defined", r.admr_rate_defined},
          {"per_group", groups},
          {"per_model", models}};
}

GeneralizationReport generalization_eval(const std::vector<ManifestEntry>& entries,
                                         const SampleScorer& scorer,
                                         const RoutingConfig& routing,
                                         const std::string& expectation) {
  if (entries.empty())
    throw ValidationError("generalization_eval: empty manifest");
  if (!expectation.empty() && expectation != "reject" &&
      (expectation.rfind("reject-or-", 0) != 0 ||
       expectation.size() <= std::string("reject-or-").size()))
    throw ValidationError("generalization_eval: expectation must be 'reject' "
                          "or 'reject-or-<label>', got '" + expectation + "'");

  GeneralizationReport report;
  report.expectation = expectation;
  report.expectation_set = !expectation.empty();
  std::string allowed_label =
      report.expectation_set && expectation != "reject"
          ? expectation.substr(std::string("reject-or-").size())
          : "";

  int64_t conforming = 0;
  for (const auto& e : entries) {
    auto [ada_probs, admr_fn] = scorer(e);
    PipelineResult r = route(ada_probs, admr_fn, routing.ada_vocab,
                             routing.admr_vocab, routing.tau_ada,
                             routing.tau_admr);
    ++report.total;
    if (!r.ada.accepted) {
      ++report.ada_rejected;
    } else {
      ++report.accepted_label_counts[r.ada.label];
    }
    if (r.admr) {
      ++report.forwarded;
      ++report.admr_decision_counts[r.admr->accepted ? r.admr->label
                                                     : kUnknownLabel];
    }
    if (report.expectation_set) {
      bool ok = !r.ada.accepted ||
                (!allowed_label.empty() && r.ada.label == allowed_label);
      conforming += ok;
    }
  }

  report.ada_rejection_rate =
      double(report.ada_rejected) / double(report.total);
  int64_t accepted = report.total - report.ada_rejected;
  for (const auto& [label, count] : report.accepted_label_counts)
    report.accepted_label_fractions[label] =
        double(count) / double(accepted);
  for (const auto& [label, count] : report.admr_decision_counts)
    report.admr_decision_fractions[label] =
        double(count) / double(report.forwarded);
  if (report.expectation_set)
    report.conforming_fraction = double(conforming) / double(report.total);
  return report;
}

nlohmann::json generalization_to_json(const GeneralizationReport& r) {
  nlohmann::json out = {
      {"total", r.total},
      {"ada_rejected", r.ada_rejected},
      {"ada_rejection_rate", r.ada_rejection_rate},
      {"accepted_label_counts", r.accepted_label_counts},
      {"accepted_label_fractions", r.accepted_label_fractions},
      {"forwarded", r.forwarded},
      {"admr_decision_counts", r.admr_decision_counts},
      {"admr_decision_fractions", r.admr_decision_fractions}};
  if (r.expectation_set) {
    out["expectation"] = r.expectation;
    out["conforming_fraction"] = r.conforming_fraction;
  } else {
    out["expectation"] = nullptr;
  }
  return out;
}

EvalPairs collect_eval_pairs(const std::vector<ManifestEntry>& entries,
                             const SampleScorer& scorer,
                             const RoutingConfig& routing) {
  EvalPairs pairs;
  for (const auto& e : entries) {
    if (e.authenticity != "fake") continue;
    auto [ada_probs, admr_fn] = scorer(e);
    if (e.technology) {
      Prediction p = decide(ada_probs, routing.ada_vocab, routing.tau_ada);
      pairs.ada.push_back({*e.technology, p});
    }
    if (e.model) {
      if (!admr_fn)
        throw ValidationError("collect_eval_pairs: no model-recognition "
                              "scorer for entry '" + e.path + "'");
      Prediction p = decide(admr_fn(), routing.admr_vocab, routing.tau_admr);
      pairs.admr.push_back({*e.model, p});
    }
  }
  if (pairs.ada.empty())
    throw ValidationError("collect_eval_pairs: no labeled fake entries");
  return pairs;
}

}  // namespace lava
