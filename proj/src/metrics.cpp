#include "lava/metrics.hpp"

#include <algorithm>

namespace lava {

RejectionMode rejection_mode_from_string(const std::string& s) {
  if (s == "off") return RejectionMode::Off;
  if (s == "as-error") return RejectionMode::AsError;
  throw ValidationError("unknown rejection mode '" + s +
                        "' (expected 'off' or 'as-error')");
}

std::string to_string(RejectionMode mode) {
  return mode == RejectionMode::Off ? "off" : "as-error";
}

Metrics compute_metrics(const std::vector<LabeledPrediction>& pairs,
                        const std::vector<std::string>& vocab,
                        RejectionMode mode) {
  if (pairs.empty()) throw ValidationError("compute_metrics: no samples");
  if (vocab.empty()) throw ValidationError("compute_metrics: empty vocabulary");

  auto index_of = [&vocab](const std::string& label) {
    for (size_t i = 0; i < vocab.size(); ++i)
      if (vocab[i] == label) return int64_t(i);
    return int64_t(-1);
  };

  Metrics m;
  m.mode = mode;
  m.vocab = vocab;
  m.pred_vocab = vocab;
  const int64_t n = int64_t(vocab.size());
  int64_t cols = n;
  if (mode == RejectionMode::AsError) {
    m.pred_vocab.push_back("unknown");
    ++cols;
  }
  m.confusion.assign(size_t(n), std::vector<int64_t>(size_t(cols), 0));
  m.total = int64_t(pairs.size());

  int64_t rejected = 0;
  for (const auto& [truth, pred] : pairs) {
    int64_t t = index_of(truth);
    if (t < 0)
      throw ValidationError("compute_metrics: true label '" + truth +
                            "' is not in the vocabulary");
    if (pred.class_index < 0 || pred.class_index >= n)
      throw ValidationError("compute_metrics: prediction argmax out of range");
    rejected += !pred.accepted;
    int64_t p;
    if (mode == RejectionMode::Off) {
      p = pred.class_index;  // raw argmax, thresholds ignored
    } else {
      p = pred.accepted ? int64_t(pred.class_index) : n;
    }
    ++m.confusion[size_t(t)][size_t(p)];
  }
  m.rejection_rate = double(rejected) / double(m.total);

  int64_t correct = 0;
  double support_total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    ClassMetrics c;
    c.label = vocab[size_t(i)];
    c.tp = m.confusion[size_t(i)][size_t(i)];
    int64_t row = 0;
    for (int64_t j = 0; j < cols; ++j) row += m.confusion[size_t(i)][size_t(j)];
    int64_t col = 0;
    for (int64_t j = 0; j < n; ++j) col += m.confusion[size_t(j)][size_t(i)];
    c.support = row;
    c.fp = col - c.tp;
    c.fn = row - c.tp;
    correct += c.tp;

    if (c.tp + c.fp > 0) {
      c.precision = double(c.tp) / double(c.tp + c.fp);
    } else {
      c.precision = 0.0;
      c.precision_defined = false;
    }
    if (c.tp + c.fn > 0) {
      c.recall = double(c.tp) / double(c.tp + c.fn);
    } else {
      c.recall = 0.0;
      c.recall_defined = false;
    }
    c.f1 = (c.precision + c.recall > 0)
               ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
               : 0.0;

    m.macro_precision += c.precision;
    m.macro_recall += c.recall;
    m.macro_f1 += c.f1;
    m.weighted_precision += double(c.support) * c.precision;
    m.weighted_recall += double(c.support) * c.recall;
    m.weighted_f1 += double(c.support) * c.f1;
    support_total += double(c.support);

    m.per_class.push_back(c);
  }

  m.accuracy = double(correct) / double(m.total);
  m.macro_precision /= double(n);
  m.macro_recall /= double(n);
  m.macro_f1 /= double(n);
  if (support_total > 0) {
    m.weighted_precision /= support_total;
    m.weighted_recall /= support_total;
    m.weighted_f1 /= support_total;
  }
  return m;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : m.per_class) {
    per_class.push_back({{"label", c.label},
                         {"support", c.support},
                         {"tp", c.tp},
                         {"fp", c.fp},
                         {"fn", c.fn},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"precision_defined", c.precision_defined},
                         {"recall_defined", c.recall_defined}});
  }
  return {{"rejection_mode", to_string(m.mode)},
          {"labels", m.vocab},
          {"predicted_labels", m.pred_vocab},
          {"confusion", m.confusion},
          {"per_class", per_class},
          {"total", m.total},
          {"accuracy", m.accuracy},
          {"macro_avg",
           {{"precision", m.macro_precision},
            {"recall", m.macro_recall},
            {"f1", m.macro_f1}}},
          {"weighted_avg",
           {{"precision", m.weighted_precision},
            {"recall", m.weighted_recall},
            {"f1", m.weighted_f1}}},
          {"rejection_rate", m.rejection_rate}};
}

}  // namespace lava
