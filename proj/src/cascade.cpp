#include "skimread/cascade.hpp"

namespace skimread::cascade {

Strategy Strategy::naive_ratio(double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ParameterError("naive_ratio: alpha must be in [0, 1]");
  return {Kind::naive_ratio, alpha};
}

Strategy Strategy::prob_threshold(double tau) {
  if (tau < 0.5 || tau > 1.0)
    throw ParameterError("prob_threshold: tau must be in [0.5, 1]");
  return {Kind::prob_threshold, tau};
}

Strategy Strategy::decision_net(double tau_d) {
  if (tau_d < 0.0 || tau_d > 1.0)
    throw ParameterError("decision_net: tau_d must be in [0, 1]");
  return {Kind::decision_net, tau_d};
}

std::string Strategy::kind_name(Kind kind) {
  switch (kind) {
    case Kind::naive_ratio: return "naive_ratio";
    case Kind::prob_threshold: return "prob_threshold";
    case Kind::decision_net: return "decision_net";
  }
  return "unknown";
}

std::vector<int> generate_decision_labels(const std::vector<int>& bow_preds,
                                          const std::vector<int>& lstm_preds,
                                          const std::vector<int>& gold) {
  if (bow_preds.size() != gold.size() || lstm_preds.size() != gold.size())
    throw AlignmentError("generate_decision_labels: prediction sequences differ in length");
  std::vector<int> labels(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool bow_right = bow_preds[i] == gold[i];
    const bool lstm_right = lstm_preds[i] == gold[i];
    labels[i] = (!bow_right && lstm_right) ? 1 : 0;
  }
  return labels;
}

ModelChoice route(const Strategy& strategy, double bow_max_prob,
                  std::optional<double> decision_prob, Rng& rng) {
  switch (strategy.kind) {
    case Strategy::Kind::prob_threshold:
      return bow_max_prob >= strategy.knob ? ModelChoice::bow : ModelChoice::lstm;
    case Strategy::Kind::decision_net:
      if (!decision_prob)
        throw ParameterError("route: decision_net strategy needs a decision probability");
      return *decision_prob > strategy.knob ? ModelChoice::lstm : ModelChoice::bow;
    case Strategy::Kind::naive_ratio:
      return rng.uniform() < strategy.knob ? ModelChoice::bow : ModelChoice::lstm;
  }
  throw ParameterError("route: unknown strategy kind");
}

std::vector<RoutedPrediction> route_dataset(const Strategy& strategy,
                                            const std::vector<int>& bow_preds,
                                            const std::vector<int>& lstm_preds,
                                            const std::vector<double>& bow_max_probs,
                                            const std::vector<double>& decision_probs,
                                            const std::vector<int>& gold, Rng& rng) {
  const std::size_t n = gold.size();
  if (bow_preds.size() != n || lstm_preds.size() != n || bow_max_probs.size() != n)
    throw AlignmentError("route_dataset: prediction sequences differ in length");
  if (!decision_probs.empty() && decision_probs.size() != n)
    throw AlignmentError("route_dataset: decision probabilities differ in length");
  std::vector<RoutedPrediction> routed(n);
  for (std::size_t i = 0; i < n; ++i) {
    RoutedPrediction& r = routed[i];
    r.bow_max_prob = bow_max_probs[i];
    if (!decision_probs.empty()) r.decision_prob = decision_probs[i];
    r.gold_label = gold[i];
    r.choice = route(strategy, r.bow_max_prob, r.decision_prob, rng);
    r.predicted_label = r.choice == ModelChoice::bow ? bow_preds[i] : lstm_preds[i];
  }
  return routed;
}

double expected_accuracy(double alpha, double a_bow, double a_lstm) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ParameterError("expected_accuracy: alpha must be in [0, 1]");
  if (a_bow < 0.0 || a_bow > 1.0 || a_lstm < 0.0 || a_lstm > 1.0)
    throw ParameterError("expected_accuracy: accuracies must be in [0, 1]");
  return alpha * a_bow + (1.0 - alpha) * a_lstm;
}

double compute_cost(CostKind kind, double alpha, const CostModel& costs) {
  costs.validate();
  if (alpha < 0.0 || alpha > 1.0)
    throw ParameterError("compute_cost: alpha must be in [0, 1]");
  if (kind == CostKind::strategy)
    return (costs.c_bow_ms + costs.c_lstm_ms) - alpha * costs.c_lstm_ms;
  return alpha * costs.c_bow_ms + (1.0 - alpha) * costs.c_lstm_ms;
}

ConfusionMatrix confusion(const std::vector<int>& bow_preds,
                          const std::vector<int>& lstm_preds,
                          const std::vector<int>& gold) {
  if (bow_preds.size() != gold.size() || lstm_preds.size() != gold.size())
    throw AlignmentError("confusion: prediction sequences differ in length");
  if (gold.empty()) throw EmptyInputError("confusion: empty prediction set");
  std::size_t tt = 0, tf = 0, ft = 0, ff = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool bow_right = bow_preds[i] == gold[i];
    const bool lstm_right = lstm_preds[i] == gold[i];
    if (bow_right && lstm_right) ++tt;
    else if (bow_right) ++tf;
    else if (lstm_right) ++ft;
    else ++ff;
  }
  const double n = static_cast<double>(gold.size());
  return {static_cast<double>(tt) / n, static_cast<double>(tf) / n,
          static_cast<double>(ft) / n, static_cast<double>(ff) / n};
}

}  // namespace skimread::cascade
