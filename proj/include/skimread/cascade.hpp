#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skimread/rng.hpp"

namespace skimread::cascade {

/// Per-sample inference cost of each model in milliseconds.
struct CostModel {
  double c_bow_ms = 0.16;
  double c_lstm_ms = 1.36;

  void validate() const {
    if (!(c_bow_ms > 0.0) || !(c_lstm_ms > c_bow_ms))
      throw ParameterError("CostModel: need 0 < c_bow < c_lstm");
  }
};

enum class ModelChoice { bow, lstm };

/// A routing policy. naive_ratio sends a fixed random fraction alpha to the
/// BoW; prob_threshold keeps the BoW answer when its max class probability
/// reaches tau; decision_net runs the LSTM when the learned routing
/// probability exceeds tau_d.
struct Strategy {
  enum class Kind { naive_ratio, prob_threshold, decision_net };

  Kind kind = Kind::prob_threshold;
  double knob = 0.5;

  static Strategy naive_ratio(double alpha);
  static Strategy prob_threshold(double tau);
  static Strategy decision_net(double tau_d);

  static std::string kind_name(Kind kind);
  std::string name() const { return kind_name(kind); }
};

struct RoutedPrediction {
  ModelChoice choice = ModelChoice::bow;
  int predicted_label = 0;
  double bow_max_prob = 0.0;
  std::optional<double> decision_prob;
  int gold_label = 0;
};

/// Joint correctness fractions of the two models: first letter BoW, second
/// LSTM, t = correct. tt+tf+ft+ff = 1.
struct ConfusionMatrix {
  double tt = 0.0;
  double tf = 0.0;
  double ft = 0.0;
  double ff = 0.0;

  double bow_accuracy() const { return tt + tf; }
  double lstm_accuracy() const { return tt + ft; }
};

/// Routing labels for decision-network training: LSTM (1) exactly when the
/// LSTM is right and the BoW is wrong, BoW (0) for every other combination.
std::vector<int> generate_decision_labels(const std::vector<int>& bow_preds,
                                          const std::vector<int>& lstm_preds,
                                          const std::vector<int>& gold);

/// Picks the model for one example. prob_threshold ties route to the BoW
/// (the cheap side); naive_ratio consumes one rng draw per call.
ModelChoice route(const Strategy& strategy, double bow_max_prob,
                  std::optional<double> decision_prob, Rng& rng);

/// Routes a whole evaluation set, pairing each choice with the prediction it
/// selects. decision_probs may be empty for the non-decision strategies.
std::vector<RoutedPrediction> route_dataset(const Strategy& strategy,
                                            const std::vector<int>& bow_preds,
                                            const std::vector<int>& lstm_preds,
                                            const std::vector<double>& bow_max_probs,
                                            const std::vector<double>& decision_probs,
                                            const std::vector<int>& gold, Rng& rng);

/// Mixture accuracy alpha * a_bow + (1 - alpha) * a_lstm.
double expected_accuracy(double alpha, double a_bow, double a_lstm);

enum class CostKind { strategy, ratio };

/// Guided strategies always pay the BoW on every sample:
///   strategy: c_bow + (1 - alpha) * c_lstm
///   ratio:    alpha * c_bow + (1 - alpha) * c_lstm
double compute_cost(CostKind kind, double alpha, const CostModel& costs);

ConfusionMatrix confusion(const std::vector<int>& bow_preds,
                          const std::vector<int>& lstm_preds,
                          const std::vector<int>& gold);

}  // namespace skimread::cascade
