#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skimread/cascade.hpp"
#include "skimread/tensor.hpp"

namespace skimread::eval {

struct CurvePoint {
  double knob = 0.0;  // the tau / tau_d / alpha that produced this point
  double savings = 0.0;
  double accuracy = 0.0;
};

/// The pure-LSTM anchor is not produced by any knob; it carries this sentinel.
constexpr double kPureLstmKnob = -1.0;

/// Points sorted by savings, strictly increasing, starting at the pure-LSTM
/// anchor (savings 0).
struct Curve {
  std::string strategy;
  std::vector<CurvePoint> points;
};

struct BucketHistogram {
  double bin_width = 0.05;
  std::vector<double> lower_edges;
  std::vector<std::size_t> counts;
  std::vector<double> bin_accuracy;         // 0 for empty bins
  std::vector<double> cumulative_accuracy;  // over examples at/above each edge
};

/// Buckets the max class probability over [0.5, 1.0]; the first bin is
/// closed, later bins are left-open/right-closed.
BucketHistogram bucket_accuracy(const std::vector<double>& bow_max_probs,
                                const std::vector<std::uint8_t>& correct,
                                double bin_width = 0.05);

/// Fraction of examples with bow_max_prob < tau, per threshold.
std::vector<double> cumulative_lstm_usage(const std::vector<double>& bow_max_probs,
                                          const std::vector<double>& thresholds);

/// Everything a routing sweep needs about one evaluation split.
struct StrategyInputs {
  std::vector<int> gold;
  std::vector<int> bow_pred;
  std::vector<int> lstm_pred;
  std::vector<double> bow_max_prob;
  std::vector<double> decision_prob;  // may be empty for non-decision families
};

struct CurveOptions {
  std::size_t grid_size = 201;
  /// Extra per-sample milliseconds charged to the decision-net family (its
  /// head is normally costed as free, like the probability strategy).
  double decision_head_ms = 0.0;
  std::uint64_t ratio_seed = 2024;  // seeds naive-ratio routing draws
  int workers = -1;
};

/// Sweeps the strategy knob over a grid. Each knob routes every example,
/// yielding the realized BoW fraction, the cost (strategy or ratio formula),
/// savings = 1 - cost / c_lstm, and routed accuracy. Points with negative
/// savings are clipped; the pure-LSTM anchor is prepended.
Curve speed_accuracy_curve(cascade::Strategy::Kind family,
                           const StrategyInputs& inputs,
                           const cascade::CostModel& costs,
                           const CurveOptions& opts = {});

/// Plain-loop reference for the parallel sweep; must match it bit for bit.
Curve speed_accuracy_curve_serial(cascade::Strategy::Kind family,
                                  const StrategyInputs& inputs,
                                  const cascade::CostModel& costs,
                                  const CurveOptions& opts = {});

/// Mean accuracy of the linear interpolation over the savings range,
/// reported in percent.
double auc(const Curve& curve);

/// Analytic baseline line: alpha grid, savings alpha * (1 - c_bow / c_lstm),
/// accuracy from the mixture expectation.
Curve naive_ratio_curve(double a_bow, double a_lstm,
                        const cascade::CostModel& costs,
                        std::size_t grid_size = 201);

struct ReportEntry {
  std::string strategy;
  std::string split;
  double auc = 0.0;
  Curve curve;
};

struct Report {
  std::vector<ReportEntry> entries;
  cascade::ConfusionMatrix confusion;  // validation split
  cascade::CostModel costs;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::string interpolation = "trapezoid";
};

std::string report_to_json(const Report& report);

struct ActivationRow {
  std::size_t id = 0;
  int label = 0;
  bool bow_correct = false;
  bool lstm_correct = false;
  double decision_prob = 0.0;
  const Tensor* hidden = nullptr;  // BoW last hidden layer
};

/// Writes report.json, one curve_<strategy>.csv per strategy (validation
/// split), confusion.csv, and activations.csv into out_dir.
void export_report(const Report& report, const std::vector<ActivationRow>& activations,
                   const std::string& out_dir);

/// Reads a curve CSV back; strategy name is taken by the caller.
Curve load_curve_csv(const std::string& path, const std::string& strategy);

}  // namespace skimread::eval
