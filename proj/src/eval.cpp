#include "skimread/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skimread/parallel.hpp"

namespace skimread::eval {

namespace {

void check_aligned(const StrategyInputs& in, bool need_decision) {
  const std::size_t n = in.gold.size();
  if (in.bow_pred.size() != n || in.lstm_pred.size() != n ||
      in.bow_max_prob.size() != n)
    throw AlignmentError("speed_accuracy_curve: prediction sequences differ in length");
  if (n == 0) throw EmptyInputError("speed_accuracy_curve: empty evaluation set");
  if (need_decision && in.decision_prob.size() != n)
    throw ParameterError("speed_accuracy_curve: decision_net family needs decision probabilities");
}

double knob_for(cascade::Strategy::Kind family, std::size_t k, std::size_t grid) {
  const double frac =
      grid == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(grid - 1);
  if (family == cascade::Strategy::Kind::prob_threshold) return 0.5 + 0.5 * frac;
  return frac;  // alpha or tau_d in [0, 1]
}

CurvePoint evaluate_point(cascade::Strategy::Kind family, double knob,
                          const StrategyInputs& in,
                          const cascade::CostModel& costs,
                          const CurveOptions& opts, std::size_t point_index) {
  const std::size_t n = in.gold.size();
  Rng rng(opts.ratio_seed + point_index);
  cascade::Strategy strategy{family, knob};

  std::size_t to_bow = 0, correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::optional<double> dp =
        in.decision_prob.empty() ? std::nullopt
                                 : std::optional<double>(in.decision_prob[i]);
    const cascade::ModelChoice choice =
        cascade::route(strategy, in.bow_max_prob[i], dp, rng);
    const int predicted = choice == cascade::ModelChoice::bow ? in.bow_pred[i]
                                                              : in.lstm_pred[i];
    if (choice == cascade::ModelChoice::bow) ++to_bow;
    if (predicted == in.gold[i]) ++correct;
  }

  const double alpha = static_cast<double>(to_bow) / static_cast<double>(n);
  const cascade::CostKind cost_kind = family == cascade::Strategy::Kind::naive_ratio
                                          ? cascade::CostKind::ratio
                                          : cascade::CostKind::strategy;
  double cost = cascade::compute_cost(cost_kind, alpha, costs);
  if (family == cascade::Strategy::Kind::decision_net) cost += opts.decision_head_ms;

  CurvePoint point;
  point.knob = knob;
  point.savings = 1.0 - cost / costs.c_lstm_ms;
  point.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return point;
}

Curve finalize_curve(cascade::Strategy::Kind family,
                     std::vector<CurvePoint> raw_points, double lstm_accuracy) {
  CurvePoint anchor;
  anchor.knob = kPureLstmKnob;
  anchor.savings = 0.0;
  anchor.accuracy = lstm_accuracy;

  std::vector<CurvePoint> points;
  points.reserve(raw_points.size() + 1);
  points.push_back(anchor);
  for (CurvePoint& p : raw_points) points.push_back(p);

  std::stable_sort(points.begin(), points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) {
                     return a.savings < b.savings;
                   });
  Curve curve;
  curve.strategy = cascade::Strategy::kind_name(family);
  for (const CurvePoint& p : points) {
    if (p.savings < 0.0) continue;  // dominated knobs below the LSTM anchor
    if (!curve.points.empty() && p.savings == curve.points.back().savings) continue;
    curve.points.push_back(p);
  }
  return curve;
}

double overall_lstm_accuracy(const StrategyInputs& in) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < in.gold.size(); ++i)
    if (in.lstm_pred[i] == in.gold[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(in.gold.size());
}

}  // namespace

BucketHistogram bucket_accuracy(const std::vector<double>& bow_max_probs,
                                const std::vector<std::uint8_t>& correct,
                                double bin_width) {
  if (bow_max_probs.size() != correct.size())
    throw AlignmentError("bucket_accuracy: probabilities and flags differ in length");
  if (!(bin_width > 0.0) || bin_width > 0.5)
    throw ParameterError("bucket_accuracy: bin_width must be in (0, 0.5]");

  BucketHistogram hist;
  hist.bin_width = bin_width;
  const std::size_t n_bins = static_cast<std::size_t>(
      std::ceil(0.5 / bin_width - 1e-12));
  hist.lower_edges.resize(n_bins);
  hist.counts.assign(n_bins, 0);
  std::vector<std::size_t> hits(n_bins, 0);
  for (std::size_t b = 0; b < n_bins; ++b)
    hist.lower_edges[b] = 0.5 + bin_width * static_cast<double>(b);

  for (std::size_t i = 0; i < bow_max_probs.size(); ++i) {
    const double p = bow_max_probs[i];
    std::size_t bin = 0;
    if (p > 0.5) {
      // Left-open/right-closed: an exact edge belongs to the bin below it.
      const double offset = (p - 0.5) / bin_width;
      double idx = std::ceil(offset) - 1.0;
      if (idx < 0.0) idx = 0.0;
      bin = std::min(n_bins - 1, static_cast<std::size_t>(idx));
    }
    hist.counts[bin] += 1;
    hits[bin] += correct[i];
  }

  hist.bin_accuracy.assign(n_bins, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b)
    if (hist.counts[b] > 0)
      hist.bin_accuracy[b] =
          static_cast<double>(hits[b]) / static_cast<double>(hist.counts[b]);

  hist.cumulative_accuracy.assign(n_bins, 0.0);
  std::size_t cum_count = 0, cum_hits = 0;
  for (std::size_t b = n_bins; b-- > 0;) {
    cum_count += hist.counts[b];
    cum_hits += hits[b];
    if (cum_count > 0)
      hist.cumulative_accuracy[b] =
          static_cast<double>(cum_hits) / static_cast<double>(cum_count);
  }
  return hist;
}

std::vector<double> cumulative_lstm_usage(const std::vector<double>& bow_max_probs,
                                          const std::vector<double>& thresholds) {
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] < thresholds[i - 1])
      throw ParameterError("cumulative_lstm_usage: thresholds must be sorted ascending");
  std::vector<double> sorted = bow_max_probs;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> fractions(thresholds.size(), 0.0);
  const double n = static_cast<double>(sorted.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), thresholds[t]);
    fractions[t] =
        sorted.empty() ? 0.0
                       : static_cast<double>(below - sorted.begin()) / n;
  }
  return fractions;
}

Curve speed_accuracy_curve_serial(cascade::Strategy::Kind family,
                                  const StrategyInputs& inputs,
                                  const cascade::CostModel& costs,
                                  const CurveOptions& opts) {
  check_aligned(inputs, family == cascade::Strategy::Kind::decision_net);
  if (opts.grid_size < 2)
    throw ParameterError("speed_accuracy_curve: grid_size must be >= 2");
  std::vector<CurvePoint> raw(opts.grid_size);
  for (std::size_t k = 0; k < opts.grid_size; ++k)
    raw[k] = evaluate_point(family, knob_for(family, k, opts.grid_size), inputs,
                            costs, opts, k);
  return finalize_curve(family, std::move(raw), overall_lstm_accuracy(inputs));
}

Curve speed_accuracy_curve(cascade::Strategy::Kind family,
                           const StrategyInputs& inputs,
                           const cascade::CostModel& costs,
                           const CurveOptions& opts) {
  check_aligned(inputs, family == cascade::Strategy::Kind::decision_net);
  if (opts.grid_size < 2)
    throw ParameterError("speed_accuracy_curve: grid_size must be >= 2");
  std::vector<CurvePoint> raw(opts.grid_size);
  parallel_for(
      opts.grid_size,
      [&](std::size_t k) {
        raw[k] = evaluate_point(family, knob_for(family, k, opts.grid_size),
                                inputs, costs, opts, k);
      },
      opts.workers);
  return finalize_curve(family, std::move(raw), overall_lstm_accuracy(inputs));
}

double auc(const Curve& curve) {
  if (curve.points.size() < 2)
    throw DegenerateCurveError("auc: curve needs at least 2 points");
  double integral = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const CurvePoint& a = curve.points[i - 1];
    const CurvePoint& b = curve.points[i];
    integral += (b.savings - a.savings) * 0.5 * (a.accuracy + b.accuracy);
  }
  const double s_max = curve.points.back().savings - curve.points.front().savings;
  if (!(s_max > 0.0)) throw DegenerateCurveError("auc: zero savings range");
  return 100.0 * integral / s_max;
}

Curve naive_ratio_curve(double a_bow, double a_lstm,
                        const cascade::CostModel& costs, std::size_t grid_size) {
  costs.validate();
  if (a_bow < 0.0 || a_bow > 1.0 || a_lstm < 0.0 || a_lstm > 1.0)
    throw ParameterError("naive_ratio_curve: accuracies must be in [0, 1]");
  if (grid_size < 2)
    throw ParameterError("naive_ratio_curve: grid_size must be >= 2");
  const double max_savings = 1.0 - costs.c_bow_ms / costs.c_lstm_ms;
  Curve curve;
  curve.strategy = "naive_ratio";
  curve.points.reserve(grid_size);
  for (std::size_t k = 0; k < grid_size; ++k) {
    const double alpha =
        static_cast<double>(k) / static_cast<double>(grid_size - 1);
    CurvePoint p;
    p.knob = alpha;
    p.savings = alpha * max_savings;
    p.accuracy = cascade::expected_accuracy(alpha, a_bow, a_lstm);
    curve.points.push_back(p);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Report export

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

nlohmann::json curve_to_json(const Curve& curve) {
  nlohmann::json points = nlohmann::json::array();
  for (const CurvePoint& p : curve.points)
    points.push_back({{"knob", p.knob}, {"savings", p.savings}, {"accuracy", p.accuracy}});
  return points;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

std::string report_to_json(const Report& report) {
  nlohmann::json j;
  j["cost_model"] = {{"c_bow_ms", report.costs.c_bow_ms},
                     {"c_lstm_ms", report.costs.c_lstm_ms}};
  nlohmann::json seeds = nlohmann::json::object();
  for (const auto& [name, value] : report.seeds) seeds[name] = value;
  j["seeds"] = seeds;
  j["interpolation"] = report.interpolation;
  j["confusion"] = {{"tt", report.confusion.tt},
                    {"tf", report.confusion.tf},
                    {"ft", report.confusion.ft},
                    {"ff", report.confusion.ff}};
  nlohmann::json entries = nlohmann::json::array();
  for (const ReportEntry& e : report.entries)
    entries.push_back({{"strategy", e.strategy},
                       {"split", e.split},
                       {"auc", e.auc},
                       {"points", curve_to_json(e.curve)}});
  j["entries"] = entries;
  return j.dump(2) + "\n";
}

void export_report(const Report& report, const std::vector<ActivationRow>& activations,
                   const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  write_file((dir / "report.json").string(), report_to_json(report));

  for (const ReportEntry& e : report.entries) {
    if (e.split != "valid") continue;
    std::ostringstream csv;
    csv << "knob,savings,accuracy\r\n";
    for (const CurvePoint& p : e.curve.points)
      csv << format_number(p.knob) << "," << format_number(p.savings) << ","
          << format_number(p.accuracy) << "\r\n";
    write_file((dir / ("curve_" + e.strategy + ".csv")).string(), csv.str());
  }

  {
    std::ostringstream csv;
    csv << "tt,tf,ft,ff\r\n";
    csv << format_number(report.confusion.tt) << ","
        << format_number(report.confusion.tf) << ","
        << format_number(report.confusion.ft) << ","
        << format_number(report.confusion.ff) << "\r\n";
    write_file((dir / "confusion.csv").string(), csv.str());
  }

  {
    std::ostringstream csv;
    csv << "id,label,bow_correct,lstm_correct,decision_prob";
    const std::size_t width = activations.empty() ? 0 : activations[0].hidden->size();
    for (std::size_t k = 1; k <= width; ++k) csv << ",h" << k;
    csv << "\r\n";
    for (const ActivationRow& row : activations) {
      csv << row.id << "," << row.label << "," << (row.bow_correct ? 1 : 0) << ","
          << (row.lstm_correct ? 1 : 0) << "," << format_number(row.decision_prob);
      for (double h : row.hidden->data) csv << "," << format_number(h);
      csv << "\r\n";
    }
    write_file((dir / "activations.csv").string(), csv.str());
  }
}

Curve load_curve_csv(const std::string& path, const std::string& strategy) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve CSV: " + path);
  Curve curve;
  curve.strategy = strategy;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    if (header) {
      if (line != "knob,savings,accuracy")
        throw FormatError("unexpected curve CSV header in " + path);
      header = false;
      continue;
    }
    CurvePoint p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.knob, &p.savings,
                    &p.accuracy) != 3)
      throw FormatError("bad curve CSV row in " + path + ": " + line);
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace skimread::eval
