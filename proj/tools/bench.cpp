// Compares the serial reference kernels against their parallel counterparts:
// batch inference for both classifiers and the curve sweep. Verifies the
// outputs agree bit for bit before reporting throughput.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "skimread/data.hpp"
#include "skimread/eval.hpp"
#include "skimread/models.hpp"
#include "skimread/parallel.hpp"

namespace {

using namespace skimread;

double time_ms(const std::function<void()>& body, int repeats) {
  body();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) body();
  const double total = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  return total / repeats;
}

void report(const char* name, double serial_ms, double parallel_ms, bool equal) {
  std::printf("%-22s serial=%9.2f ms  parallel=%9.2f ms  speedup=%5.2fx  %s\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              equal ? "outputs-identical" : "OUTPUTS-DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n_examples = 2000;
  int repeats = 3;
  if (argc > 1) n_examples = std::stoul(argv[1]);
  if (argc > 2) repeats = std::stoi(argv[2]);

  std::printf("workers=%d examples=%zu repeats=%d\n\n", max_workers(), n_examples,
              repeats);

  Rng rng(99);
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back({"w" + std::to_string(i)});
  const data::Vocab vocab = data::build_vocab(corpus, 1);
  const data::EmbeddingTable table = data::random_embeddings(vocab, 32, rng);
  const models::BoWClassifier bow(table, {.hidden = 64, .dropout_p = 0.5}, rng);
  const models::LSTMClassifier lstm(
      table, {.projection = 32, .hidden = 32, .mlp_hidden = 32, .dropout_p = 0.5},
      rng);

  std::vector<data::Example> examples(n_examples);
  for (data::Example& ex : examples) {
    const std::size_t len = 4 + rng.below(12);
    for (std::size_t t = 0; t < len; ++t)
      ex.tokens.push_back(2 + rng.below(vocab.size() - 2));
    ex.label = rng.bernoulli(0.5) ? 1 : 0;
  }

  // BoW batch inference.
  std::vector<models::BowPrediction> bow_serial, bow_parallel;
  const double bow_s =
      time_ms([&] { bow_serial = models::predict_bow_serial(bow, examples); }, repeats);
  const double bow_p =
      time_ms([&] { bow_parallel = models::predict_bow(bow, examples); }, repeats);
  bool bow_equal = true;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (bow_serial[i].label != bow_parallel[i].label ||
        bow_serial[i].max_prob != bow_parallel[i].max_prob)
      bow_equal = false;
  report("predict_bow", bow_s, bow_p, bow_equal);

  // LSTM batch inference.
  std::vector<models::LstmPrediction> lstm_serial, lstm_parallel;
  const double lstm_s = time_ms(
      [&] { lstm_serial = models::predict_lstm_serial(lstm, examples); }, repeats);
  const double lstm_p =
      time_ms([&] { lstm_parallel = models::predict_lstm(lstm, examples); }, repeats);
  bool lstm_equal = true;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (lstm_serial[i].label != lstm_parallel[i].label ||
        lstm_serial[i].max_prob != lstm_parallel[i].max_prob)
      lstm_equal = false;
  report("predict_lstm", lstm_s, lstm_p, lstm_equal);

  // Curve sweep over the probability-threshold knob.
  eval::StrategyInputs inputs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    inputs.gold.push_back(examples[i].label);
    inputs.bow_pred.push_back(bow_serial[i].label);
    inputs.bow_max_prob.push_back(bow_serial[i].max_prob);
    inputs.lstm_pred.push_back(lstm_serial[i].label);
  }
  const cascade::CostModel costs;
  eval::CurveOptions opts;
  opts.grid_size = 401;

  eval::Curve curve_serial, curve_parallel;
  const double curve_s = time_ms(
      [&] {
        curve_serial = eval::speed_accuracy_curve_serial(
            cascade::Strategy::Kind::prob_threshold, inputs, costs, opts);
      },
      repeats);
  const double curve_p = time_ms(
      [&] {
        curve_parallel = eval::speed_accuracy_curve(
            cascade::Strategy::Kind::prob_threshold, inputs, costs, opts);
      },
      repeats);
  bool curve_equal = curve_serial.points.size() == curve_parallel.points.size();
  if (curve_equal)
    for (std::size_t i = 0; i < curve_serial.points.size(); ++i)
      if (curve_serial.points[i].savings != curve_parallel.points[i].savings ||
          curve_serial.points[i].accuracy != curve_parallel.points[i].accuracy)
        curve_equal = false;
  report("speed_accuracy_curve", curve_s, curve_p, curve_equal);

  return (bow_equal && lstm_equal && curve_equal) ? 0 : 1;
}
