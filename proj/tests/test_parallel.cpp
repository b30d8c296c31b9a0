#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "skimread/eval.hpp"
#include "skimread/models.hpp"
#include "skimread/parallel.hpp"

using namespace skimread;

namespace {

struct Workload {
  data::Vocab vocab;
  data::EmbeddingTable table;
  models::BoWClassifier bow;
  models::LSTMClassifier lstm;
  models::DecisionNet decision;
  std::vector<data::Example> examples;

  Workload() {
    std::vector<std::vector<std::string>> corpus;
    for (int i = 0; i < 30; ++i) corpus.push_back({"w" + std::to_string(i)});
    vocab = data::build_vocab(corpus, 1);
    Rng rng(404);
    table = data::random_embeddings(vocab, 8, rng);
    bow = models::BoWClassifier(table, {.hidden = 8, .dropout_p = 0.5}, rng);
    lstm = models::LSTMClassifier(
        table, {.projection = 6, .hidden = 5, .mlp_hidden = 6, .dropout_p = 0.5},
        rng);
    decision = models::DecisionNet(bow, {.head_hidden = 4, .dropout_p = 0.5}, rng);
    examples.resize(150);
    for (data::Example& ex : examples) {
      for (std::size_t t = 0; t < 1 + rng.below(8); ++t)
        ex.tokens.push_back(2 + rng.below(vocab.size() - 2));
      ex.label = rng.bernoulli(0.5) ? 1 : 0;
    }
  }
};

}  // namespace

TEST_CASE("parallel_for covers every index exactly once") {
  for (int workers : {1, 2, 4, 7}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, workers);
    for (int h : hits) CHECK(h == 1);
  }
  // Zero iterations is a no-op.
  parallel_for(0, [&](std::size_t) { CHECK(false); });
}

TEST_CASE("SKIMREAD_THREADS caps the worker count") {
  setenv("SKIMREAD_THREADS", "1", 1);
  CHECK(max_workers() == 1);
  setenv("SKIMREAD_THREADS", "not-a-number", 1);
  CHECK(max_workers() >= 1);
  unsetenv("SKIMREAD_THREADS");
  CHECK(max_workers() >= 1);
}

TEST_CASE("parallel batch prediction is bit-identical to the serial reference") {
  const Workload w;
  const auto bow_serial = models::predict_bow_serial(w.bow, w.examples);
  const auto lstm_serial = models::predict_lstm_serial(w.lstm, w.examples);
  const auto dec_serial = models::predict_decision_serial(w.decision, w.examples);
  for (int workers : {1, 2, 4}) {
    const auto bow_par = models::predict_bow(w.bow, w.examples, workers);
    const auto lstm_par = models::predict_lstm(w.lstm, w.examples, workers);
    const auto dec_par = models::predict_decision(w.decision, w.examples, workers);
    REQUIRE(bow_par.size() == bow_serial.size());
    for (std::size_t i = 0; i < w.examples.size(); ++i) {
      CHECK(bow_par[i].label == bow_serial[i].label);
      CHECK(bow_par[i].max_prob == bow_serial[i].max_prob);
      CHECK(bow_par[i].last_hidden.data == bow_serial[i].last_hidden.data);
      CHECK(lstm_par[i].label == lstm_serial[i].label);
      CHECK(lstm_par[i].max_prob == lstm_serial[i].max_prob);
      CHECK(dec_par[i] == dec_serial[i]);
    }
  }
}

TEST_CASE("parallel curve sweep is bit-identical to the serial reference") {
  const Workload w;
  const auto bow_preds = models::predict_bow_serial(w.bow, w.examples);
  const auto lstm_preds = models::predict_lstm_serial(w.lstm, w.examples);
  const auto dec_probs = models::predict_decision_serial(w.decision, w.examples);

  eval::StrategyInputs in;
  for (std::size_t i = 0; i < w.examples.size(); ++i) {
    in.gold.push_back(w.examples[i].label);
    in.bow_pred.push_back(bow_preds[i].label);
    in.bow_max_prob.push_back(bow_preds[i].max_prob);
    in.lstm_pred.push_back(lstm_preds[i].label);
    in.decision_prob.push_back(dec_probs[i]);
  }

  const cascade::CostModel costs;
  for (const auto family :
       {cascade::Strategy::Kind::prob_threshold,
        cascade::Strategy::Kind::decision_net, cascade::Strategy::Kind::naive_ratio}) {
    eval::CurveOptions opts;
    opts.grid_size = 64;
    const eval::Curve serial =
        eval::speed_accuracy_curve_serial(family, in, costs, opts);
    for (int workers : {1, 2, 4}) {
      opts.workers = workers;
      const eval::Curve parallel = eval::speed_accuracy_curve(family, in, costs, opts);
      REQUIRE(parallel.points.size() == serial.points.size());
      for (std::size_t i = 0; i < serial.points.size(); ++i) {
        CHECK(parallel.points[i].knob == serial.points[i].knob);
        CHECK(parallel.points[i].savings == serial.points[i].savings);
        CHECK(parallel.points[i].accuracy == serial.points[i].accuracy);
      }
    }
  }
}
