#include "skimread/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "skimread/parallel.hpp"

namespace skimread::cascade {

const char* const kStageTrainModelSplit = "train_model_split";
const char* const kStageGenerateLabels = "generate_decision_labels";
const char* const kStageTrainDecision = "train_decision_net";
const char* const kStageFineTune = "fine_tune_full";
const char* const kStageEvaluate = "evaluate";

namespace {

namespace fs = std::filesystem;
using models::BoWClassifier;
using models::DecisionNet;
using models::LSTMClassifier;

struct DerivedSeeds {
  std::uint64_t synthetic = 0;
  std::uint64_t embed = 0;
  std::uint64_t split = 0;
  std::uint64_t bow_init = 0;
  std::uint64_t lstm_init = 0;
  std::uint64_t decision_init = 0;
  std::uint64_t bow_train = 0;
  std::uint64_t lstm_train = 0;
  std::uint64_t decision_train = 0;
  std::uint64_t bow_finetune = 0;
  std::uint64_t lstm_finetune = 0;
  std::uint64_t ratio = 0;
};

DerivedSeeds derive_seeds(std::uint64_t master) {
  Rng rng(master);
  DerivedSeeds s;
  s.synthetic = rng.fork_seed();
  s.embed = rng.fork_seed();
  s.split = rng.fork_seed();
  s.bow_init = rng.fork_seed();
  s.lstm_init = rng.fork_seed();
  s.decision_init = rng.fork_seed();
  s.bow_train = rng.fork_seed();
  s.lstm_train = rng.fork_seed();
  s.decision_train = rng.fork_seed();
  s.bow_finetune = rng.fork_seed();
  s.lstm_finetune = rng.fork_seed();
  s.ratio = rng.fork_seed();
  return s;
}

std::uint64_t tensor_checksum(std::uint64_t h, const Tensor& t) {
  for (double v : t.data) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

std::uint64_t trunk_checksum(const DecisionNet& net) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  h = tensor_checksum(h, net.trunk_embeddings.value);
  h = tensor_checksum(h, net.trunk_hidden.weight.value);
  h = tensor_checksum(h, net.trunk_hidden.bias.value);
  return h;
}

class StageRunner {
 public:
  StageRunner(const std::string& out_dir, std::vector<StageRecord>& records)
      : out_dir_(out_dir), records_(records) {
    fs::create_directories(out_dir_);
    log_.open((fs::path(out_dir_) / "run.log").string(), std::ios::trunc);
    if (!log_) throw IoError("cannot open run log in " + out_dir_);
    const fs::path marker = fs::path(out_dir_) / "INCOMPLETE";
    std::error_code ec;
    fs::remove(marker, ec);
  }

  template <typename F>
  void run(const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      finish(name, false, start);
      std::ofstream marker((fs::path(out_dir_) / "INCOMPLETE").string());
      marker << name << "\n";
      throw PipelineError(name, e.what());
    }
    finish(name, true, start);
  }

 private:
  void finish(const std::string& name, bool ok,
              std::chrono::steady_clock::time_point start) {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    records_.push_back({name, ok, seconds});
    char line[160];
    std::snprintf(line, sizeof(line), "stage=%s status=%s seconds=%.3f\n",
                  name.c_str(), ok ? "ok" : "fail", seconds);
    log_ << line;
    log_.flush();
  }

  std::string out_dir_;
  std::vector<StageRecord>& records_;
  std::ofstream log_;
};

std::vector<int> gold_labels(const std::vector<data::Example>& examples) {
  std::vector<int> gold(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) gold[i] = examples[i].label;
  return gold;
}

struct SplitPredictions {
  std::vector<models::BowPrediction> bow;
  std::vector<models::LstmPrediction> lstm;
  std::vector<int> gold;

  eval::StrategyInputs inputs(const std::vector<double>& decision_probs) const {
    eval::StrategyInputs in;
    in.gold = gold;
    in.bow_pred.reserve(bow.size());
    in.lstm_pred.reserve(lstm.size());
    in.bow_max_prob.reserve(bow.size());
    for (const auto& p : bow) {
      in.bow_pred.push_back(p.label);
      in.bow_max_prob.push_back(p.max_prob);
    }
    for (const auto& p : lstm) in.lstm_pred.push_back(p.label);
    in.decision_prob = decision_probs;
    return in;
  }

  double bow_accuracy() const {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < bow.size(); ++i)
      if (bow[i].label == gold[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(bow.size());
  }

  double lstm_accuracy() const {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < lstm.size(); ++i)
      if (lstm[i].label == gold[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(lstm.size());
  }
};

SplitPredictions predict_split(const BoWClassifier& bow, const LSTMClassifier& lstm,
                               const std::vector<data::Example>& examples) {
  SplitPredictions out;
  out.bow = models::predict_bow(bow, examples);
  out.lstm = models::predict_lstm(lstm, examples);
  out.gold = gold_labels(examples);
  return out;
}

std::vector<double> decision_probs_for(const DecisionNet& net,
                                       const BoWClassifier& finetuned_bow,
                                       bool use_finetuned_trunk,
                                       const std::vector<data::Example>& examples) {
  if (!use_finetuned_trunk) return models::predict_decision(net, examples);
  DecisionNet routed = net;
  routed.trunk_embeddings.value = finetuned_bow.embeddings.value;
  routed.trunk_hidden.weight.value = finetuned_bow.hidden.weight.value;
  routed.trunk_hidden.bias.value = finetuned_bow.hidden.bias.value;
  return models::predict_decision(routed, examples);
}

void add_split_entries(eval::Report& report, const std::string& split,
                       const SplitPredictions& preds,
                       const std::vector<double>& decision_probs,
                       const PipelineConfig& config, const DerivedSeeds& seeds) {
  eval::CurveOptions opts;
  opts.grid_size = config.grid_size;
  opts.decision_head_ms =
      config.charge_decision_cost ? config.decision_head_ms : 0.0;
  opts.ratio_seed = seeds.ratio;

  const eval::Curve naive = eval::naive_ratio_curve(
      preds.bow_accuracy(), preds.lstm_accuracy(), config.costs, config.grid_size);
  report.entries.push_back({"naive_ratio", split, eval::auc(naive), naive});

  const eval::StrategyInputs prob_in = preds.inputs({});
  const eval::Curve prob = eval::speed_accuracy_curve(
      Strategy::Kind::prob_threshold, prob_in, config.costs, opts);
  report.entries.push_back({"prob_threshold", split, eval::auc(prob), prob});

  const eval::StrategyInputs dec_in = preds.inputs(decision_probs);
  const eval::Curve dec = eval::speed_accuracy_curve(
      Strategy::Kind::decision_net, dec_in, config.costs, opts);
  report.entries.push_back({"decision_net", split, eval::auc(dec), dec});
}

/// Evaluation stage shared by run_pipeline and evaluate_from_checkpoints.
void evaluate_stage(const PipelineConfig& config, const DerivedSeeds& seeds,
                    const data::DataSplits& splits, const BoWClassifier& bow,
                    const LSTMClassifier& lstm, const DecisionNet& decision,
                    PipelineResult& result) {
  const SplitPredictions valid_preds = predict_split(bow, lstm, splits.valid);
  const SplitPredictions test_preds = predict_split(bow, lstm, splits.test);
  const std::vector<double> valid_decision = decision_probs_for(
      decision, bow, config.decision_trunk_finetuned, splits.valid);
  const std::vector<double> test_decision = decision_probs_for(
      decision, bow, config.decision_trunk_finetuned, splits.test);

  result.bow_valid_accuracy = valid_preds.bow_accuracy();
  result.lstm_valid_accuracy = valid_preds.lstm_accuracy();
  result.bow_test_accuracy = test_preds.bow_accuracy();
  result.lstm_test_accuracy = test_preds.lstm_accuracy();

  eval::Report report;
  report.costs = config.costs;
  report.seeds = {{"master", config.seed}};
  {
    std::vector<int> bow_pred, lstm_pred;
    for (const auto& p : valid_preds.bow) bow_pred.push_back(p.label);
    for (const auto& p : valid_preds.lstm) lstm_pred.push_back(p.label);
    report.confusion = confusion(bow_pred, lstm_pred, valid_preds.gold);
  }
  add_split_entries(report, "valid", valid_preds, valid_decision, config, seeds);
  add_split_entries(report, "test", test_preds, test_decision, config, seeds);

  std::vector<eval::ActivationRow> activations(splits.valid.size());
  for (std::size_t i = 0; i < splits.valid.size(); ++i) {
    activations[i].id = i;
    activations[i].label = splits.valid[i].label;
    activations[i].bow_correct = valid_preds.bow[i].label == splits.valid[i].label;
    activations[i].lstm_correct = valid_preds.lstm[i].label == splits.valid[i].label;
    activations[i].decision_prob = valid_decision[i];
    activations[i].hidden = &valid_preds.bow[i].last_hidden;
  }
  eval::export_report(report, activations, config.out_dir);

  result.report_json = eval::report_to_json(report);
  result.report = std::move(report);
}

}  // namespace

void PipelineConfig::validate() const {
  if (grid_size < 2) throw ConfigError("pipeline: grid_size must be >= 2");
  if (out_dir.empty()) throw ConfigError("pipeline: out_dir must be set");
  if (embed_dim == 0) throw ConfigError("pipeline: embed_dim must be >= 1");
  costs.validate();
  bow_train.validate();
  lstm_train.validate();
  decision_train.validate();
  if (!data.synthetic &&
      (data.train_path.empty() || data.dev_path.empty() || data.test_path.empty()))
    throw ConfigError("pipeline: need either a synthetic block or train/dev/test paths");
  if (charge_decision_cost && decision_head_ms < 0.0)
    throw ConfigError("pipeline: decision_head_ms must be >= 0");
}

PipelineResult run_pipeline_on_splits(const PipelineConfig& config,
                                      const data::DataSplits& splits,
                                      const data::Vocab& vocab,
                                      const data::EmbeddingTable& table) {
  config.validate();
  const DerivedSeeds seeds = derive_seeds(config.seed);
  const std::uint64_t vocab_hash = vocab.hash();
  PipelineResult result;
  StageRunner runner(config.out_dir, result.stages);
  const fs::path dir(config.out_dir);

  Rng bow_init(seeds.bow_init);
  Rng lstm_init(seeds.lstm_init);
  BoWClassifier bow(table, config.bow, bow_init);
  LSTMClassifier lstm(table, config.lstm, lstm_init);

  runner.run(kStageTrainModelSplit, [&] {
    models::TrainConfig bow_cfg = config.bow_train;
    bow_cfg.seed = seeds.bow_train;
    models::train_classifier(bow, splits.model_train, splits.valid, bow_cfg);
    models::TrainConfig lstm_cfg = config.lstm_train;
    lstm_cfg.seed = seeds.lstm_train;
    models::train_classifier(lstm, splits.model_train, splits.valid, lstm_cfg);
    models::save_checkpoint((dir / "bow_model_train.skrd").string(), bow, vocab_hash);
    models::save_checkpoint((dir / "lstm_model_train.skrd").string(), lstm, vocab_hash);
  });

  std::vector<int> decision_labels;
  runner.run(kStageGenerateLabels, [&] {
    if (splits.decision_train.empty())
      throw ConfigError("decision-train split is empty");
    const SplitPredictions preds = predict_split(bow, lstm, splits.decision_train);
    std::vector<int> bow_pred, lstm_pred;
    for (const auto& p : preds.bow) bow_pred.push_back(p.label);
    for (const auto& p : preds.lstm) lstm_pred.push_back(p.label);
    decision_labels = generate_decision_labels(bow_pred, lstm_pred, preds.gold);
    for (int label : decision_labels)
      (label == 1 ? result.decision_labels_lstm : result.decision_labels_bow) += 1;
  });

  Rng decision_init(seeds.decision_init);
  DecisionNet decision(bow, config.decision, decision_init);
  result.trunk_checksum_before = trunk_checksum(decision);

  runner.run(kStageTrainDecision, [&] {
    // Early stopping scores the AUC of the decision strategy against the
    // stage-1 models on the full validation set.
    const SplitPredictions valid_preds = predict_split(bow, lstm, splits.valid);
    std::vector<Tensor> valid_trunk(splits.valid.size());
    parallel_for(splits.valid.size(), [&](std::size_t i) {
      valid_trunk[i] = decision.trunk_forward(splits.valid[i].tokens);
    });
    eval::CurveOptions opts;
    opts.grid_size = config.grid_size;
    opts.decision_head_ms =
        config.charge_decision_cost ? config.decision_head_ms : 0.0;
    opts.ratio_seed = seeds.ratio;

    auto auc_metric = [&](const DecisionNet& net) {
      std::vector<double> probs(valid_trunk.size());
      parallel_for(valid_trunk.size(), [&](std::size_t i) {
        probs[i] = net.head_forward(valid_trunk[i], nn::Mode::eval);
      });
      const eval::StrategyInputs in = valid_preds.inputs(probs);
      return eval::auc(eval::speed_accuracy_curve(Strategy::Kind::decision_net,
                                                  in, config.costs, opts));
    };

    models::TrainConfig dec_cfg = config.decision_train;
    dec_cfg.seed = seeds.decision_train;
    dec_cfg.selection_metric = models::SelectionMetric::auc;
    models::train_decision_net(decision, splits.decision_train, decision_labels,
                               auc_metric, dec_cfg);
    result.trunk_checksum_after = trunk_checksum(decision);
    models::save_checkpoint((dir / "decision.skrd").string(), decision, vocab_hash);
  });

  runner.run(kStageFineTune, [&] {
    models::TrainConfig bow_cfg = config.bow_train;
    bow_cfg.seed = seeds.bow_finetune;
    models::train_classifier(bow, splits.full_train, splits.valid, bow_cfg);
    models::TrainConfig lstm_cfg = config.lstm_train;
    lstm_cfg.seed = seeds.lstm_finetune;
    models::train_classifier(lstm, splits.full_train, splits.valid, lstm_cfg);
    models::save_checkpoint((dir / "bow_final.skrd").string(), bow, vocab_hash);
    models::save_checkpoint((dir / "lstm_final.skrd").string(), lstm, vocab_hash);
  });

  runner.run(kStageEvaluate, [&] {
    evaluate_stage(config, seeds, splits, bow, lstm, decision, result);
  });

  return result;
}

namespace {

struct LoadedData {
  data::DataSplits splits;
  data::Vocab vocab;
  data::EmbeddingTable table;
};

LoadedData load_data(const PipelineConfig& config, const DerivedSeeds& seeds) {
  std::vector<data::SentTree> train, dev, test;
  if (config.data.synthetic) {
    data::SyntheticConfig synth = *config.data.synthetic;
    synth.seed = seeds.synthetic;
    data::SyntheticData generated = data::generate_synthetic(synth);
    train = std::move(generated.train);
    dev = std::move(generated.valid);
    test = std::move(generated.test);
  } else {
    train = data::load_treebank(config.data.train_path);
    dev = data::load_treebank(config.data.dev_path);
    test = data::load_treebank(config.data.test_path);
  }

  LoadedData out;
  out.vocab = data::build_vocab(data::leaf_corpus(train), config.data.min_freq);
  Rng embed_rng(seeds.embed);
  if (config.data.vectors_path.empty()) {
    out.table = data::random_embeddings(out.vocab, config.embed_dim, embed_rng);
  } else {
    out.table = data::load_word_vectors(config.data.vectors_path, out.vocab,
                                        config.embed_dim, embed_rng);
  }
  out.splits = data::make_splits(train, dev, test, seeds.split, out.vocab);
  return out;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  const DerivedSeeds seeds = derive_seeds(config.seed);
  const LoadedData loaded = load_data(config, seeds);
  return run_pipeline_on_splits(config, loaded.splits, loaded.vocab, loaded.table);
}

PipelineResult evaluate_from_checkpoints(const PipelineConfig& config,
                                         const std::string& checkpoint_dir) {
  config.validate();
  const DerivedSeeds seeds = derive_seeds(config.seed);
  const LoadedData loaded = load_data(config, seeds);
  const fs::path dir(checkpoint_dir);

  const BoWClassifier bow = models::load_bow((dir / "bow_final.skrd").string());
  const LSTMClassifier lstm = models::load_lstm((dir / "lstm_final.skrd").string());
  const DecisionNet decision = models::load_decision((dir / "decision.skrd").string());

  const std::uint64_t expected = loaded.vocab.hash();
  for (const char* name : {"bow_final.skrd", "lstm_final.skrd", "decision.skrd"}) {
    const models::CheckpointInfo info = models::checkpoint_info((dir / name).string());
    if (info.vocab_hash != expected)
      throw ConfigError(std::string("checkpoint ") + name +
                        " was trained with a different vocabulary");
  }

  PipelineResult result;
  StageRunner runner(config.out_dir, result.stages);
  runner.run(kStageEvaluate, [&] {
    evaluate_stage(config, seeds, loaded.splits, bow, lstm, decision, result);
  });
  return result;
}

}  // namespace skimread::cascade
