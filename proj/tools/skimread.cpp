// Command-line front end: synthetic data generation, the training pipeline,
// re-evaluation from checkpoints, gradient checking, and host timing.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "skimread/data.hpp"
#include "skimread/eval.hpp"
#include "skimread/models.hpp"
#include "skimread/nn.hpp"
#include "skimread/pipeline.hpp"

namespace {

using json = nlohmann::json;
using namespace skimread;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError(context + ": unknown key '" + key + "'");
}

models::TrainConfig parse_train_config(const json& j, const std::string& context) {
  check_keys(j, {"lr", "max_epochs", "batch_size", "patience"}, context);
  models::TrainConfig cfg;
  if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
  if (j.contains("max_epochs")) cfg.max_epochs = j["max_epochs"].get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("patience")) cfg.patience = j["patience"].get<std::size_t>();
  return cfg;
}

cascade::PipelineConfig parse_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }

  check_keys(j,
             {"data", "seed", "embed_dim", "out_dir", "grid_size", "cost_model",
              "charge_decision_cost", "decision_head_ms",
              "decision_trunk_finetuned", "bow", "lstm", "decision", "bow_train",
              "lstm_train", "decision_train"},
             "config");

  cascade::PipelineConfig cfg;
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"synthetic", "train", "dev", "test", "vectors", "min_freq"},
               "config.data");
    if (d.contains("synthetic")) {
      const json& s = d["synthetic"];
      check_keys(s, {"n_sentences", "vocab_size", "max_len", "contrast_rate"},
                 "config.data.synthetic");
      data::SyntheticConfig synth;
      if (s.contains("n_sentences")) synth.n_sentences = s["n_sentences"].get<std::size_t>();
      if (s.contains("vocab_size")) synth.vocab_size = s["vocab_size"].get<std::size_t>();
      if (s.contains("max_len")) synth.max_len = s["max_len"].get<std::size_t>();
      if (s.contains("contrast_rate")) synth.contrast_rate = s["contrast_rate"].get<double>();
      cfg.data.synthetic = synth;
    }
    if (d.contains("train")) cfg.data.train_path = d["train"].get<std::string>();
    if (d.contains("dev")) cfg.data.dev_path = d["dev"].get<std::string>();
    if (d.contains("test")) cfg.data.test_path = d["test"].get<std::string>();
    if (d.contains("vectors")) cfg.data.vectors_path = d["vectors"].get<std::string>();
    if (d.contains("min_freq")) cfg.data.min_freq = d["min_freq"].get<std::size_t>();
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("embed_dim")) cfg.embed_dim = j["embed_dim"].get<std::size_t>();
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("grid_size")) cfg.grid_size = j["grid_size"].get<std::size_t>();
  if (j.contains("cost_model")) {
    check_keys(j["cost_model"], {"c_bow_ms", "c_lstm_ms"}, "config.cost_model");
    if (j["cost_model"].contains("c_bow_ms"))
      cfg.costs.c_bow_ms = j["cost_model"]["c_bow_ms"].get<double>();
    if (j["cost_model"].contains("c_lstm_ms"))
      cfg.costs.c_lstm_ms = j["cost_model"]["c_lstm_ms"].get<double>();
  }
  if (j.contains("charge_decision_cost"))
    cfg.charge_decision_cost = j["charge_decision_cost"].get<bool>();
  if (j.contains("decision_head_ms"))
    cfg.decision_head_ms = j["decision_head_ms"].get<double>();
  if (j.contains("decision_trunk_finetuned"))
    cfg.decision_trunk_finetuned = j["decision_trunk_finetuned"].get<bool>();
  if (j.contains("bow")) {
    check_keys(j["bow"], {"hidden", "dropout_p"}, "config.bow");
    if (j["bow"].contains("hidden")) cfg.bow.hidden = j["bow"]["hidden"].get<std::size_t>();
    if (j["bow"].contains("dropout_p")) cfg.bow.dropout_p = j["bow"]["dropout_p"].get<double>();
  }
  if (j.contains("lstm")) {
    const json& l = j["lstm"];
    check_keys(l, {"projection", "hidden", "mlp_hidden", "dropout_p"}, "config.lstm");
    if (l.contains("projection")) cfg.lstm.projection = l["projection"].get<std::size_t>();
    if (l.contains("hidden")) cfg.lstm.hidden = l["hidden"].get<std::size_t>();
    if (l.contains("mlp_hidden")) cfg.lstm.mlp_hidden = l["mlp_hidden"].get<std::size_t>();
    if (l.contains("dropout_p")) cfg.lstm.dropout_p = l["dropout_p"].get<double>();
  }
  if (j.contains("decision")) {
    const json& d = j["decision"];
    check_keys(d, {"head_hidden", "dropout_p"}, "config.decision");
    if (d.contains("head_hidden")) cfg.decision.head_hidden = d["head_hidden"].get<std::size_t>();
    if (d.contains("dropout_p")) cfg.decision.dropout_p = d["dropout_p"].get<double>();
  }
  if (j.contains("bow_train")) cfg.bow_train = parse_train_config(j["bow_train"], "config.bow_train");
  if (j.contains("lstm_train")) cfg.lstm_train = parse_train_config(j["lstm_train"], "config.lstm_train");
  if (j.contains("decision_train"))
    cfg.decision_train = parse_train_config(j["decision_train"], "config.decision_train");
  return cfg;
}

struct PipelineOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> grid_size;
  std::optional<double> c_bow_ms;
  std::optional<double> c_lstm_ms;

  void apply(cascade::PipelineConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    if (grid_size) cfg.grid_size = *grid_size;
    if (c_bow_ms) cfg.costs.c_bow_ms = *c_bow_ms;
    if (c_lstm_ms) cfg.costs.c_lstm_ms = *c_lstm_ms;
  }
};

void add_override_flags(CLI::App* cmd, PipelineOverrides& ov) {
  cmd->add_option("--seed", ov.seed, "Override the master seed");
  cmd->add_option("--out", ov.out_dir, "Override the output directory");
  cmd->add_option("--grid-size", ov.grid_size, "Override the curve grid size");
  cmd->add_option("--c-bow", ov.c_bow_ms, "Override BoW ms/sample");
  cmd->add_option("--c-lstm", ov.c_lstm_ms, "Override LSTM ms/sample");
}

int run_synth(const std::string& out_dir, const data::SyntheticConfig& cfg) {
  const data::SyntheticData generated = data::generate_synthetic(cfg);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  data::write_treebank((dir / "train.txt").string(), generated.train);
  data::write_treebank((dir / "dev.txt").string(), generated.valid);
  data::write_treebank((dir / "test.txt").string(), generated.test);
  std::printf("wrote %zu/%zu/%zu trees to %s\n", generated.train.size(),
              generated.valid.size(), generated.test.size(), out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradCheckCase {
  std::string name;
  double max_rel_err;
};

double check_bow_model(std::uint64_t seed) {
  Rng rng(seed);
  data::Vocab vocab = data::build_vocab({{"a", "b", "c", "d"}}, 1);
  data::EmbeddingTable table = data::random_embeddings(vocab, 5, rng);
  models::BoWClassifier model(table, {.hidden = 7, .dropout_p = 0.5}, rng);
  data::Example ex{{2, 3, 4, 2}, 1, false};
  auto loss = [&](bool with_grad) {
    return model.supervised_loss(ex, nn::Mode::eval, nullptr, with_grad, 1.0);
  };
  return nn::grad_check(loss, model.trainable_params(), {.seed = seed});
}

double check_lstm_model(std::uint64_t seed) {
  Rng rng(seed);
  data::Vocab vocab = data::build_vocab({{"a", "b", "c", "d"}}, 1);
  data::EmbeddingTable table = data::random_embeddings(vocab, 4, rng);
  models::LSTMClassifier model(
      table, {.projection = 5, .hidden = 6, .mlp_hidden = 7, .dropout_p = 0.5}, rng);
  data::Example ex{{2, 4, 3}, 0, false};
  auto loss = [&](bool with_grad) {
    return model.supervised_loss(ex, nn::Mode::eval, nullptr, with_grad, 1.0);
  };
  return nn::grad_check(loss, model.trainable_params(), {.seed = seed});
}

double check_decision_head(std::uint64_t seed) {
  Rng rng(seed);
  data::Vocab vocab = data::build_vocab({{"a", "b", "c", "d"}}, 1);
  data::EmbeddingTable table = data::random_embeddings(vocab, 5, rng);
  models::BoWClassifier bow(table, {.hidden = 7, .dropout_p = 0.5}, rng);
  models::DecisionNet net(bow, {.head_hidden = 5, .dropout_p = 0.5}, rng);
  const Tensor trunk = net.trunk_forward({2, 3, 4});
  auto loss = [&](bool with_grad) {
    return net.head_loss(trunk, 1, nn::Mode::eval, nullptr, with_grad, 1.0);
  };
  return nn::grad_check(loss, net.trainable_params(), {.seed = seed});
}

double check_dense_layer(std::uint64_t seed) {
  Rng rng(seed);
  nn::Dense layer("layer", 5, 3, nn::Activation::relu, rng);
  Tensor x({5});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  nn::DenseCache cache;
  auto loss = [&](bool with_grad) {
    const Tensor y = layer.forward(x, &cache);
    const auto [l, probs] = nn::softmax_cross_entropy(y, 0);
    if (with_grad) layer.backward(nn::softmax_cross_entropy_grad(probs, 0), cache);
    return l;
  };
  return nn::grad_check(loss, {&layer.weight, &layer.bias}, {.seed = seed});
}

double check_bilstm_layer(std::uint64_t seed) {
  Rng rng(seed);
  nn::BiLstm layer("layer", 4, 5, rng);
  Tensor x({3, 4});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  auto loss = [&](bool with_grad) {
    nn::BiLstmCache cache;
    const Tensor h = layer.forward(x, &cache);
    nn::PoolCache pool_cache;
    const Tensor pooled = nn::mean_max_pool(h, &pool_cache);
    const auto [l, probs] = nn::softmax_cross_entropy(pooled, 1);
    if (with_grad) {
      const Tensor dpool = nn::softmax_cross_entropy_grad(probs, 1);
      layer.backward(nn::mean_max_pool_backward(dpool, pool_cache), cache);
    }
    return l;
  };
  return nn::grad_check(loss, layer.params(), {.seed = seed});
}

int run_gradcheck(std::uint64_t base_seed, std::size_t n_seeds) {
  constexpr double kThreshold = 1e-4;
  std::vector<GradCheckCase> cases = {
      {"dense", 0.0}, {"bilstm", 0.0}, {"bow_model", 0.0},
      {"lstm_model", 0.0}, {"decision_head", 0.0}};
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = base_seed + s;
    cases[0].max_rel_err = std::max(cases[0].max_rel_err, check_dense_layer(seed));
    cases[1].max_rel_err = std::max(cases[1].max_rel_err, check_bilstm_layer(seed));
    cases[2].max_rel_err = std::max(cases[2].max_rel_err, check_bow_model(seed));
    cases[3].max_rel_err = std::max(cases[3].max_rel_err, check_lstm_model(seed));
    cases[4].max_rel_err = std::max(cases[4].max_rel_err, check_decision_head(seed));
  }
  double overall = 0.0;
  for (const GradCheckCase& c : cases) {
    std::printf("%-14s max_rel_err=%.3e\n", c.name.c_str(), c.max_rel_err);
    overall = std::max(overall, c.max_rel_err);
  }
  const bool ok = overall < kThreshold;
  std::printf("overall max_rel_err=%.3e threshold=%.0e -> %s\n", overall,
              kThreshold, ok ? "OK" : "FAIL");
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// timeit

int run_timeit(std::size_t batch, std::size_t samples, std::size_t embed_dim,
               std::size_t width, std::uint64_t seed, const std::string& out_path) {
  Rng rng(seed);
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 1000; ++i) corpus.push_back({"w" + std::to_string(i)});
  data::Vocab vocab = data::build_vocab(corpus, 1);
  data::EmbeddingTable table = data::random_embeddings(vocab, embed_dim, rng);
  models::BoWClassifier bow(table, {.hidden = width, .dropout_p = 0.5}, rng);
  models::LSTMClassifier lstm(
      table, {.projection = width, .hidden = width, .mlp_hidden = width,
              .dropout_p = 0.5},
      rng);

  std::vector<data::Example> examples(samples);
  for (data::Example& ex : examples) {
    const std::size_t len = 8 + rng.below(16);
    for (std::size_t t = 0; t < len; ++t)
      ex.tokens.push_back(2 + rng.below(vocab.size() - 2));
    ex.label = rng.bernoulli(0.5) ? 1 : 0;
  }

  auto time_model = [&](auto&& predict_batch) {
    // Warm-up batch, then timed batches of `batch` samples.
    std::vector<data::Example> first(examples.begin(),
                                     examples.begin() + std::min(batch, samples));
    predict_batch(first);
    const auto start = std::chrono::steady_clock::now();
    std::size_t done = 0;
    while (done < samples) {
      const std::size_t end = std::min(samples, done + batch);
      std::vector<data::Example> chunk(examples.begin() + done, examples.begin() + end);
      predict_batch(chunk);
      done = end;
    }
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    return ms / static_cast<double>(samples);
  };

  const double bow_ms =
      time_model([&](const std::vector<data::Example>& chunk) {
        return models::predict_bow(bow, chunk);
      });
  const double lstm_ms =
      time_model([&](const std::vector<data::Example>& chunk) {
        return models::predict_lstm(lstm, chunk);
      });

  json out{{"c_bow_ms", bow_ms}, {"c_lstm_ms", lstm_ms}};
  const std::string text = out.dump(2) + "\n";
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream f(out_path);
    if (!f) throw IoError("cannot write " + out_path);
    f << text;
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "skimread: a BoW/LSTM model cascade with probability-threshold and "
      "decision-network routing.\nFlags override config-file values "
      "(last-wins). SKIMREAD_THREADS caps the worker count."};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic treebank corpus");
  std::string synth_out = "data";
  data::SyntheticConfig synth_cfg;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n", synth_cfg.n_sentences, "Training sentences");
  synth->add_option("--vocab-size", synth_cfg.vocab_size, "Lexicon size (>= 8)");
  synth->add_option("--max-len", synth_cfg.max_len, "Max sentence length");
  synth->add_option("--contrast-rate", synth_cfg.contrast_rate,
                    "Fraction of contrastive sentences");
  synth->add_option("--seed", synth_cfg.seed, "Generator seed");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run the full training pipeline");
  std::string pipeline_config_path;
  PipelineOverrides pipeline_ov;
  pipeline->add_option("--config", pipeline_config_path, "Pipeline config JSON")
      ->required();
  add_override_flags(pipeline, pipeline_ov);

  // eval
  auto* eval_cmd = app.add_subcommand(
      "eval", "Recompute curves/AUC from existing checkpoints");
  std::string eval_config_path, eval_checkpoints;
  PipelineOverrides eval_ov;
  eval_cmd->add_option("--config", eval_config_path, "Pipeline config JSON")
      ->required();
  eval_cmd->add_option("--checkpoints", eval_checkpoints,
                       "Directory with bow_final/lstm_final/decision checkpoints")
      ->required();
  add_override_flags(eval_cmd, eval_ov);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t gc_seed = 7;
  std::size_t gc_seeds = 20;
  gradcheck->add_option("--seed", gc_seed, "Base seed");
  gradcheck->add_option("--seeds", gc_seeds, "Number of seeds per case");

  // timeit
  auto* timeit = app.add_subcommand("timeit", "Measure host ms/sample and emit a cost model");
  std::size_t ti_batch = 64, ti_samples = 2048, ti_embed = 300, ti_width = 64;
  std::uint64_t ti_seed = 1;
  std::string ti_out;
  timeit->add_option("--batch", ti_batch, "Batch size");
  timeit->add_option("--samples", ti_samples, "Samples to time");
  timeit->add_option("--embed-dim", ti_embed, "Embedding dimension");
  timeit->add_option("--width", ti_width, "Hidden width for both models");
  timeit->add_option("--seed", ti_seed, "Seed");
  timeit->add_option("--out", ti_out, "Write the cost model JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return run_synth(synth_out, synth_cfg);
    if (*pipeline) {
      cascade::PipelineConfig cfg = parse_pipeline_config(pipeline_config_path);
      pipeline_ov.apply(cfg);
      const cascade::PipelineResult result = cascade::run_pipeline(cfg);
      std::printf("pipeline done: report at %s/report.json\n", cfg.out_dir.c_str());
      for (const auto& [strategy, split, auc_value, curve] : result.report.entries)
        std::printf("  %-15s %-5s auc=%.2f\n", strategy.c_str(), split.c_str(),
                    auc_value);
      return 0;
    }
    if (*eval_cmd) {
      cascade::PipelineConfig cfg = parse_pipeline_config(eval_config_path);
      eval_ov.apply(cfg);
      const cascade::PipelineResult result =
          cascade::evaluate_from_checkpoints(cfg, eval_checkpoints);
      std::printf("eval done: report at %s/report.json\n", cfg.out_dir.c_str());
      for (const auto& [strategy, split, auc_value, curve] : result.report.entries)
        std::printf("  %-15s %-5s auc=%.2f\n", strategy.c_str(), split.c_str(),
                    auc_value);
      return 0;
    }
    if (*gradcheck) return run_gradcheck(gc_seed, gc_seeds);
    if (*timeit) return run_timeit(ti_batch, ti_samples, ti_embed, ti_width,
                                   ti_seed, ti_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const PipelineError& e) {
    std::fprintf(stderr, "pipeline failed at stage '%s': %s\n", e.stage.c_str(),
                 e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
