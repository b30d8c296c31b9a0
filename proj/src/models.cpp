#include "skimread/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "skimread/parallel.hpp"

namespace skimread::models {

namespace {

Tensor pool_embeddings(const nn::Parameter& embeddings,
                       const std::vector<std::size_t>& tokens) {
  if (tokens.empty()) throw EmptyInputError("model forward: empty token sequence");
  const std::size_t dim = embeddings.value.cols();
  Tensor pooled({dim});
  for (std::size_t t : tokens) {
    const double* row = embeddings.value.row_ptr(t);
    for (std::size_t d = 0; d < dim; ++d) pooled[d] += row[d];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (double& x : pooled.data) x *= inv;
  return pooled;
}

Tensor embed_sequence(const nn::Parameter& embeddings,
                      const std::vector<std::size_t>& tokens) {
  if (tokens.empty()) throw EmptyInputError("model forward: empty token sequence");
  const std::size_t dim = embeddings.value.cols();
  Tensor x({tokens.size(), dim});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double* row = embeddings.value.row_ptr(tokens[t]);
    std::copy(row, row + dim, x.row_ptr(t));
  }
  return x;
}

int argmax2(const Tensor& probs) { return probs[1] > probs[0] ? 1 : 0; }

Rng& require_rng(Rng* rng, nn::Mode mode, double p) {
  static Rng unused(0);
  if (mode == nn::Mode::train && p > 0.0 && rng == nullptr)
    throw ParameterError("train-mode dropout needs an rng");
  return rng ? *rng : unused;
}

}  // namespace

// ---------------------------------------------------------------------------
// BoW

BoWClassifier::BoWClassifier(const data::EmbeddingTable& table,
                             const BowConfig& config, Rng& rng)
    : embeddings("bow.embeddings", table.matrix),
      hidden("bow.hidden", table.dim, config.hidden, nn::Activation::relu, rng),
      output("bow.output", config.hidden, 2, nn::Activation::identity, rng),
      dropout_p(config.dropout_p) {}

ModelOutput BoWClassifier::forward(const std::vector<std::size_t>& tokens,
                                   nn::Mode mode, Rng* rng) const {
  ModelOutput out;
  const Tensor pooled = pool_embeddings(embeddings, tokens);
  out.last_hidden = hidden.forward(pooled);
  Tensor dropped = nn::dropout(out.last_hidden, dropout_p, mode,
                               require_rng(rng, mode, dropout_p));
  out.logits = output.forward(dropped);
  out.probs = nn::softmax(out.logits);
  return out;
}

double BoWClassifier::supervised_loss(const data::Example& ex, nn::Mode mode,
                                      Rng* rng, bool with_grad,
                                      double grad_scale) {
  const Tensor pooled = pool_embeddings(embeddings, ex.tokens);
  nn::DenseCache hidden_cache;
  const Tensor last_hidden = hidden.forward(pooled, &hidden_cache);
  nn::DropoutCache drop_cache;
  const Tensor dropped = nn::dropout(last_hidden, dropout_p, mode,
                                     require_rng(rng, mode, dropout_p), &drop_cache);
  nn::DenseCache out_cache;
  const Tensor logits = output.forward(dropped, &out_cache);
  const auto [loss, probs] = nn::softmax_cross_entropy(logits, ex.label);
  if (!with_grad) return loss;

  Tensor dlogits = nn::softmax_cross_entropy_grad(probs, ex.label);
  for (double& g : dlogits.data) g *= grad_scale;
  const Tensor ddropped = output.backward(dlogits, out_cache);
  const Tensor dhidden = nn::dropout_backward(ddropped, drop_cache);
  const Tensor dpooled = hidden.backward(dhidden, hidden_cache);
  const double inv = 1.0 / static_cast<double>(ex.tokens.size());
  for (std::size_t t : ex.tokens) {
    double* grad_row = embeddings.grad.row_ptr(t);
    for (std::size_t d = 0; d < dpooled.size(); ++d) grad_row[d] += dpooled[d] * inv;
  }
  return loss;
}

std::vector<nn::Parameter*> BoWClassifier::trainable_params() {
  return {&embeddings, &hidden.weight, &hidden.bias, &output.weight, &output.bias};
}

std::vector<std::pair<std::string, const Tensor*>> BoWClassifier::named_tensors() const {
  return {{"embeddings", &embeddings.value},
          {"hidden.weight", &hidden.weight.value},
          {"hidden.bias", &hidden.bias.value},
          {"output.weight", &output.weight.value},
          {"output.bias", &output.bias.value}};
}

// ---------------------------------------------------------------------------
// LSTM

LSTMClassifier::LSTMClassifier(const data::EmbeddingTable& table,
                               const LstmConfig& config, Rng& rng)
    : embeddings("lstm.embeddings", table.matrix),
      projection("lstm.projection", table.dim, config.projection,
                 nn::Activation::identity, rng),
      bilstm("lstm.bilstm", config.projection, config.hidden, rng),
      mlp_hidden("lstm.mlp_hidden", 4 * config.hidden, config.mlp_hidden,
                 nn::Activation::relu, rng),
      output("lstm.output", config.mlp_hidden, 2, nn::Activation::identity, rng),
      dropout_p(config.dropout_p) {}

ModelOutput LSTMClassifier::forward(const std::vector<std::size_t>& tokens,
                                    nn::Mode mode, Rng* rng) const {
  const Tensor x = embed_sequence(embeddings, tokens);
  Tensor projected({tokens.size(), projection.out_dim()});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    Tensor row({x.cols()});
    std::copy(x.row_ptr(t), x.row_ptr(t) + x.cols(), row.data.begin());
    const Tensor p = projection.forward(row);
    std::copy(p.data.begin(), p.data.end(), projected.row_ptr(t));
  }
  const Tensor states = bilstm.forward(projected);
  const Tensor pooled = nn::mean_max_pool(states);
  const Tensor dropped = nn::dropout(pooled, dropout_p, mode,
                                     require_rng(rng, mode, dropout_p));
  const Tensor h = mlp_hidden.forward(dropped);
  ModelOutput out;
  out.logits = output.forward(h);
  out.probs = nn::softmax(out.logits);
  return out;
}

double LSTMClassifier::supervised_loss(const data::Example& ex, nn::Mode mode,
                                       Rng* rng, bool with_grad,
                                       double grad_scale) {
  const Tensor x = embed_sequence(embeddings, ex.tokens);
  const std::size_t steps = ex.tokens.size();
  std::vector<nn::DenseCache> proj_caches(steps);
  Tensor projected({steps, projection.out_dim()});
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor row({x.cols()});
    std::copy(x.row_ptr(t), x.row_ptr(t) + x.cols(), row.data.begin());
    const Tensor p = projection.forward(row, &proj_caches[t]);
    std::copy(p.data.begin(), p.data.end(), projected.row_ptr(t));
  }
  nn::BiLstmCache lstm_cache;
  const Tensor states = bilstm.forward(projected, &lstm_cache);
  nn::PoolCache pool_cache;
  const Tensor pooled = nn::mean_max_pool(states, &pool_cache);
  nn::DropoutCache drop_cache;
  const Tensor dropped = nn::dropout(pooled, dropout_p, mode,
                                     require_rng(rng, mode, dropout_p), &drop_cache);
  nn::DenseCache mlp_cache;
  const Tensor h = mlp_hidden.forward(dropped, &mlp_cache);
  nn::DenseCache out_cache;
  const Tensor logits = output.forward(h, &out_cache);
  const auto [loss, probs] = nn::softmax_cross_entropy(logits, ex.label);
  if (!with_grad) return loss;

  Tensor dlogits = nn::softmax_cross_entropy_grad(probs, ex.label);
  for (double& g : dlogits.data) g *= grad_scale;
  const Tensor dh = output.backward(dlogits, out_cache);
  const Tensor ddropped = mlp_hidden.backward(dh, mlp_cache);
  const Tensor dpooled = nn::dropout_backward(ddropped, drop_cache);
  const Tensor dstates = nn::mean_max_pool_backward(dpooled, pool_cache);
  const Tensor dprojected = bilstm.backward(dstates, lstm_cache);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor drow({dprojected.cols()});
    std::copy(dprojected.row_ptr(t), dprojected.row_ptr(t) + dprojected.cols(),
              drow.data.begin());
    projection.backward(drow, proj_caches[t]);  // embeddings stay frozen
  }
  return loss;
}

std::vector<nn::Parameter*> LSTMClassifier::trainable_params() {
  std::vector<nn::Parameter*> params = {&projection.weight, &projection.bias,
                                        &mlp_hidden.weight, &mlp_hidden.bias,
                                        &output.weight, &output.bias};
  for (nn::Parameter* p : bilstm.params()) params.push_back(p);
  return params;
}

std::vector<std::pair<std::string, const Tensor*>> LSTMClassifier::named_tensors() const {
  return {{"embeddings", &embeddings.value},
          {"projection.weight", &projection.weight.value},
          {"projection.bias", &projection.bias.value},
          {"bilstm.fwd.wx", &bilstm.fwd.wx.value},
          {"bilstm.fwd.wh", &bilstm.fwd.wh.value},
          {"bilstm.fwd.b", &bilstm.fwd.b.value},
          {"bilstm.bwd.wx", &bilstm.bwd.wx.value},
          {"bilstm.bwd.wh", &bilstm.bwd.wh.value},
          {"bilstm.bwd.b", &bilstm.bwd.b.value},
          {"mlp_hidden.weight", &mlp_hidden.weight.value},
          {"mlp_hidden.bias", &mlp_hidden.bias.value},
          {"output.weight", &output.weight.value},
          {"output.bias", &output.bias.value}};
}

// ---------------------------------------------------------------------------
// Decision network

DecisionNet::DecisionNet(const BoWClassifier& bow, const DecisionConfig& config,
                         Rng& rng)
    : trunk_embeddings("decision.trunk.embeddings", bow.embeddings.value),
      trunk_hidden(bow.hidden),
      head_hidden("decision.head_hidden", bow.hidden_dim(), config.head_hidden,
                  nn::Activation::relu, rng),
      head_output("decision.head_output", config.head_hidden, 2,
                  nn::Activation::identity, rng),
      dropout_p(config.dropout_p) {
  trunk_hidden.weight.name = "decision.trunk.hidden.weight";
  trunk_hidden.bias.name = "decision.trunk.hidden.bias";
}

Tensor DecisionNet::trunk_forward(const std::vector<std::size_t>& tokens) const {
  const Tensor pooled = pool_embeddings(trunk_embeddings, tokens);
  return trunk_hidden.forward(pooled);
}

double DecisionNet::head_forward(const Tensor& trunk_hidden_vec, nn::Mode mode,
                                 Rng* rng) const {
  const Tensor h = head_hidden.forward(trunk_hidden_vec);
  const Tensor dropped =
      nn::dropout(h, dropout_p, mode, require_rng(rng, mode, dropout_p));
  const Tensor probs = nn::softmax(head_output.forward(dropped));
  return probs[1];
}

double DecisionNet::forward(const std::vector<std::size_t>& tokens, nn::Mode mode,
                            Rng* rng) const {
  return head_forward(trunk_forward(tokens), mode, rng);
}

double DecisionNet::head_loss(const Tensor& trunk_hidden_vec, int label,
                              nn::Mode mode, Rng* rng, bool with_grad,
                              double grad_scale) {
  nn::DenseCache h_cache;
  const Tensor h = head_hidden.forward(trunk_hidden_vec, &h_cache);
  nn::DropoutCache drop_cache;
  const Tensor dropped = nn::dropout(h, dropout_p, mode,
                                     require_rng(rng, mode, dropout_p), &drop_cache);
  nn::DenseCache out_cache;
  const Tensor logits = head_output.forward(dropped, &out_cache);
  const auto [loss, probs] =
      nn::softmax_cross_entropy(logits, static_cast<std::size_t>(label));
  if (!with_grad) return loss;

  Tensor dlogits = nn::softmax_cross_entropy_grad(probs, static_cast<std::size_t>(label));
  for (double& g : dlogits.data) g *= grad_scale;
  const Tensor ddropped = head_output.backward(dlogits, out_cache);
  const Tensor dh = nn::dropout_backward(ddropped, drop_cache);
  head_hidden.backward(dh, h_cache);  // trunk receives no gradient
  return loss;
}

std::vector<nn::Parameter*> DecisionNet::trainable_params() {
  return {&head_hidden.weight, &head_hidden.bias, &head_output.weight,
          &head_output.bias};
}

std::vector<std::pair<std::string, const Tensor*>> DecisionNet::named_tensors() const {
  return {{"trunk.embeddings", &trunk_embeddings.value},
          {"trunk.hidden.weight", &trunk_hidden.weight.value},
          {"trunk.hidden.bias", &trunk_hidden.bias.value},
          {"head_hidden.weight", &head_hidden.weight.value},
          {"head_hidden.bias", &head_hidden.bias.value},
          {"head_output.weight", &head_output.weight.value},
          {"head_output.bias", &head_output.bias.value}};
}

// ---------------------------------------------------------------------------
// Training loop

void TrainConfig::validate() const {
  if (max_epochs == 0 || max_epochs > 50)
    throw ConfigError("TrainConfig: max_epochs must be in 1..50");
  if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (patience == 0) throw ConfigError("TrainConfig: patience must be >= 1");
  if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be positive");
}

TrainResult run_training(
    const std::vector<nn::Parameter*>& params,
    const std::function<double(const data::Example&, double scale, Rng& rng)>&
        loss_backward,
    const std::function<double()>& validation_metric,
    const std::vector<data::Example>& train, const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw ConfigError("run_training: empty training set");

  // Each call is a self-contained run: stale gradients and optimizer state
  // from earlier phases do not leak into this one.
  for (nn::Parameter* p : params) {
    p->zero_grad();
    p->m.fill(0.0);
    p->v.fill(0.0);
    p->step_count = 0;
  }

  Rng rng(config.seed);
  const nn::AdamConfig adam{config.lr};

  auto snapshot_values = [&params]() {
    std::vector<Tensor> values;
    values.reserve(params.size());
    for (const nn::Parameter* p : params) values.push_back(p->value);
    return values;
  };

  TrainResult result;
  result.best_metric = validation_metric();
  result.best_epoch = 0;
  std::vector<Tensor> best_values = snapshot_values();

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t epochs_without_improvement = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i)
        batch_loss += loss_backward(train[order[i]], scale, rng);
      if (!std::isfinite(batch_loss))
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      loss_sum += batch_loss;
      for (nn::Parameter* p : params) nn::adam_step(*p, adam);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    stats.val_metric = validation_metric();
    result.history.push_back(stats);

    if (stats.val_metric > result.best_metric) {
      result.best_metric = stats.val_metric;
      result.best_epoch = epoch;
      best_values = snapshot_values();
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= config.patience) break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  return result;
}

namespace {

template <typename Model>
double validation_accuracy(Model& model, const std::vector<data::Example>& valid) {
  if (valid.empty()) throw ConfigError("train_classifier: empty validation set");
  std::vector<std::uint8_t> correct(valid.size(), 0);
  parallel_for(valid.size(), [&](std::size_t i) {
    const ModelOutput out = model.forward(valid[i].tokens, nn::Mode::eval);
    correct[i] = argmax2(out.probs) == valid[i].label ? 1 : 0;
  });
  std::size_t hits = 0;
  for (std::uint8_t c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(valid.size());
}

}  // namespace

template <typename Model>
TrainResult train_classifier(Model& model, const std::vector<data::Example>& train,
                             const std::vector<data::Example>& valid,
                             const TrainConfig& config) {
  auto loss_backward = [&model](const data::Example& ex, double scale, Rng& rng) {
    return model.supervised_loss(ex, nn::Mode::train, &rng, true, scale);
  };
  auto metric = [&model, &valid]() { return validation_accuracy(model, valid); };
  return run_training(model.trainable_params(), loss_backward, metric, train,
                      config);
}

template TrainResult train_classifier<BoWClassifier>(
    BoWClassifier&, const std::vector<data::Example>&,
    const std::vector<data::Example>&, const TrainConfig&);
template TrainResult train_classifier<LSTMClassifier>(
    LSTMClassifier&, const std::vector<data::Example>&,
    const std::vector<data::Example>&, const TrainConfig&);

TrainResult train_decision_net(
    DecisionNet& net, const std::vector<data::Example>& decision_train,
    const std::vector<int>& decision_labels,
    const std::function<double(const DecisionNet&)>& auc_metric,
    const TrainConfig& config) {
  if (decision_train.size() != decision_labels.size())
    throw AlignmentError("train_decision_net: examples and labels differ in length");

  // The trunk is frozen, so each example's trunk activation is computed once.
  std::vector<Tensor> trunk_cache(decision_train.size());
  parallel_for(decision_train.size(), [&](std::size_t i) {
    trunk_cache[i] = net.trunk_forward(decision_train[i].tokens);
  });

  bool saw_bow = false, saw_lstm = false;
  for (int label : decision_labels) (label == 1 ? saw_lstm : saw_bow) = true;
  if (!saw_bow || !saw_lstm)
    std::fputs("warning: decision labels are all one class\n", stderr);

  // run_training shuffles indices into decision_train; reuse the example's
  // position to find its cached activation and label.
  std::vector<data::Example> indexed(decision_train.size());
  for (std::size_t i = 0; i < decision_train.size(); ++i) {
    indexed[i].tokens = {i};
    indexed[i].label = decision_labels[i];
  }
  auto loss_backward = [&](const data::Example& ex, double scale, Rng& rng) {
    const std::size_t i = ex.tokens[0];
    return net.head_loss(trunk_cache[i], ex.label, nn::Mode::train, &rng, true,
                         scale);
  };
  auto metric = [&net, &auc_metric]() { return auc_metric(net); };
  return run_training(net.trainable_params(), loss_backward, metric, indexed,
                      config);
}

// ---------------------------------------------------------------------------
// Batch inference

std::vector<BowPrediction> predict_bow_serial(const BoWClassifier& model,
                                              const std::vector<data::Example>& examples) {
  std::vector<BowPrediction> out(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const ModelOutput o = model.forward(examples[i].tokens, nn::Mode::eval);
    out[i].label = argmax2(o.probs);
    out[i].max_prob = std::max(o.probs[0], o.probs[1]);
    out[i].p_positive = o.probs[1];
    out[i].last_hidden = o.last_hidden;
  }
  return out;
}

std::vector<BowPrediction> predict_bow(const BoWClassifier& model,
                                       const std::vector<data::Example>& examples,
                                       int workers) {
  std::vector<BowPrediction> out(examples.size());
  parallel_for(
      examples.size(),
      [&](std::size_t i) {
        const ModelOutput o = model.forward(examples[i].tokens, nn::Mode::eval);
        out[i].label = argmax2(o.probs);
        out[i].max_prob = std::max(o.probs[0], o.probs[1]);
        out[i].p_positive = o.probs[1];
        out[i].last_hidden = o.last_hidden;
      },
      workers);
  return out;
}

std::vector<LstmPrediction> predict_lstm_serial(const LSTMClassifier& model,
                                                const std::vector<data::Example>& examples) {
  std::vector<LstmPrediction> out(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const ModelOutput o = model.forward(examples[i].tokens, nn::Mode::eval);
    out[i].label = argmax2(o.probs);
    out[i].max_prob = std::max(o.probs[0], o.probs[1]);
  }
  return out;
}

std::vector<LstmPrediction> predict_lstm(const LSTMClassifier& model,
                                         const std::vector<data::Example>& examples,
                                         int workers) {
  std::vector<LstmPrediction> out(examples.size());
  parallel_for(
      examples.size(),
      [&](std::size_t i) {
        const ModelOutput o = model.forward(examples[i].tokens, nn::Mode::eval);
        out[i].label = argmax2(o.probs);
        out[i].max_prob = std::max(o.probs[0], o.probs[1]);
      },
      workers);
  return out;
}

std::vector<double> predict_decision_serial(const DecisionNet& net,
                                            const std::vector<data::Example>& examples) {
  std::vector<double> out(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i)
    out[i] = net.forward(examples[i].tokens, nn::Mode::eval);
  return out;
}

std::vector<double> predict_decision(const DecisionNet& net,
                                     const std::vector<data::Example>& examples,
                                     int workers) {
  std::vector<double> out(examples.size());
  parallel_for(
      examples.size(),
      [&](std::size_t i) { out[i] = net.forward(examples[i].tokens, nn::Mode::eval); },
      workers);
  return out;
}

double accuracy(const std::vector<int>& predicted,
                const std::vector<data::Example>& examples) {
  if (predicted.size() != examples.size())
    throw AlignmentError("accuracy: predictions and examples differ in length");
  if (examples.empty()) throw EmptyInputError("accuracy: empty example set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (predicted[i] == examples[i].label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace skimread::models
