#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "skimread/data.hpp"
#include "skimread/nn.hpp"

namespace skimread::models {

struct BowConfig {
  std::size_t hidden = 64;  // H_b
  double dropout_p = 0.5;
};

struct LstmConfig {
  std::size_t projection = 64;  // d_p
  std::size_t hidden = 64;      // h per direction
  std::size_t mlp_hidden = 64;
  double dropout_p = 0.5;
};

struct DecisionConfig {
  std::size_t head_hidden = 32;  // H_d
  double dropout_p = 0.5;
};

struct ModelOutput {
  Tensor last_hidden;
  Tensor logits;
  Tensor probs;
};

/// Average-pooled embeddings -> dense+relu -> dropout -> dense -> softmax.
/// Embeddings are trainable.
struct BoWClassifier {
  nn::Parameter embeddings;  // [V x d]
  nn::Dense hidden;
  nn::Dense output;
  double dropout_p = 0.5;

  BoWClassifier() = default;
  BoWClassifier(const data::EmbeddingTable& table, const BowConfig& config,
                Rng& rng);

  std::size_t embed_dim() const { return embeddings.value.cols(); }
  std::size_t hidden_dim() const { return hidden.out_dim(); }

  /// `rng` is only consulted in train mode (dropout).
  ModelOutput forward(const std::vector<std::size_t>& tokens, nn::Mode mode,
                      Rng* rng = nullptr) const;

  /// Cross-entropy loss of one example; when with_grad, accumulates gradients
  /// scaled by grad_scale into all trainable parameters. `mode` controls
  /// dropout only.
  double supervised_loss(const data::Example& ex, nn::Mode mode, Rng* rng,
                         bool with_grad, double grad_scale);

  std::vector<nn::Parameter*> trainable_params();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

/// Frozen embeddings -> trainable linear projection -> bi-LSTM -> mean/max
/// pooling -> dropout -> two-layer MLP -> softmax.
struct LSTMClassifier {
  nn::Parameter embeddings;  // frozen
  nn::Dense projection;
  nn::BiLstm bilstm;
  nn::Dense mlp_hidden;
  nn::Dense output;
  double dropout_p = 0.5;

  LSTMClassifier() = default;
  LSTMClassifier(const data::EmbeddingTable& table, const LstmConfig& config,
                 Rng& rng);

  std::size_t embed_dim() const { return embeddings.value.cols(); }

  ModelOutput forward(const std::vector<std::size_t>& tokens, nn::Mode mode,
                      Rng* rng = nullptr) const;
  double supervised_loss(const data::Example& ex, nn::Mode mode, Rng* rng,
                         bool with_grad, double grad_scale);

  std::vector<nn::Parameter*> trainable_params();  // excludes embeddings
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

/// Inherits the BoW model up to its last hidden layer (frozen, dropout
/// disabled) and stacks a two-layer head that predicts which model to run.
/// Class 1 of the head is "use the LSTM".
struct DecisionNet {
  nn::Parameter trunk_embeddings;  // frozen copies of the source BoW
  nn::Dense trunk_hidden;          // frozen
  nn::Dense head_hidden;
  nn::Dense head_output;
  double dropout_p = 0.5;

  DecisionNet() = default;
  /// Copies the trunk from a trained BoW model.
  DecisionNet(const BoWClassifier& bow, const DecisionConfig& config, Rng& rng);

  /// Last hidden activation of the frozen trunk (no dropout).
  Tensor trunk_forward(const std::vector<std::size_t>& tokens) const;
  /// P(route to LSTM) from a trunk activation.
  double head_forward(const Tensor& trunk_hidden_vec, nn::Mode mode,
                      Rng* rng = nullptr) const;
  double forward(const std::vector<std::size_t>& tokens, nn::Mode mode,
                 Rng* rng = nullptr) const;

  /// Head-only cross-entropy on a cached trunk activation; the trunk never
  /// receives gradient.
  double head_loss(const Tensor& trunk_hidden_vec, int label, nn::Mode mode,
                   Rng* rng, bool with_grad, double grad_scale);

  std::vector<nn::Parameter*> trainable_params();  // head only
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

// ---------------------------------------------------------------------------
// Training

enum class SelectionMetric { accuracy, auc };

struct TrainConfig {
  double lr = 5e-4;
  std::size_t max_epochs = 50;
  std::size_t batch_size = 64;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  SelectionMetric selection_metric = SelectionMetric::accuracy;

  void validate() const;  // max_epochs capped at 50
};

struct EpochStats {
  double train_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double best_metric = 0.0;
  std::size_t best_epoch = 0;  // 0 = the state before any epoch ran
};

/// Mini-batch Adam with best-snapshot early stopping. loss_backward must
/// return the unscaled example loss while accumulating gradients scaled by
/// the given factor; validation_metric is evaluated after each epoch and the
/// parameter values of the best epoch are restored before returning.
TrainResult run_training(
    const std::vector<nn::Parameter*>& params,
    const std::function<double(const data::Example&, double scale, Rng& rng)>&
        loss_backward,
    const std::function<double()>& validation_metric,
    const std::vector<data::Example>& train, const TrainConfig& config);

/// Accuracy-selected training for the two classifiers.
template <typename Model>
TrainResult train_classifier(Model& model, const std::vector<data::Example>& train,
                             const std::vector<data::Example>& valid,
                             const TrainConfig& config);

/// AUC-selected head training. decision_labels[i] in {0 BoW, 1 LSTM} pairs
/// with decision_train[i]; auc_metric scores the current net on validation
/// predictions (wired up by the pipeline).
TrainResult train_decision_net(
    DecisionNet& net, const std::vector<data::Example>& decision_train,
    const std::vector<int>& decision_labels,
    const std::function<double(const DecisionNet&)>& auc_metric,
    const TrainConfig& config);

// ---------------------------------------------------------------------------
// Batch inference. The parallel versions split examples across workers; each
// example writes only its own slot, so they are bit-identical to the serial
// references (kept for tests and the benchmark).

struct BowPrediction {
  int label = 0;
  double max_prob = 0.0;
  double p_positive = 0.0;
  Tensor last_hidden;
};

struct LstmPrediction {
  int label = 0;
  double max_prob = 0.0;
};

std::vector<BowPrediction> predict_bow_serial(const BoWClassifier& model,
                                              const std::vector<data::Example>& examples);
std::vector<BowPrediction> predict_bow(const BoWClassifier& model,
                                       const std::vector<data::Example>& examples,
                                       int workers = -1);

std::vector<LstmPrediction> predict_lstm_serial(const LSTMClassifier& model,
                                                const std::vector<data::Example>& examples);
std::vector<LstmPrediction> predict_lstm(const LSTMClassifier& model,
                                         const std::vector<data::Example>& examples,
                                         int workers = -1);

std::vector<double> predict_decision_serial(const DecisionNet& net,
                                            const std::vector<data::Example>& examples);
std::vector<double> predict_decision(const DecisionNet& net,
                                     const std::vector<data::Example>& examples,
                                     int workers = -1);

/// Fraction of examples whose argmax prediction matches the gold label.
double accuracy(const std::vector<int>& predicted, const std::vector<data::Example>& examples);

// ---------------------------------------------------------------------------
// Checkpoints: magic "SKRD", little-endian, trailing CRC32.

enum class ModelKind : std::uint32_t { bow = 1, lstm = 2, decision = 3 };

void save_checkpoint(const std::string& path, const BoWClassifier& model,
                     std::uint64_t vocab_hash);
void save_checkpoint(const std::string& path, const LSTMClassifier& model,
                     std::uint64_t vocab_hash);
void save_checkpoint(const std::string& path, const DecisionNet& model,
                     std::uint64_t vocab_hash);

/// Peek at a checkpoint's kind/vocab hash without rebuilding the model.
struct CheckpointInfo {
  ModelKind kind;
  std::uint64_t vocab_hash;
};
CheckpointInfo checkpoint_info(const std::string& path);

BoWClassifier load_bow(const std::string& path);
LSTMClassifier load_lstm(const std::string& path);
DecisionNet load_decision(const std::string& path);

}  // namespace skimread::models
