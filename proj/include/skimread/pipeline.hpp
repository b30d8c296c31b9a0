#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skimread/cascade.hpp"
#include "skimread/data.hpp"
#include "skimread/eval.hpp"
#include "skimread/models.hpp"

namespace skimread::cascade {

struct PipelineDataConfig {
  /// Synthetic corpus when set; otherwise treebank files below.
  std::optional<data::SyntheticConfig> synthetic;
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string vectors_path;  // optional pretrained word vectors
  std::size_t min_freq = 1;
};

struct PipelineConfig {
  PipelineDataConfig data;
  /// Master seed; every stage seed (data generation, splits, inits, training
  /// shuffles, ratio routing) is derived from it in a fixed order.
  std::uint64_t seed = 1;
  std::size_t embed_dim = 16;
  models::BowConfig bow;
  models::LstmConfig lstm;
  models::DecisionConfig decision;
  models::TrainConfig bow_train;
  models::TrainConfig lstm_train;
  models::TrainConfig decision_train;
  CostModel costs;
  std::size_t grid_size = 201;
  /// The decision head is normally costed as free like the probability
  /// strategy; this charges a measured per-sample cost instead.
  bool charge_decision_cost = false;
  double decision_head_ms = 0.0;
  /// Route decision probabilities through the fine-tuned BoW trunk instead of
  /// the model-train trunk the net was trained with.
  bool decision_trunk_finetuned = false;
  std::string out_dir = "out";

  void validate() const;
};

struct StageRecord {
  std::string name;
  bool ok = false;
  double seconds = 0.0;
};

struct PipelineResult {
  eval::Report report;
  std::string report_json;
  std::vector<StageRecord> stages;
  double bow_valid_accuracy = 0.0;
  double lstm_valid_accuracy = 0.0;
  double bow_test_accuracy = 0.0;
  double lstm_test_accuracy = 0.0;
  /// Checksum of the decision net's inherited trunk before and after its
  /// training stage; equal by contract.
  std::uint64_t trunk_checksum_before = 0;
  std::uint64_t trunk_checksum_after = 0;
  /// Stage-2 label counts over the decision-train split.
  std::size_t decision_labels_bow = 0;
  std::size_t decision_labels_lstm = 0;
};

/// Stage names, in the order the pipeline runs them.
extern const char* const kStageTrainModelSplit;
extern const char* const kStageGenerateLabels;
extern const char* const kStageTrainDecision;
extern const char* const kStageFineTune;
extern const char* const kStageEvaluate;

/// Executes the full protocol: train BoW and LSTM on the model-train split,
/// generate routing labels on the decision-train split, train the decision
/// network there, fine-tune both classifiers on the full training set with
/// the decision net fixed, then evaluate all three strategies on valid and
/// test and write every artifact under out_dir. Deterministic given the
/// config.
PipelineResult run_pipeline(const PipelineConfig& config);

/// Same protocol on prebuilt splits (the file/synthetic loading is skipped).
PipelineResult run_pipeline_on_splits(const PipelineConfig& config,
                                      const data::DataSplits& splits,
                                      const data::Vocab& vocab,
                                      const data::EmbeddingTable& table);

/// Loads the checkpoints a previous pipeline run left in checkpoint_dir and
/// recomputes the evaluation stage (curves, AUCs, report) from the same
/// config. With identical config and data, the report is byte-identical.
PipelineResult evaluate_from_checkpoints(const PipelineConfig& config,
                                         const std::string& checkpoint_dir);

}  // namespace skimread::cascade
