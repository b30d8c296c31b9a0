#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "skimread/rng.hpp"
#include "skimread/tensor.hpp"

namespace skimread::data {

/// One node of a sentiment treebank parse. Leaves hold a token; internal
/// nodes hold children. Labels are the five-way scale 0..4.
struct SentTree {
  int label = 0;
  std::string token;
  std::vector<SentTree> children;

  bool is_leaf() const { return children.empty(); }
};

/// Parses one `(label child ...)` s-expression. Throws ParseError with the
/// byte offset of the first offending character.
SentTree parse_ptb_line(std::string_view line);

/// Inverse of parse_ptb_line modulo whitespace.
std::string serialize_tree(const SentTree& tree);

/// One tree per non-empty line. Parse errors are rethrown with the line
/// number prepended.
std::vector<SentTree> load_treebank(const std::string& path);

void write_treebank(const std::string& path, const std::vector<SentTree>& trees);

struct Example {
  std::vector<std::size_t> tokens;
  int label = 0;  // 0 negative, 1 positive
  bool is_subtree = false;
};

class Vocab {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kPad = 1;

  Vocab();

  /// Index of a token, UNK when absent.
  std::size_t lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::size_t min_freq() const { return min_freq_; }

  /// FNV-1a over the token list; checkpoints store it to detect mismatched
  /// vocabularies at load time.
  std::uint64_t hash() const;

  friend Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus,
                           std::size_t min_freq);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t min_freq_ = 1;
};

/// Tokens with corpus frequency >= min_freq are indexed (frequency then
/// lexicographic order, so the result is deterministic); everything else
/// falls back to UNK.
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus,
                  std::size_t min_freq = 1);

/// Leaf token sequences of a tree collection, for vocabulary building.
std::vector<std::vector<std::string>> leaf_corpus(const std::vector<SentTree>& trees);

struct EmbeddingTable {
  std::size_t dim = 0;
  Tensor matrix;  // [vocab size x dim]
  bool trainable = true;
};

/// Reads `token v1 .. v_dim` lines. Vocab tokens missing from the file are
/// drawn from N(0, 0.1^2); UNK and PAD rows stay zero.
EmbeddingTable load_word_vectors(const std::string& path, const Vocab& vocab,
                                 std::size_t dim, Rng& rng);

/// Same N(0, 0.1^2) initialization for runs without a pretrained file.
EmbeddingTable random_embeddings(const Vocab& vocab, std::size_t dim, Rng& rng);

/// Maps the five-way root label to the binary task: {0,1}->0, {3,4}->1,
/// neutral 2 -> nullopt. Tokens go through the vocab with UNK fallback.
std::optional<Example> binarize(const SentTree& tree, const Vocab& vocab);

/// Binarized examples for every node of the tree (root first), neutral nodes
/// dropped, deduplicated by (token sequence, label). The root example has
/// is_subtree=false, all others true.
std::vector<Example> extract_subtrees(const SentTree& tree, const Vocab& vocab);

struct DataSplits {
  std::vector<Example> model_train;
  std::vector<Example> decision_train;
  std::vector<Example> full_train;
  std::vector<Example> valid;
  std::vector<Example> test;
  // Sentence-level bookkeeping for the 80/20 partition.
  std::size_t model_sentences = 0;
  std::size_t decision_sentences = 0;
};

/// Sentence-level shuffled 80/20 partition of the training trees. Each
/// sentence's subtrees follow it, and sentences with identical token
/// sequences land on the same side so no sequence leaks across the boundary.
/// full_train is model_train followed by decision_train. valid/test hold
/// binarized roots only.
DataSplits make_splits(const std::vector<SentTree>& train_trees,
                       const std::vector<SentTree>& valid_trees,
                       const std::vector<SentTree>& test_trees,
                       std::uint64_t seed, const Vocab& vocab);

struct SyntheticConfig {
  std::size_t n_sentences = 2000;
  std::size_t vocab_size = 32;
  std::size_t max_len = 10;
  double contrast_rate = 0.5;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  std::vector<SentTree> train;
  std::vector<SentTree> valid;
  std::vector<SentTree> test;
};

/// Desk-scale sentiment corpus. Plain sentences carry sentiment words of a
/// single polarity, so their label is decidable from the token multiset.
/// Contrastive sentences follow `A but B` with the gold label after "but",
/// emitted in mirrored pairs (`A but B` / `B but A`) whose multisets match
/// but whose labels differ, which defeats any order-free classifier.
SyntheticData generate_synthetic(const SyntheticConfig& config);

}  // namespace skimread::data
