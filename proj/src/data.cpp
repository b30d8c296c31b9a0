#include "skimread/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace skimread::data {

namespace {

struct PtbParser {
  std::string_view text;
  std::size_t pos = 0;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  void skip_ws() {
    while (!done() && std::isspace(static_cast<unsigned char>(peek()))) ++pos;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(message, pos);
  }

  SentTree parse_node() {
    skip_ws();
    if (done() || peek() != '(') fail("expected '('");
    ++pos;
    skip_ws();

    SentTree node;
    node.label = parse_label();
    skip_ws();
    if (done()) fail("unexpected end of input after label");

    if (peek() == '(') {
      while (!done() && peek() == '(') {
        node.children.push_back(parse_node());
        skip_ws();
      }
    } else if (peek() != ')') {
      node.token = parse_token();
      skip_ws();
    }

    if (done() || peek() != ')') fail("expected ')'");
    if (node.children.empty() && node.token.empty()) fail("empty node");
    ++pos;
    return node;
  }

  int parse_label() {
    const std::size_t start = pos;
    bool negative = false;
    if (!done() && peek() == '-') {
      negative = true;
      ++pos;
    }
    long value = 0;
    bool any = false;
    while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
      value = value * 10 + (peek() - '0');
      ++pos;
      any = true;
    }
    if (!any || (!done() && !std::isspace(static_cast<unsigned char>(peek())) &&
                 peek() != '(' && peek() != ')')) {
      pos = start;
      fail("expected integer label");
    }
    if (negative || value > 4) fail("label must be in 0..4");
    return static_cast<int>(value);
  }

  std::string parse_token() {
    const std::size_t start = pos;
    while (!done() && !std::isspace(static_cast<unsigned char>(peek())) &&
           peek() != '(' && peek() != ')')
      ++pos;
    if (pos == start) fail("expected token");
    return std::string(text.substr(start, pos - start));
  }
};

void collect_leaves(const SentTree& tree, std::vector<std::string>& out) {
  if (tree.is_leaf()) {
    out.push_back(tree.token);
    return;
  }
  for (const SentTree& child : tree.children) collect_leaves(child, out);
}

std::string joined_leaves(const SentTree& tree) {
  std::vector<std::string> leaves;
  collect_leaves(tree, leaves);
  std::string key;
  for (const std::string& t : leaves) {
    key += t;
    key += '\x1f';
  }
  return key;
}

}  // namespace

SentTree parse_ptb_line(std::string_view line) {
  PtbParser parser{line};
  SentTree tree = parser.parse_node();
  parser.skip_ws();
  if (!parser.done()) parser.fail("trailing characters after tree");
  return tree;
}

std::string serialize_tree(const SentTree& tree) {
  std::string out = "(" + std::to_string(tree.label);
  if (tree.is_leaf()) {
    out += " " + tree.token;
  } else {
    for (const SentTree& child : tree.children) out += " " + serialize_tree(child);
  }
  out += ")";
  return out;
}

std::vector<SentTree> load_treebank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open treebank file: " + path);
  std::vector<SentTree> trees;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;
    try {
      trees.push_back(parse_ptb_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what(),
                       e.byte_offset);
    }
  }
  return trees;
}

void write_treebank(const std::string& path, const std::vector<SentTree>& trees) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write treebank file: " + path);
  for (const SentTree& tree : trees) out << serialize_tree(tree) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocab::Vocab() {
  tokens_ = {"<unk>", "<pad>"};
  index_ = {{"<unk>", kUnk}, {"<pad>", kPad}};
}

std::size_t Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001B3ULL;
  };
  for (const std::string& token : tokens_) {
    for (char c : token) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus,
                  std::size_t min_freq) {
  if (min_freq < 1) throw ParameterError("build_vocab: min_freq must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& sentence : corpus)
    for (const std::string& token : sentence) ++freq[token];

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, count] : freq)
    if (count >= min_freq) kept.emplace_back(token, count);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab vocab;
  vocab.min_freq_ = min_freq;
  for (const auto& [token, count] : kept) {
    vocab.index_.emplace(token, vocab.tokens_.size());
    vocab.tokens_.push_back(token);
  }
  return vocab;
}

std::vector<std::vector<std::string>> leaf_corpus(const std::vector<SentTree>& trees) {
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(trees.size());
  for (const SentTree& tree : trees) {
    std::vector<std::string> leaves;
    collect_leaves(tree, leaves);
    corpus.push_back(std::move(leaves));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Word vectors

EmbeddingTable load_word_vectors(const std::string& path, const Vocab& vocab,
                                 std::size_t dim, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word-vector file: " + path);

  EmbeddingTable table;
  table.dim = dim;
  table.matrix = Tensor({vocab.size(), dim});
  std::vector<bool> filled(vocab.size(), false);

  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    if (token.empty()) continue;
    values.clear();
    double v;
    while (fields >> v) values.push_back(v);
    if (values.size() != dim)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, got " +
                        std::to_string(values.size()));
    if (!vocab.contains(token)) continue;
    const std::size_t row = vocab.lookup(token);
    for (std::size_t d = 0; d < dim; ++d) table.matrix.at(row, d) = values[d];
    filled[row] = true;
  }

  for (std::size_t row = 2; row < vocab.size(); ++row) {
    if (filled[row]) continue;
    for (std::size_t d = 0; d < dim; ++d)
      table.matrix.at(row, d) = rng.normal(0.0, 0.1);
  }
  // UNK and PAD rows stay zero.
  return table;
}

EmbeddingTable random_embeddings(const Vocab& vocab, std::size_t dim, Rng& rng) {
  EmbeddingTable table;
  table.dim = dim;
  table.matrix = Tensor({vocab.size(), dim});
  for (std::size_t row = 2; row < vocab.size(); ++row)
    for (std::size_t d = 0; d < dim; ++d)
      table.matrix.at(row, d) = rng.normal(0.0, 0.1);
  return table;
}

// ---------------------------------------------------------------------------
// Binary task construction

std::optional<Example> binarize(const SentTree& tree, const Vocab& vocab) {
  if (tree.label == 2) return std::nullopt;
  Example ex;
  ex.label = tree.label >= 3 ? 1 : 0;
  std::vector<std::string> leaves;
  collect_leaves(tree, leaves);
  ex.tokens.reserve(leaves.size());
  for (const std::string& token : leaves) ex.tokens.push_back(vocab.lookup(token));
  return ex;
}

std::vector<Example> extract_subtrees(const SentTree& tree, const Vocab& vocab) {
  std::vector<Example> out;
  std::set<std::pair<std::vector<std::size_t>, int>> seen;

  // Root-first walk so the root wins deduplication ties.
  std::vector<const SentTree*> nodes;
  nodes.push_back(&tree);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const SentTree& child : nodes[i]->children) nodes.push_back(&child);
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::optional<Example> ex = binarize(*nodes[i], vocab);
    if (!ex) continue;
    ex->is_subtree = (i != 0);
    auto key = std::make_pair(ex->tokens, ex->label);
    if (!seen.insert(std::move(key)).second) continue;
    out.push_back(std::move(*ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

DataSplits make_splits(const std::vector<SentTree>& train_trees,
                       const std::vector<SentTree>& valid_trees,
                       const std::vector<SentTree>& test_trees,
                       std::uint64_t seed, const Vocab& vocab) {
  if (train_trees.size() < 5)
    throw ConfigError("make_splits: need at least 5 training sentences, got " +
                      std::to_string(train_trees.size()));

  // Group identical root token sequences so both copies of a duplicated
  // sentence land on the same side of the partition.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train_trees.size(); ++i)
    groups[joined_leaves(train_trees[i])].push_back(i);

  std::vector<std::vector<std::size_t>> group_list;
  group_list.reserve(groups.size());
  for (auto& [key, members] : groups) group_list.push_back(std::move(members));

  Rng rng(seed);
  rng.shuffle(group_list);

  const std::size_t n = train_trees.size();
  const std::size_t target_model =
      static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));

  std::vector<std::size_t> model_idx, decision_idx;
  std::size_t model_count = 0;
  for (const auto& group : group_list) {
    if (model_count < target_model) {
      for (std::size_t i : group) model_idx.push_back(i);
      model_count += group.size();
    } else {
      for (std::size_t i : group) decision_idx.push_back(i);
    }
  }
  std::sort(model_idx.begin(), model_idx.end());
  std::sort(decision_idx.begin(), decision_idx.end());

  DataSplits splits;
  splits.model_sentences = model_idx.size();
  splits.decision_sentences = decision_idx.size();

  auto append_tree_examples = [&](std::vector<Example>& dst, std::size_t tree_i) {
    std::vector<Example> exs = extract_subtrees(train_trees[tree_i], vocab);
    for (Example& ex : exs) dst.push_back(std::move(ex));
  };
  for (std::size_t i : model_idx) append_tree_examples(splits.model_train, i);
  for (std::size_t i : decision_idx) append_tree_examples(splits.decision_train, i);

  splits.full_train = splits.model_train;
  splits.full_train.insert(splits.full_train.end(), splits.decision_train.begin(),
                           splits.decision_train.end());

  for (const SentTree& tree : valid_trees)
    if (auto ex = binarize(tree, vocab)) splits.valid.push_back(std::move(*ex));
  for (const SentTree& tree : test_trees)
    if (auto ex = binarize(tree, vocab)) splits.test.push_back(std::move(*ex));

  return splits;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

struct Lexicon {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::string> filler;
  std::string pivot = "but";

  // Leaf label: the word's own polarity on the 0..4 scale.
  int leaf_label(const std::string& word) const {
    for (const std::string& w : positive)
      if (w == word) return 3;
    for (const std::string& w : negative)
      if (w == word) return 1;
    return 2;
  }
};

Lexicon make_lexicon(std::size_t vocab_size) {
  Lexicon lex;
  const std::size_t content = vocab_size - 1;  // minus pivot
  std::size_t n_polar = std::max<std::size_t>(2, content * 2 / 5);
  if (2 * n_polar + 1 > content) n_polar = (content - 1) / 2;
  const std::size_t n_filler = content - 2 * n_polar;
  for (std::size_t i = 0; i < n_polar; ++i)
    lex.positive.push_back("good" + std::to_string(i));
  for (std::size_t i = 0; i < n_polar; ++i)
    lex.negative.push_back("bad" + std::to_string(i));
  for (std::size_t i = 0; i < n_filler; ++i)
    lex.filler.push_back("the" + std::to_string(i));
  return lex;
}

int root_label(int sentiment) { return sentiment == 1 ? 3 : 1; }

/// Right-branching spine over the tokens; the spine root carries `top_label`,
/// inner spine nodes are neutral, leaves carry their word's own polarity.
SentTree spine(const std::vector<std::string>& tokens, const Lexicon& lex,
               int top_label, std::size_t from = 0) {
  if (from + 1 == tokens.size()) {
    SentTree leaf;
    leaf.token = tokens[from];
    leaf.label = from == 0 ? top_label : lex.leaf_label(tokens[from]);
    return leaf;
  }
  SentTree node;
  node.label = from == 0 ? top_label : 2;
  SentTree leaf;
  leaf.token = tokens[from];
  leaf.label = lex.leaf_label(tokens[from]);
  node.children.push_back(std::move(leaf));
  node.children.push_back(spine(tokens, lex, top_label, from + 1));
  return node;
}

std::vector<std::string> sample_clause(const Lexicon& lex, int sentiment, Rng& rng) {
  const std::vector<std::string>& pool =
      sentiment == 1 ? lex.positive : lex.negative;
  std::vector<std::string> tokens;
  const std::size_t n_polar = 1 + rng.below(2);  // 1 or 2 sentiment words
  for (std::size_t i = 0; i < n_polar; ++i)
    tokens.push_back(pool[rng.below(pool.size())]);
  if (!lex.filler.empty() && rng.bernoulli(0.5))
    tokens.push_back(lex.filler[rng.below(lex.filler.size())]);
  rng.shuffle(tokens);
  return tokens;
}

SentTree plain_sentence(const Lexicon& lex, std::size_t max_len, Rng& rng) {
  const int sentiment = rng.bernoulli(0.5) ? 1 : 0;
  const std::vector<std::string>& pool =
      sentiment == 1 ? lex.positive : lex.negative;
  const std::size_t length = 3 + rng.below(max_len - 2);
  const std::size_t n_polar = 1 + rng.below(std::min<std::size_t>(3, length));
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n_polar && tokens.size() < length; ++i)
    tokens.push_back(pool[rng.below(pool.size())]);
  while (tokens.size() < length)
    tokens.push_back(lex.filler[rng.below(lex.filler.size())]);
  rng.shuffle(tokens);
  return spine(tokens, lex, root_label(sentiment));
}

/// `A but B` with gold label following B. The clause subtrees carry their own
/// clause-level sentiment so subtree extraction yields useful phrases.
SentTree contrastive_sentence(const std::vector<std::string>& clause_a,
                              int sentiment_a,
                              const std::vector<std::string>& clause_b,
                              int sentiment_b, const Lexicon& lex) {
  SentTree but_leaf;
  but_leaf.token = lex.pivot;
  but_leaf.label = 2;

  SentTree tail;  // "but B", sentiment follows B
  tail.label = root_label(sentiment_b);
  tail.children.push_back(std::move(but_leaf));
  tail.children.push_back(spine(clause_b, lex, root_label(sentiment_b)));

  SentTree root;
  root.label = root_label(sentiment_b);
  root.children.push_back(spine(clause_a, lex, root_label(sentiment_a)));
  root.children.push_back(std::move(tail));
  return root;
}

std::vector<SentTree> generate_set(const Lexicon& lex, std::size_t count,
                                   const SyntheticConfig& config, Rng& rng) {
  std::vector<SentTree> trees;
  trees.reserve(count);
  const std::size_t n_contrastive = static_cast<std::size_t>(
      std::llround(config.contrast_rate * static_cast<double>(count)));

  // Contrastive sentences come in mirrored pairs: `A but B` labeled by B and
  // `B but A` labeled by A. The pair shares one token multiset with opposite
  // labels, so no order-free model can separate them.
  std::size_t emitted = 0;
  while (emitted < n_contrastive) {
    const int s_b = rng.bernoulli(0.5) ? 1 : 0;
    const int s_a = 1 - s_b;
    const std::vector<std::string> clause_a = sample_clause(lex, s_a, rng);
    const std::vector<std::string> clause_b = sample_clause(lex, s_b, rng);
    trees.push_back(contrastive_sentence(clause_a, s_a, clause_b, s_b, lex));
    ++emitted;
    if (emitted < n_contrastive) {
      trees.push_back(contrastive_sentence(clause_b, s_b, clause_a, s_a, lex));
      ++emitted;
    }
  }
  while (trees.size() < count) trees.push_back(plain_sentence(lex, config.max_len, rng));
  rng.shuffle(trees);
  return trees;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  if (config.vocab_size < 8)
    throw ConfigError("generate_synthetic: vocab_size must be >= 8");
  if (config.max_len < 4)
    throw ConfigError("generate_synthetic: max_len must be >= 4");
  if (config.contrast_rate < 0.0 || config.contrast_rate > 1.0)
    throw ParameterError("generate_synthetic: contrast_rate must be in [0, 1]");

  const Lexicon lex = make_lexicon(config.vocab_size);
  Rng rng(config.seed);
  const std::size_t eval_count = std::max<std::size_t>(20, config.n_sentences / 10);

  SyntheticData out;
  out.train = generate_set(lex, config.n_sentences, config, rng);
  out.valid = generate_set(lex, eval_count, config, rng);
  out.test = generate_set(lex, eval_count, config, rng);
  return out;
}

}  // namespace skimread::data
