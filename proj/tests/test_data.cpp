#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "skimread/data.hpp"

using namespace skimread;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> leaves_of(const data::SentTree& tree) {
  if (tree.is_leaf()) return {tree.token};
  std::vector<std::string> out;
  for (const auto& child : tree.children)
    for (auto& t : leaves_of(child)) out.push_back(std::move(t));
  return out;
}

// Random tree for round-trip / enumeration property tests.
data::SentTree random_tree(Rng& rng, int depth = 0) {
  data::SentTree node;
  node.label = static_cast<int>(rng.below(5));
  if (depth >= 3 || rng.bernoulli(0.4)) {
    node.token = "tok" + std::to_string(rng.below(12));
    return node;
  }
  const std::size_t n_children = 1 + rng.below(3);
  for (std::size_t i = 0; i < n_children; ++i)
    node.children.push_back(random_tree(rng, depth + 1));
  return node;
}

// Brute-force node enumeration with the same binarize/dedup filters,
// independent of extract_subtrees' traversal.
void collect_nodes(const data::SentTree& tree, std::vector<const data::SentTree*>& out) {
  out.push_back(&tree);
  for (const auto& child : tree.children) collect_nodes(child, out);
}

std::size_t subtree_count_oracle(const data::SentTree& tree, const data::Vocab& vocab) {
  std::vector<const data::SentTree*> nodes;
  collect_nodes(tree, nodes);
  std::set<std::pair<std::vector<std::size_t>, int>> unique;
  for (const data::SentTree* node : nodes) {
    if (node->label == 2) continue;
    std::vector<std::size_t> tokens;
    for (const std::string& t : leaves_of(*node)) tokens.push_back(vocab.lookup(t));
    unique.insert({tokens, node->label >= 3 ? 1 : 0});
  }
  return unique.size();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("skimread_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("parse_ptb_line reads a two-leaf tree") {
  const data::SentTree tree = data::parse_ptb_line("(3 (2 Good) (2 movie))");
  CHECK(tree.label == 3);
  REQUIRE(tree.children.size() == 2);
  CHECK(tree.children[0].token == "Good");
  CHECK(tree.children[1].token == "movie");
  CHECK(leaves_of(tree) == std::vector<std::string>{"Good", "movie"});
}

TEST_CASE("parse_ptb_line reads a single leaf") {
  const data::SentTree tree = data::parse_ptb_line("(4 fine)");
  CHECK(tree.label == 4);
  CHECK(tree.is_leaf());
  CHECK(tree.token == "fine");
}

TEST_CASE("parse_ptb_line reports unbalanced parentheses") {
  CHECK_THROWS_AS(data::parse_ptb_line("(3 (2 Good)"), ParseError);
  try {
    data::parse_ptb_line("(3 (2 Good)");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset == 11);  // end of input
  }
}

TEST_CASE("parse_ptb_line rejects bad labels and empty nodes") {
  CHECK_THROWS_AS(data::parse_ptb_line("(x hello)"), ParseError);
  CHECK_THROWS_AS(data::parse_ptb_line("(7 hello)"), ParseError);
  CHECK_THROWS_AS(data::parse_ptb_line("(3)"), ParseError);
  CHECK_THROWS_AS(data::parse_ptb_line("(3 (2 a) trailing)"), ParseError);
  CHECK_THROWS_AS(data::parse_ptb_line(""), ParseError);
}

TEST_CASE("load_treebank reports the offending line") {
  const fs::path dir = temp_dir("badbank");
  {
    std::ofstream out(dir / "bad.txt");
    out << "(3 (2 Good) (2 movie))\n";
    out << "(3 (2 broken\n";
  }
  bool threw = false;
  try {
    data::load_treebank((dir / "bad.txt").string());
  } catch (const ParseError& e) {
    threw = true;
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK(threw);
  CHECK_THROWS_AS(data::load_treebank((dir / "missing.txt").string()), IoError);
}

TEST_CASE("parser round-trips random trees") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const data::SentTree tree = random_tree(rng);
    const std::string text = data::serialize_tree(tree);
    const data::SentTree reparsed = data::parse_ptb_line(text);
    CHECK(data::serialize_tree(reparsed) == text);
  }
}

TEST_CASE("binarize maps the five-way labels onto the binary task") {
  data::Vocab vocab = data::build_vocab({{"fine", "bad"}}, 1);
  CHECK(data::binarize(data::parse_ptb_line("(4 fine)"), vocab)->label == 1);
  CHECK(data::binarize(data::parse_ptb_line("(3 fine)"), vocab)->label == 1);
  CHECK(data::binarize(data::parse_ptb_line("(0 bad)"), vocab)->label == 0);
  CHECK(data::binarize(data::parse_ptb_line("(1 bad)"), vocab)->label == 0);
  CHECK(!data::binarize(data::parse_ptb_line("(2 fine)"), vocab).has_value());
}

TEST_CASE("binarize maps unseen tokens to UNK") {
  data::Vocab vocab = data::build_vocab({{"fine"}}, 1);
  const auto ex = data::binarize(data::parse_ptb_line("(4 (3 fine) (2 zebra))"), vocab);
  REQUIRE(ex.has_value());
  CHECK(ex->tokens[0] == vocab.lookup("fine"));
  CHECK(ex->tokens[1] == data::Vocab::kUnk);
}

TEST_CASE("extract_subtrees counts nodes of a two-leaf tree") {
  data::Vocab vocab = data::build_vocab({{"Good", "movie"}}, 1);
  const auto exs =
      data::extract_subtrees(data::parse_ptb_line("(3 (3 Good) (4 movie))"), vocab);
  CHECK(exs.size() == 3);
  CHECK(!exs[0].is_subtree);  // root first
  CHECK(exs[1].is_subtree);
  CHECK(exs[2].is_subtree);
}

TEST_CASE("extract_subtrees drops a neutral leaf entirely") {
  data::Vocab vocab = data::build_vocab({{"meh"}}, 1);
  CHECK(data::extract_subtrees(data::parse_ptb_line("(2 meh)"), vocab).empty());
}

TEST_CASE("extract_subtrees matches a brute-force enumeration oracle") {
  Rng rng(22);
  data::Vocab vocab;
  {
    std::vector<std::vector<std::string>> corpus;
    for (int i = 0; i < 12; ++i) corpus.push_back({"tok" + std::to_string(i)});
    vocab = data::build_vocab(corpus, 1);
  }
  for (int trial = 0; trial < 50; ++trial) {
    const data::SentTree tree = random_tree(rng);
    const auto exs = data::extract_subtrees(tree, vocab);
    CHECK(exs.size() == subtree_count_oracle(tree, vocab));
    std::vector<const data::SentTree*> nodes;
    collect_nodes(tree, nodes);
    CHECK(exs.size() <= nodes.size());
    for (const auto& ex : exs) CHECK((ex.label == 0 || ex.label == 1));
  }
}

TEST_CASE("build_vocab honors min_freq") {
  const data::Vocab vocab = data::build_vocab({{"a", "b", "a"}}, 2);
  CHECK(vocab.size() == 3);  // UNK, PAD, a
  CHECK(vocab.contains("a"));
  CHECK(!vocab.contains("b"));
  CHECK(vocab.lookup("b") == data::Vocab::kUnk);
}

TEST_CASE("build_vocab of an empty corpus holds only the specials") {
  const data::Vocab vocab = data::build_vocab({}, 1);
  CHECK(vocab.size() == 2);
  CHECK(vocab.lookup("anything") == data::Vocab::kUnk);
}

TEST_CASE("load_word_vectors reads rows and initializes the rest") {
  const fs::path dir = temp_dir("vectors");
  {
    std::ofstream out(dir / "vecs.txt");
    out << "good 0.1 0.2\n";
    out << "outofvocab 9.0 9.0\n";
  }
  data::Vocab vocab = data::build_vocab({{"good", "unseen"}}, 1);
  Rng rng(23);
  const data::EmbeddingTable table =
      data::load_word_vectors((dir / "vecs.txt").string(), vocab, 2, rng);
  const std::size_t row = vocab.lookup("good");
  CHECK(table.matrix.at(row, 0) == doctest::Approx(0.1));
  CHECK(table.matrix.at(row, 1) == doctest::Approx(0.2));
  // UNK and PAD rows stay zero.
  CHECK(table.matrix.at(data::Vocab::kUnk, 0) == 0.0);
  CHECK(table.matrix.at(data::Vocab::kPad, 1) == 0.0);
}

TEST_CASE("load_word_vectors rejects a short line") {
  const fs::path dir = temp_dir("badvec");
  {
    std::ofstream out(dir / "vecs.txt");
    out << "good 0.1\n";
  }
  data::Vocab vocab = data::build_vocab({{"good"}}, 1);
  Rng rng(24);
  CHECK_THROWS_AS(
      data::load_word_vectors((dir / "vecs.txt").string(), vocab, 2, rng),
      FormatError);
  CHECK_THROWS_AS(
      data::load_word_vectors((dir / "missing.txt").string(), vocab, 2, rng),
      IoError);
}

TEST_CASE("load_word_vectors missing-token init concentrates around zero") {
  const fs::path dir = temp_dir("gauss");
  {
    std::ofstream out(dir / "vecs.txt");
    out << "known 1.0 1.0 1.0 1.0\n";
  }
  std::vector<std::vector<std::string>> corpus{{"known"}};
  for (int i = 0; i < 1000; ++i) corpus.push_back({"miss" + std::to_string(i)});
  data::Vocab vocab = data::build_vocab(corpus, 1);
  Rng rng(25);
  const std::size_t dim = 4;
  const data::EmbeddingTable table =
      data::load_word_vectors((dir / "vecs.txt").string(), vocab, dim, rng);
  double mean = 0.0;
  std::size_t count = 0;
  for (std::size_t row = 2; row < vocab.size(); ++row) {
    if (row == vocab.lookup("known")) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      mean += table.matrix.at(row, d);
      ++count;
    }
  }
  mean /= static_cast<double>(count);
  CHECK(count == 1000 * dim);
  CHECK(std::abs(mean) < 3.0 * 0.1 / std::sqrt(1000.0 * dim));
}

namespace {

std::vector<data::SentTree> simple_sentences(std::size_t n) {
  std::vector<data::SentTree> trees;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 ? 4 : 0;
    trees.push_back(data::parse_ptb_line(
        "(" + std::to_string(label) + " (2 w" + std::to_string(i) + ") (2 w" +
        std::to_string(i + n) + "))"));
  }
  return trees;
}

}  // namespace

TEST_CASE("make_splits produces a disjoint 80/20 sentence partition") {
  const auto trees = simple_sentences(10);
  const data::Vocab vocab = data::build_vocab(data::leaf_corpus(trees), 1);
  const data::DataSplits splits = data::make_splits(trees, trees, trees, 5, vocab);
  CHECK(splits.model_sentences == 8);
  CHECK(splits.decision_sentences == 2);
  CHECK(splits.full_train.size() ==
        splits.model_train.size() + splits.decision_train.size());

  std::set<std::vector<std::size_t>> model_roots, decision_roots;
  for (const auto& ex : splits.model_train)
    if (!ex.is_subtree) model_roots.insert(ex.tokens);
  for (const auto& ex : splits.decision_train)
    if (!ex.is_subtree) decision_roots.insert(ex.tokens);
  CHECK(model_roots.size() == 8);
  CHECK(decision_roots.size() == 2);
  for (const auto& tokens : decision_roots) CHECK(!model_roots.count(tokens));
}

TEST_CASE("make_splits is deterministic in the seed") {
  const auto trees = simple_sentences(40);
  const data::Vocab vocab = data::build_vocab(data::leaf_corpus(trees), 1);
  const data::DataSplits a = data::make_splits(trees, trees, trees, 9, vocab);
  const data::DataSplits b = data::make_splits(trees, trees, trees, 9, vocab);
  REQUIRE(a.model_train.size() == b.model_train.size());
  for (std::size_t i = 0; i < a.model_train.size(); ++i)
    CHECK(a.model_train[i].tokens == b.model_train[i].tokens);
}

TEST_CASE("make_splits differs across seeds") {
  const auto trees = simple_sentences(100);
  const data::Vocab vocab = data::build_vocab(data::leaf_corpus(trees), 1);
  std::size_t distinct = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const data::DataSplits a =
        data::make_splits(trees, trees, trees, seed, vocab);
    const data::DataSplits b =
        data::make_splits(trees, trees, trees, seed + 1000, vocab);
    std::set<std::vector<std::size_t>> roots_a, roots_b;
    for (const auto& ex : a.model_train)
      if (!ex.is_subtree) roots_a.insert(ex.tokens);
    for (const auto& ex : b.model_train)
      if (!ex.is_subtree) roots_b.insert(ex.tokens);
    if (roots_a != roots_b) ++distinct;
  }
  CHECK(distinct >= 19);  // identical partitions across seeds are negligible
}

TEST_CASE("make_splits refuses fewer than 5 sentences") {
  const auto trees = simple_sentences(4);
  const data::Vocab vocab = data::build_vocab(data::leaf_corpus(trees), 1);
  CHECK_THROWS_AS(data::make_splits(trees, trees, trees, 1, vocab), ConfigError);
}

TEST_CASE("make_splits keeps duplicate sentences on one side (leakage-free)") {
  auto trees = simple_sentences(20);
  // Duplicate a handful of sentences verbatim.
  for (int i = 0; i < 5; ++i) trees.push_back(trees[i]);
  const data::Vocab vocab = data::build_vocab(data::leaf_corpus(trees), 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const data::DataSplits splits = data::make_splits(trees, trees, trees, seed, vocab);
    std::set<std::vector<std::size_t>> model_roots;
    for (const auto& ex : splits.model_train)
      if (!ex.is_subtree) model_roots.insert(ex.tokens);
    for (const auto& ex : splits.decision_train)
      if (!ex.is_subtree) CHECK(!model_roots.count(ex.tokens));
  }
}

TEST_CASE("synthetic corpus at contrast_rate 0 is multiset separable") {
  data::SyntheticConfig config;
  config.n_sentences = 400;
  config.contrast_rate = 0.0;
  config.seed = 31;
  const data::SyntheticData generated = data::generate_synthetic(config);

  // Multiset lookup classifier: 100% accuracy iff no multiset carries both labels.
  std::map<std::vector<std::string>, std::set<int>> groups;
  for (const auto& tree : generated.train) {
    std::vector<std::string> tokens = leaves_of(tree);
    std::sort(tokens.begin(), tokens.end());
    groups[tokens].insert(tree.label >= 3 ? 1 : 0);
  }
  for (const auto& [tokens, labels] : groups) CHECK(labels.size() == 1);
}

TEST_CASE("synthetic corpus at contrast_rate 0.5 contains multiset collisions") {
  data::SyntheticConfig config;
  config.n_sentences = 400;
  config.contrast_rate = 0.5;
  config.seed = 32;
  const data::SyntheticData generated = data::generate_synthetic(config);

  std::map<std::vector<std::string>, std::set<int>> groups;
  for (const auto& tree : generated.train) {
    std::vector<std::string> tokens = leaves_of(tree);
    std::sort(tokens.begin(), tokens.end());
    groups[tokens].insert(tree.label >= 3 ? 1 : 0);
  }
  bool collision = false;
  for (const auto& [tokens, labels] : groups)
    if (labels.size() == 2) collision = true;
  CHECK(collision);
}

TEST_CASE("synthetic generation is byte-identical for a fixed seed") {
  data::SyntheticConfig config;
  config.n_sentences = 100;
  config.seed = 33;
  const fs::path dir_a = temp_dir("synth_a");
  const fs::path dir_b = temp_dir("synth_b");
  for (const fs::path& dir : {dir_a, dir_b}) {
    const data::SyntheticData generated = data::generate_synthetic(config);
    data::write_treebank((dir / "train.txt").string(), generated.train);
    data::write_treebank((dir / "dev.txt").string(), generated.valid);
    data::write_treebank((dir / "test.txt").string(), generated.test);
  }
  for (const char* name : {"train.txt", "dev.txt", "test.txt"})
    CHECK(slurp(dir_a / name) == slurp(dir_b / name));
}

TEST_CASE("synthetic label balance stays near 50/50") {
  for (double rate : {0.0, 0.5, 1.0}) {
    data::SyntheticConfig config;
    config.n_sentences = 1200;
    config.contrast_rate = rate;
    config.seed = 34;
    const data::SyntheticData generated = data::generate_synthetic(config);
    std::size_t positive = 0;
    for (const auto& tree : generated.train)
      if (tree.label >= 3) ++positive;
    const double frac = static_cast<double>(positive) /
                        static_cast<double>(generated.train.size());
    CHECK(std::abs(frac - 0.5) <= 0.05);
  }
}

TEST_CASE("synthetic generator validates its configuration") {
  data::SyntheticConfig config;
  config.vocab_size = 7;
  CHECK_THROWS_AS(data::generate_synthetic(config), ConfigError);
  config.vocab_size = 32;
  config.contrast_rate = 1.5;
  CHECK_THROWS_AS(data::generate_synthetic(config), ParameterError);
}

TEST_CASE("synthetic trees parse back through the treebank format") {
  data::SyntheticConfig config;
  config.n_sentences = 50;
  config.seed = 35;
  const data::SyntheticData generated = data::generate_synthetic(config);
  const fs::path dir = temp_dir("synth_rt");
  data::write_treebank((dir / "train.txt").string(), generated.train);
  const auto reloaded = data::load_treebank((dir / "train.txt").string());
  REQUIRE(reloaded.size() == generated.train.size());
  for (std::size_t i = 0; i < reloaded.size(); ++i)
    CHECK(data::serialize_tree(reloaded[i]) ==
          data::serialize_tree(generated.train[i]));
}
