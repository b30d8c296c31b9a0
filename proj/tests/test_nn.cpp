#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "skimread/nn.hpp"

using namespace skimread;

namespace {

// Straight-line matrix-vector oracle, independent of dense_forward.
std::vector<double> matvec_oracle(const Tensor& w, const Tensor& b,
                                  const Tensor& x) {
  std::vector<double> y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    y[r] = b[r];
    for (std::size_t c = 0; c < w.cols(); ++c) y[r] += w.at(r, c) * x[c];
  }
  return y;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar LSTM recurrence, written independently of BiLstm's internals. Runs
// one direction over the rows of x in the given order and returns the hidden
// state after each step, indexed by step.
std::vector<std::vector<double>> lstm_oracle(const nn::LstmDirection& dir,
                                             const Tensor& x,
                                             const std::vector<std::size_t>& order,
                                             std::size_t hidden) {
  std::vector<double> h(hidden, 0.0), c(hidden, 0.0);
  std::vector<std::vector<double>> out;
  for (std::size_t t : order) {
    std::vector<double> z(4 * hidden, 0.0);
    for (std::size_t r = 0; r < 4 * hidden; ++r) {
      z[r] = dir.b.value[r];
      for (std::size_t k = 0; k < x.cols(); ++k)
        z[r] += dir.wx.value.at(r, k) * x.at(t, k);
      for (std::size_t k = 0; k < hidden; ++k)
        z[r] += dir.wh.value.at(r, k) * h[k];
    }
    std::vector<double> h_new(hidden), c_new(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      const double gi = sigmoid(z[j]);
      const double gf = sigmoid(z[hidden + j]);
      const double gg = std::tanh(z[2 * hidden + j]);
      const double go = sigmoid(z[3 * hidden + j]);
      c_new[j] = gf * c[j] + gi * gg;
      h_new[j] = go * std::tanh(c_new[j]);
    }
    h = h_new;
    c = c_new;
    out.push_back(h);
  }
  return out;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace

TEST_CASE("dense_forward identity map") {
  const Tensor x = Tensor::vector({1.0, 0.0});
  const Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor b = Tensor::vector({0.0, 0.0});
  const Tensor y = nn::dense_forward(x, w, b, nn::Activation::identity);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 0.0);
}

TEST_CASE("dense_forward relu clamps at zero") {
  const Tensor x = Tensor::vector({1.0, 2.0});
  const Tensor w({2, 2}, {1.0, 1.0, 1.0, 1.0});
  const Tensor b = Tensor::vector({-3.0, -3.0});
  const Tensor y = nn::dense_forward(x, w, b, nn::Activation::relu);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
}

TEST_CASE("dense_forward matches the loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({5}, rng);
    const Tensor w = random_tensor({3, 5}, rng);
    const Tensor b = random_tensor({3}, rng);
    const Tensor y = nn::dense_forward(x, w, b, nn::Activation::identity);
    const std::vector<double> want = matvec_oracle(w, b, x);
    for (std::size_t r = 0; r < 3; ++r)
      CHECK(y[r] == doctest::Approx(want[r]).epsilon(1e-12));
  }
}

TEST_CASE("dense_forward rejects mismatched shapes") {
  const Tensor x = Tensor::vector({1.0, 2.0, 3.0});
  const Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor b = Tensor::vector({0.0, 0.0});
  CHECK_THROWS_AS(nn::dense_forward(x, w, b, nn::Activation::identity),
                  DimensionError);
}

TEST_CASE("dropout p=0 in train mode is the identity") {
  Rng rng(3);
  const Tensor x = random_tensor({64}, rng);
  const Tensor y = nn::dropout(x, 0.0, nn::Mode::train, rng);
  CHECK(y.data == x.data);
}

TEST_CASE("dropout eval mode is an exact identity") {
  Rng rng(4);
  const Tensor x = random_tensor({64}, rng);
  const Tensor y = nn::dropout(x, 0.5, nn::Mode::eval, rng);
  CHECK(y.data == x.data);
}

TEST_CASE("dropout rejects p >= 1") {
  Rng rng(5);
  const Tensor x = random_tensor({4}, rng);
  CHECK_THROWS_AS(nn::dropout(x, 1.0, nn::Mode::train, rng), ParameterError);
}

TEST_CASE("dropout train mean concentrates on the input (binomial bound)") {
  Rng rng(6);
  const std::size_t n = 10000;
  Tensor ones({n});
  ones.fill(1.0);
  const Tensor y = nn::dropout(ones, 0.5, nn::Mode::train, rng);
  double mean = 0.0;
  for (double v : y.data) mean += v;
  mean /= static_cast<double>(n);
  // 3 sigma for p=0.5 survivors scaled by 2: 3 * sqrt(0.25/n) * 2.
  CHECK(std::abs(mean - 1.0) < 3.0 * std::sqrt(0.25 / n) * 2.0);
}

TEST_CASE("dropout train expectation matches input at 3 sigma") {
  const std::size_t n = 20000;
  for (double p : {0.1, 0.3, 0.7}) {
    Rng rng(static_cast<std::uint64_t>(p * 1000));
    Tensor ones({n});
    ones.fill(1.0);
    const Tensor y = nn::dropout(ones, p, nn::Mode::train, rng);
    double mean = 0.0;
    for (double v : y.data) mean += v;
    mean /= static_cast<double>(n);
    const double sigma = std::sqrt(p / ((1.0 - p) * n));
    CHECK(std::abs(mean - 1.0) < 3.0 * sigma);
  }
}

TEST_CASE("softmax_cross_entropy uniform case") {
  const auto [loss, probs] = nn::softmax_cross_entropy(Tensor::vector({0.0, 0.0}), 0);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy closed-form gradient") {
  const auto [loss, probs] = nn::softmax_cross_entropy(Tensor::vector({0.0, 0.0}), 1);
  const Tensor g = nn::softmax_cross_entropy_grad(probs, 1);
  CHECK(g[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy stays stable for extreme logits") {
  const auto [loss, probs] = nn::softmax_cross_entropy(Tensor::vector({10.0, -10.0}), 0);
  // -log(sigmoid(20)) = log(1 + exp(-20)) ~= 2.061e-9.
  CHECK(loss == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(loss == doctest::Approx(2.061e-9).epsilon(1e-3));
  CHECK(probs.all_finite());
}

TEST_CASE("softmax_cross_entropy rejects out-of-range label") {
  CHECK_THROWS_AS(nn::softmax_cross_entropy(Tensor::vector({0.0, 0.0}), 2),
                  IndexError);
}

TEST_CASE("softmax probabilities are a distribution over 30 seeds") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const Tensor logits = random_tensor({5}, rng, 20.0);
    const Tensor probs = nn::softmax(logits);
    double total = 0.0;
    for (double p : probs.data) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bilstm with zero weights emits zeros") {
  Rng rng(7);
  nn::BiLstm lstm("z", 3, 4, rng);
  for (nn::Parameter* p : lstm.params()) p->value.fill(0.0);
  const Tensor x = random_tensor({5, 3}, rng);
  const Tensor h = lstm.forward(x);
  for (double v : h.data) CHECK(v == 0.0);
}

TEST_CASE("bilstm T=1 equals a single cell step in both halves") {
  Rng rng(8);
  nn::BiLstm lstm("t1", 3, 4, rng);
  const Tensor x = random_tensor({1, 3}, rng);
  const Tensor h = lstm.forward(x);
  const auto fwd = lstm_oracle(lstm.fwd, x, {0}, 4);
  const auto bwd = lstm_oracle(lstm.bwd, x, {0}, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(h.at(0, j) == doctest::Approx(fwd[0][j]).epsilon(1e-12));
    CHECK(h.at(0, 4 + j) == doctest::Approx(bwd[0][j]).epsilon(1e-12));
  }
}

TEST_CASE("bilstm T=3 matches the scalar recurrence oracle") {
  Rng rng(9);
  nn::BiLstm lstm("t3", 3, 5, rng);
  const Tensor x = random_tensor({3, 3}, rng);
  const Tensor h = lstm.forward(x);
  const auto fwd = lstm_oracle(lstm.fwd, x, {0, 1, 2}, 5);
  const auto bwd = lstm_oracle(lstm.bwd, x, {2, 1, 0}, 5);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(h.at(t, j) == doctest::Approx(fwd[t][j]).epsilon(1e-10));
      // Backward oracle step k visits row 2-k.
      CHECK(h.at(2 - t, 5 + j) == doctest::Approx(bwd[t][j]).epsilon(1e-10));
    }
}

TEST_CASE("bilstm rejects an empty sequence") {
  Rng rng(10);
  nn::BiLstm lstm("e", 3, 4, rng);
  CHECK_THROWS_AS(lstm.forward(Tensor({0, 3})), EmptyInputError);
}

TEST_CASE("bilstm output is independent of other sequences processed") {
  Rng rng(12);
  nn::BiLstm lstm("b", 3, 4, rng);
  const Tensor x1 = random_tensor({4, 3}, rng);
  const Tensor x2 = random_tensor({2, 3}, rng);
  const Tensor first = lstm.forward(x1);
  lstm.forward(x2);
  const Tensor again = lstm.forward(x1);
  CHECK(first.data == again.data);
}

TEST_CASE("mean_max_pool worked example") {
  const Tensor h({2, 2}, {1.0, 2.0, 3.0, 0.0});
  const Tensor out = nn::mean_max_pool(h);
  CHECK(out.size() == 4);
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 1.0);
  CHECK(out[2] == 3.0);
  CHECK(out[3] == 2.0);
}

TEST_CASE("mean_max_pool on one row duplicates the row") {
  const Tensor h({1, 3}, {4.0, -1.0, 0.5});
  const Tensor out = nn::mean_max_pool(h);
  CHECK(out[0] == 4.0);
  CHECK(out[1] == -1.0);
  CHECK(out[2] == 0.5);
  CHECK(out[3] == 4.0);
  CHECK(out[4] == -1.0);
  CHECK(out[5] == 0.5);
}

TEST_CASE("mean_max_pool matches a loop oracle exactly") {
  Rng rng(13);
  const Tensor h = random_tensor({6, 4}, rng);
  const Tensor out = nn::mean_max_pool(h);
  for (std::size_t c = 0; c < 4; ++c) {
    double sum = 0.0, best = h.at(0, c);
    for (std::size_t t = 0; t < 6; ++t) {
      sum += h.at(t, c);
      best = std::max(best, h.at(t, c));
    }
    CHECK(out[c] == sum / 6.0);
    CHECK(out[4 + c] == best);
  }
}

TEST_CASE("mean_max_pool rejects an empty sequence") {
  CHECK_THROWS_AS(nn::mean_max_pool(Tensor({0, 3})), EmptyInputError);
}

TEST_CASE("adam_step with zero gradient leaves the value unchanged") {
  nn::Parameter p("p", Tensor::vector({1.5, -2.0, 0.25}));
  const std::vector<double> before = p.value.data;
  nn::adam_step(p);
  CHECK(p.value.data == before);
  CHECK(p.step_count == 1);
}

TEST_CASE("adam_step first update equals -lr/(1+eps) for unit gradient") {
  nn::Parameter p("p", Tensor::vector({0.0}));
  p.grad[0] = 1.0;
  const nn::AdamConfig cfg;
  nn::adam_step(p, cfg);
  CHECK(p.value[0] == doctest::Approx(-cfg.lr / (1.0 + cfg.eps)).epsilon(1e-12));
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("adam_step matches a scalar reference over 5 steps") {
  const nn::AdamConfig cfg{.lr = 1e-2};
  nn::Parameter p("p", Tensor::vector({0.7}));

  // Scalar reference, written out independently.
  double value = 0.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2.5;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(cfg.beta1, t));
    const double v_hat = v / (1.0 - std::pow(cfg.beta2, t));
    value -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }

  for (int t = 0; t < 5; ++t) {
    p.grad[0] = 2.5;
    nn::adam_step(p, cfg);
  }
  CHECK(p.value[0] == doctest::Approx(value).epsilon(1e-12));
  CHECK(p.step_count == 5);
}

TEST_CASE("adam_step rejects non-finite gradients") {
  nn::Parameter p("p", Tensor::vector({0.0}));
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nn::adam_step(p), NumericError);
}

TEST_CASE("grad_check on w^2 is tight") {
  nn::Parameter w("w", Tensor::vector({1.0}));
  auto loss = [&w](bool with_grad) {
    if (with_grad) w.grad[0] += 2.0 * w.value[0];
    return w.value[0] * w.value[0];
  };
  CHECK(nn::grad_check(loss, {&w}) < 1e-8);
}

TEST_CASE("dense layer gradients pass finite differences over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    nn::Dense layer("d", 4, 3, seed % 2 ? nn::Activation::relu : nn::Activation::identity,
                    rng);
    const Tensor x = random_tensor({4}, rng);
    nn::DenseCache cache;
    auto loss = [&](bool with_grad) {
      const Tensor y = layer.forward(x, &cache);
      const auto [l, probs] = nn::softmax_cross_entropy(y, 1);
      if (with_grad) layer.backward(nn::softmax_cross_entropy_grad(probs, 1), cache);
      return l;
    };
    CHECK(nn::grad_check(loss, {&layer.weight, &layer.bias}, {.seed = seed}) < 1e-4);
  }
}

TEST_CASE("bilstm gradients pass finite differences over 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 31);
    const std::size_t steps = 1 + seed % 4;
    nn::BiLstm layer("l", 3, 4, rng);
    const Tensor x = random_tensor({steps, 3}, rng);
    auto loss = [&](bool with_grad) {
      nn::BiLstmCache cache;
      const Tensor h = layer.forward(x, &cache);
      nn::PoolCache pool_cache;
      const Tensor pooled = nn::mean_max_pool(h, &pool_cache);
      const auto [l, probs] = nn::softmax_cross_entropy(pooled, 0);
      if (with_grad) {
        const Tensor d = nn::softmax_cross_entropy_grad(probs, 0);
        layer.backward(nn::mean_max_pool_backward(d, pool_cache), cache);
      }
      return l;
    };
    CHECK(nn::grad_check(loss, layer.params(), {.seed = seed}) < 1e-4);
  }
}

TEST_CASE("rng is deterministic and platform independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  // First draws of splitmix64(42), frozen.
  Rng c(42);
  CHECK(c.next_u64() == 13679457532755275413ULL);
}
