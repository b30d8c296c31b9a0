#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "skimread/rng.hpp"
#include "skimread/tensor.hpp"

namespace skimread::nn {

enum class Activation { identity, relu };
enum class Mode { train, eval };

/// A named weight tensor together with its gradient accumulator and Adam
/// moment buffers. All four tensors share one shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string param_name, Tensor init)
      : name(std::move(param_name)),
        value(std::move(init)),
        grad(Tensor::zeros_like(value)),
        m(Tensor::zeros_like(value)),
        v(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update. Consumes and zeroes the gradient, bumps
/// step_count. Throws NumericError on a non-finite gradient.
void adam_step(Parameter& param, const AdamConfig& cfg = {});

// ---------------------------------------------------------------------------
// Stateless kernels

/// activation(W x + b) for a single input vector. W is [n_out x n_in].
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                     Activation act);

Tensor softmax(const Tensor& logits);

struct SoftmaxXent {
  double loss = 0.0;
  Tensor probs;
};

/// Numerically stable softmax + negative log likelihood of `label`.
SoftmaxXent softmax_cross_entropy(const Tensor& logits, std::size_t label);

/// d loss / d logits = probs - onehot(label).
Tensor softmax_cross_entropy_grad(const Tensor& probs, std::size_t label);

/// Inverted dropout: train mode zeroes entries with probability p and scales
/// survivors by 1/(1-p); eval mode is the identity.
struct DropoutCache {
  std::vector<double> mask;  // per-entry multiplier, already scaled
};

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng,
               DropoutCache* cache = nullptr);
Tensor dropout_backward(const Tensor& dy, const DropoutCache& cache);

/// Column means followed by column maxima of a [T x k] sequence -> [2k].
struct PoolCache {
  std::size_t steps = 0;
  std::size_t width = 0;
  std::vector<std::size_t> argmax;  // row index of each column maximum
};

Tensor mean_max_pool(const Tensor& h_seq, PoolCache* cache = nullptr);
Tensor mean_max_pool_backward(const Tensor& dy, const PoolCache& cache);

// ---------------------------------------------------------------------------
// Layers

struct DenseCache {
  Tensor input;
  Tensor pre_activation;
};

struct Dense {
  Parameter weight;  // [n_out x n_in]
  Parameter bias;    // [n_out]
  Activation activation = Activation::identity;

  Dense() = default;
  Dense(const std::string& name, std::size_t n_in, std::size_t n_out,
        Activation act, Rng& rng);

  std::size_t in_dim() const { return weight.value.cols(); }
  std::size_t out_dim() const { return weight.value.rows(); }

  Tensor forward(const Tensor& x, DenseCache* cache = nullptr) const;
  /// Accumulates into weight.grad / bias.grad, returns d loss / d input.
  Tensor backward(const Tensor& dy, const DenseCache& cache);
};

/// One direction of LSTM weights; gate rows stacked input, forget, cell,
/// output, so wx is [4h x d], wh is [4h x h], b is [4h].
struct LstmDirection {
  Parameter wx;
  Parameter wh;
  Parameter b;
};

struct BiLstmCache;

struct BiLstm {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  LstmDirection fwd;
  LstmDirection bwd;

  BiLstm() = default;
  /// Weights uniform in (-1/sqrt(h), 1/sqrt(h)); forget-gate bias +1.
  BiLstm(const std::string& name, std::size_t in_dim, std::size_t hidden_dim,
         Rng& rng);

  /// [T x d] -> [T x 2h]; row t is [forward h_t ; backward h_t]. Both
  /// directions start from zero h and c. Throws EmptyInputError for T = 0.
  Tensor forward(const Tensor& x_seq, BiLstmCache* cache = nullptr) const;
  /// BPTT. Accumulates weight gradients, returns d loss / d x_seq.
  Tensor backward(const Tensor& dh_seq, const BiLstmCache& cache);

  std::vector<Parameter*> params();
};

/// Per-direction activations recorded during the forward pass.
struct LstmDirectionCache {
  // All [T x h]; gate values post-nonlinearity.
  Tensor gate_i, gate_f, gate_g, gate_o;
  Tensor cell, tanh_cell, hidden_states;
};

struct BiLstmCache {
  Tensor input;
  LstmDirectionCache fwd;
  LstmDirectionCache bwd;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coords_per_param = 200;  // bounds runtime on big tensors
  std::uint64_t seed = 17;
};

/// Central-difference check. loss_fn(with_grad) must be deterministic
/// (dropout in eval mode); when with_grad is true it must also accumulate
/// analytic gradients into the listed parameters. Returns the maximum over
/// sampled coordinates of |analytic - numeric| / max(|analytic|, |numeric|,
/// 1e-12).
double grad_check(const std::function<double(bool with_grad)>& loss_fn,
                  const std::vector<Parameter*>& params,
                  const GradCheckOptions& opts = {});

}  // namespace skimread::nn
