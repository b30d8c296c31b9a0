#include "skimread/nn.hpp"

#include <algorithm>
#include <cmath>

namespace skimread::nn {

namespace {

double apply_activation(double x, Activation act) {
  return act == Activation::relu ? std::max(0.0, x) : x;
}

double activation_grad(double pre, Activation act) {
  return act == Activation::relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

void adam_step(Parameter& param, const AdamConfig& cfg) {
  if (!param.grad.all_finite())
    throw NumericError("adam_step: non-finite gradient for '" + param.name + "'");
  param.step_count += 1;
  const double t = static_cast<double>(param.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double g = param.grad[i];
    param.m[i] = cfg.beta1 * param.m[i] + (1.0 - cfg.beta1) * g;
    param.v[i] = cfg.beta2 * param.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = param.m[i] / bc1;
    const double v_hat = param.v[i] / bc2;
    param.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  param.zero_grad();
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                     Activation act) {
  require_shape(x, 1, "dense_forward input");
  require_shape(w, 2, "dense_forward weight");
  require_shape(b, 1, "dense_forward bias");
  if (w.cols() != x.size() || w.rows() != b.size())
    throw DimensionError("dense_forward: weight " + std::to_string(w.rows()) +
                         "x" + std::to_string(w.cols()) + " does not match input " +
                         std::to_string(x.size()) + " / bias " +
                         std::to_string(b.size()));
  Tensor y({w.rows()});
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.row_ptr(r);
    double acc = b[r];
    for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
    y[r] = apply_activation(acc, act);
  }
  return y;
}

Tensor softmax(const Tensor& logits) {
  require_shape(logits, 1, "softmax input");
  Tensor probs({logits.size()});
  const double max_logit = *std::max_element(logits.data.begin(), logits.data.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    total += probs[i];
  }
  for (double& p : probs.data) p /= total;
  return probs;
}

SoftmaxXent softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (label >= logits.size())
    throw IndexError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(logits.size()) +
                     " classes");
  SoftmaxXent out;
  out.probs = softmax(logits);
  // -log(probs[label]) via the shifted logits to avoid log of a denormal.
  const double max_logit = *std::max_element(logits.data.begin(), logits.data.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    total += std::exp(logits[i] - max_logit);
  out.loss = std::log(total) - (logits[label] - max_logit);
  return out;
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, std::size_t label) {
  if (label >= probs.size())
    throw IndexError("softmax_cross_entropy_grad: label out of range");
  Tensor g = probs;
  g[label] -= 1.0;
  return g;
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng,
               DropoutCache* cache) {
  if (p < 0.0 || p >= 1.0)
    throw ParameterError("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (mode == Mode::eval) {
    if (cache) cache->mask.assign(x.size(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor y = x;
  if (cache) cache->mask.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double factor = rng.bernoulli(p) ? 0.0 : keep_scale;
    y[i] *= factor;
    if (cache) cache->mask[i] = factor;
  }
  return y;
}

Tensor dropout_backward(const Tensor& dy, const DropoutCache& cache) {
  if (dy.size() != cache.mask.size())
    throw DimensionError("dropout_backward: gradient does not match mask");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= cache.mask[i];
  return dx;
}

Tensor mean_max_pool(const Tensor& h_seq, PoolCache* cache) {
  require_shape(h_seq, 2, "mean_max_pool input");
  const std::size_t steps = h_seq.rows();
  const std::size_t width = h_seq.cols();
  if (steps == 0) throw EmptyInputError("mean_max_pool: empty sequence");
  Tensor out({2 * width});
  if (cache) {
    cache->steps = steps;
    cache->width = width;
    cache->argmax.assign(width, 0);
  }
  for (std::size_t c = 0; c < width; ++c) {
    double sum = 0.0;
    double best = h_seq.at(0, c);
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double v = h_seq.at(t, c);
      sum += v;
      if (v > best) {
        best = v;
        best_t = t;
      }
    }
    out[c] = sum / static_cast<double>(steps);
    out[width + c] = best;
    if (cache) cache->argmax[c] = best_t;
  }
  return out;
}

Tensor mean_max_pool_backward(const Tensor& dy, const PoolCache& cache) {
  if (dy.size() != 2 * cache.width)
    throw DimensionError("mean_max_pool_backward: gradient width mismatch");
  Tensor dh({cache.steps, cache.width});
  const double inv_steps = 1.0 / static_cast<double>(cache.steps);
  for (std::size_t c = 0; c < cache.width; ++c) {
    const double dmean = dy[c] * inv_steps;
    for (std::size_t t = 0; t < cache.steps; ++t) dh.at(t, c) += dmean;
    dh.at(cache.argmax[c], c) += dy[cache.width + c];
  }
  return dh;
}

// ---------------------------------------------------------------------------
// Dense layer

Dense::Dense(const std::string& name, std::size_t n_in, std::size_t n_out,
             Activation act, Rng& rng)
    : activation(act) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
  weight = Parameter(name + ".weight", uniform_tensor({n_out, n_in}, bound, rng));
  bias = Parameter(name + ".bias", uniform_tensor({n_out}, bound, rng));
}

Tensor Dense::forward(const Tensor& x, DenseCache* cache) const {
  if (cache == nullptr) return dense_forward(x, weight.value, bias.value, activation);
  cache->input = x;
  require_shape(x, 1, "Dense::forward input");
  const Tensor& w = weight.value;
  if (w.cols() != x.size())
    throw DimensionError("Dense::forward: input width " + std::to_string(x.size()) +
                         " does not match layer " + std::to_string(w.cols()));
  cache->pre_activation = Tensor({w.rows()});
  Tensor y({w.rows()});
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.row_ptr(r);
    double acc = bias.value[r];
    for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
    cache->pre_activation[r] = acc;
    y[r] = apply_activation(acc, activation);
  }
  return y;
}

Tensor Dense::backward(const Tensor& dy, const DenseCache& cache) {
  const Tensor& w = weight.value;
  if (dy.size() != w.rows())
    throw DimensionError("Dense::backward: gradient width mismatch");
  Tensor dx({w.cols()});
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double dpre = dy[r] * activation_grad(cache.pre_activation[r], activation);
    bias.grad[r] += dpre;
    const double* x = cache.input.data.data();
    double* gw = weight.grad.row_ptr(r);
    const double* wr = w.row_ptr(r);
    for (std::size_t c = 0; c < w.cols(); ++c) {
      gw[c] += dpre * x[c];
      dx[c] += dpre * wr[c];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM

BiLstm::BiLstm(const std::string& name, std::size_t in_dim,
               std::size_t hidden_dim, Rng& rng)
    : input_dim(in_dim), hidden(hidden_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  auto init_direction = [&](LstmDirection& dir, const std::string& tag) {
    dir.wx = Parameter(name + "." + tag + ".wx",
                       uniform_tensor({4 * hidden_dim, in_dim}, bound, rng));
    dir.wh = Parameter(name + "." + tag + ".wh",
                       uniform_tensor({4 * hidden_dim, hidden_dim}, bound, rng));
    dir.b = Parameter(name + "." + tag + ".b",
                      uniform_tensor({4 * hidden_dim}, bound, rng));
    // Forget-gate bias starts at +1 so early training does not wipe the cell.
    for (std::size_t i = hidden_dim; i < 2 * hidden_dim; ++i) dir.b.value[i] = 1.0;
  };
  init_direction(fwd, "fwd");
  init_direction(bwd, "bwd");
}

namespace {

// Runs one direction over x_seq rows in the order given by `order`, writing
// gate activations into the cache when present.
void run_direction(const LstmDirection& dir, const Tensor& x_seq,
                   const std::vector<std::size_t>& order, std::size_t hidden,
                   LstmDirectionCache* cache, Tensor& h_out,
                   std::size_t out_col_offset) {
  const std::size_t steps = order.size();
  const std::size_t in_dim = x_seq.cols();
  std::vector<double> h_prev(hidden, 0.0), c_prev(hidden, 0.0);
  std::vector<double> z(4 * hidden);

  if (cache) {
    auto shape = std::vector<std::size_t>{steps, hidden};
    cache->gate_i = Tensor(shape);
    cache->gate_f = Tensor(shape);
    cache->gate_g = Tensor(shape);
    cache->gate_o = Tensor(shape);
    cache->cell = Tensor(shape);
    cache->tanh_cell = Tensor(shape);
    cache->hidden_states = Tensor(shape);
  }

  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t t = order[step];
    const double* x = x_seq.row_ptr(t);
    for (std::size_t r = 0; r < 4 * hidden; ++r) {
      double acc = dir.b.value[r];
      const double* wx = dir.wx.value.row_ptr(r);
      for (std::size_t c = 0; c < in_dim; ++c) acc += wx[c] * x[c];
      const double* wh = dir.wh.value.row_ptr(r);
      for (std::size_t c = 0; c < hidden; ++c) acc += wh[c] * h_prev[c];
      z[r] = acc;
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      const double gi = sigmoid(z[j]);
      const double gf = sigmoid(z[hidden + j]);
      const double gg = std::tanh(z[2 * hidden + j]);
      const double go = sigmoid(z[3 * hidden + j]);
      const double c_new = gf * c_prev[j] + gi * gg;
      const double tc = std::tanh(c_new);
      const double h_new = go * tc;
      if (cache) {
        cache->gate_i.at(step, j) = gi;
        cache->gate_f.at(step, j) = gf;
        cache->gate_g.at(step, j) = gg;
        cache->gate_o.at(step, j) = go;
        cache->cell.at(step, j) = c_new;
        cache->tanh_cell.at(step, j) = tc;
        cache->hidden_states.at(step, j) = h_new;
      }
      c_prev[j] = c_new;
      h_prev[j] = h_new;
      h_out.at(t, out_col_offset + j) = h_new;
    }
  }
}

// BPTT for one direction. dh_seq is [T x 2h]; this direction reads its half.
void backprop_direction(LstmDirection& dir, const Tensor& x_seq,
                        const std::vector<std::size_t>& order,
                        std::size_t hidden, const LstmDirectionCache& cache,
                        const Tensor& dh_seq, std::size_t col_offset,
                        Tensor& dx_seq) {
  const std::size_t steps = order.size();
  const std::size_t in_dim = x_seq.cols();
  std::vector<double> dh_next(hidden, 0.0), dc_next(hidden, 0.0);
  std::vector<double> dz(4 * hidden);

  for (std::size_t step = steps; step-- > 0;) {
    const std::size_t t = order[step];
    for (std::size_t j = 0; j < hidden; ++j) {
      const double gi = cache.gate_i.at(step, j);
      const double gf = cache.gate_f.at(step, j);
      const double gg = cache.gate_g.at(step, j);
      const double go = cache.gate_o.at(step, j);
      const double tc = cache.tanh_cell.at(step, j);
      const double c_prev =
          step == 0 ? 0.0 : cache.cell.at(step - 1, j);

      const double dh = dh_seq.at(t, col_offset + j) + dh_next[j];
      const double dgo = dh * tc;
      double dc = dh * go * (1.0 - tc * tc) + dc_next[j];
      const double dgi = dc * gg;
      const double dgg = dc * gi;
      const double dgf = dc * c_prev;
      dc_next[j] = dc * gf;

      dz[j] = dgi * gi * (1.0 - gi);
      dz[hidden + j] = dgf * gf * (1.0 - gf);
      dz[2 * hidden + j] = dgg * (1.0 - gg * gg);
      dz[3 * hidden + j] = dgo * go * (1.0 - go);
      dh_next[j] = 0.0;  // rebuilt below from wh
    }

    const double* x = x_seq.row_ptr(t);
    double* dx = dx_seq.row_ptr(t);
    for (std::size_t r = 0; r < 4 * hidden; ++r) {
      const double d = dz[r];
      dir.b.grad[r] += d;
      double* gwx = dir.wx.grad.row_ptr(r);
      const double* wx = dir.wx.value.row_ptr(r);
      for (std::size_t c = 0; c < in_dim; ++c) {
        gwx[c] += d * x[c];
        dx[c] += d * wx[c];
      }
      double* gwh = dir.wh.grad.row_ptr(r);
      const double* wh = dir.wh.value.row_ptr(r);
      if (step > 0) {
        for (std::size_t c = 0; c < hidden; ++c) {
          gwh[c] += d * cache.hidden_states.at(step - 1, c);
          dh_next[c] += d * wh[c];
        }
      }
    }
  }
}

std::vector<std::size_t> forward_order(std::size_t steps) {
  std::vector<std::size_t> order(steps);
  for (std::size_t t = 0; t < steps; ++t) order[t] = t;
  return order;
}

std::vector<std::size_t> backward_order(std::size_t steps) {
  std::vector<std::size_t> order(steps);
  for (std::size_t t = 0; t < steps; ++t) order[t] = steps - 1 - t;
  return order;
}

}  // namespace

Tensor BiLstm::forward(const Tensor& x_seq, BiLstmCache* cache) const {
  require_shape(x_seq, 2, "BiLstm::forward input");
  if (x_seq.rows() == 0) throw EmptyInputError("BiLstm::forward: empty sequence");
  if (x_seq.cols() != input_dim)
    throw DimensionError("BiLstm::forward: input width " +
                         std::to_string(x_seq.cols()) + " != " +
                         std::to_string(input_dim));
  const std::size_t steps = x_seq.rows();
  Tensor h_out({steps, 2 * hidden});
  if (cache) cache->input = x_seq;
  run_direction(fwd, x_seq, forward_order(steps), hidden,
                cache ? &cache->fwd : nullptr, h_out, 0);
  run_direction(bwd, x_seq, backward_order(steps), hidden,
                cache ? &cache->bwd : nullptr, h_out, hidden);
  return h_out;
}

Tensor BiLstm::backward(const Tensor& dh_seq, const BiLstmCache& cache) {
  const std::size_t steps = cache.input.rows();
  if (dh_seq.rows() != steps || dh_seq.cols() != 2 * hidden)
    throw DimensionError("BiLstm::backward: gradient shape mismatch");
  Tensor dx({steps, input_dim});
  backprop_direction(fwd, cache.input, forward_order(steps), hidden, cache.fwd,
                     dh_seq, 0, dx);
  backprop_direction(bwd, cache.input, backward_order(steps), hidden, cache.bwd,
                     dh_seq, hidden, dx);
  return dx;
}

std::vector<Parameter*> BiLstm::params() {
  return {&fwd.wx, &fwd.wh, &fwd.b, &bwd.wx, &bwd.wh, &bwd.b};
}

// ---------------------------------------------------------------------------
// Gradient checking

double grad_check(const std::function<double(bool)>& loss_fn,
                  const std::vector<Parameter*>& params,
                  const GradCheckOptions& opts) {
  for (Parameter* p : params) p->zero_grad();
  loss_fn(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);
  for (Parameter* p : params) p->zero_grad();

  const double f0 = loss_fn(false);
  // Central differences cannot resolve gradients below roughly
  // eps * |f| / h; coordinates under this floor are round-off, not signal.
  const double resolution_floor =
      3e5 * 2.220446049250313e-16 * (1.0 + std::abs(f0)) / opts.step;

  Rng rng(opts.seed);
  double max_rel_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords;
    if (n <= opts.max_coords_per_param) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      coords.reserve(opts.max_coords_per_param);
      for (std::size_t i = 0; i < opts.max_coords_per_param; ++i)
        coords.push_back(static_cast<std::size_t>(rng.below(n)));
    }
    for (std::size_t c : coords) {
      const double saved = p->value[c];
      auto numeric_at = [&](double h) {
        p->value[c] = saved + h;
        const double up = loss_fn(false);
        p->value[c] = saved - h;
        const double down = loss_fn(false);
        p->value[c] = saved;
        return (up - down) / (2.0 * h);
      };
      const double numeric = numeric_at(opts.step);
      const double numeric_half = numeric_at(0.5 * opts.step);
      const double a = analytic[pi][c];

      const double scale = std::max({std::abs(a), std::abs(numeric), resolution_floor});
      // Two step sizes agreeing means the numeric estimate is trustworthy;
      // a relu/max kink inside the probed interval makes them diverge, and
      // such coordinates cannot be validated by finite differences at all.
      if (std::abs(numeric - numeric_half) > 0.1 * scale) continue;
      if (std::max(std::abs(a), std::abs(numeric)) < resolution_floor) continue;

      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      max_rel_err = std::max(max_rel_err, rel);
    }
  }
  return max_rel_err;
}

}  // namespace skimread::nn
