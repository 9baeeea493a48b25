#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rit/io.hpp"
#include "rit/rng.hpp"

namespace rit::nn {

inline constexpr double kParamFloor = 1e-4;  // lower bound on survival-head outputs

enum class Head {
  kSurvival,    // two outputs through softplus + floor: (scale, shape)
  kClassifier,  // one output through a sigmoid
};

inline int head_dim(Head h) { return h == Head::kSurvival ? 2 : 1; }

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Metadata a trained forecasting model carries with it.
struct ModelMeta {
  int history_len = 0;   // T_H the features were built with
  int forecast_window = 0;
  double alpha = 0.0;    // threshold the model was tuned for
  int horizon = 0;       // episode limit T used for time normalization
  bool use_time = true;  // whether the time slot of the feature vector is live
};

// Fully-connected network with rectifier hidden layers. Inputs are
// standardized by the training-set mean/std stored with the model.
struct MlpModel {
  int input_dim = 0;
  std::vector<int> hidden;
  Head head = Head::kClassifier;
  // weights[l] is (out x in), row-major
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<double> feat_mean, feat_std;
  ModelMeta meta;

  int output_dim() const { return head_dim(head); }
  int layer_count() const { return static_cast<int>(weights.size()); }

  int layer_in(int l) const { return l == 0 ? input_dim : hidden[l - 1]; }
  int layer_out(int l) const {
    return l + 1 == layer_count() ? output_dim() : hidden[l];
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < layer_count(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
};

inline MlpModel make_mlp(int input_dim, std::vector<int> hidden, Head head) {
  if (input_dim < 1) throw std::invalid_argument("make_mlp: input_dim must be >= 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("make_mlp: hidden widths must be >= 1");
  MlpModel m;
  m.input_dim = input_dim;
  m.hidden = std::move(hidden);
  m.head = head;
  const int layers = static_cast<int>(m.hidden.size()) + 1;
  m.weights.resize(layers);
  m.biases.resize(layers);
  for (int l = 0; l < layers; ++l) {
    m.weights[l].assign(static_cast<std::size_t>(m.layer_out(l)) * m.layer_in(l), 0.0);
    m.biases[l].assign(m.layer_out(l), 0.0);
  }
  m.feat_mean.assign(input_dim, 0.0);
  m.feat_std.assign(input_dim, 1.0);
  return m;
}

// Uniform fan-based initialization.
inline void init_params(MlpModel& m, Rng& rng) {
  for (int l = 0; l < m.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / (m.layer_in(l) + m.layer_out(l)));
    for (auto& w : m.weights[l]) w = rng.symmetric(bound);
    for (auto& b : m.biases[l]) b = 0.0;
  }
}

// All per-layer activations of one forward pass; reused across samples.
struct Workspace {
  std::vector<std::vector<double>> act;  // act[0] = standardized input
  std::vector<std::vector<double>> pre;  // pre[l] = W act + b for layer l
};

inline void forward_raw(const MlpModel& m, std::span<const double> x, Workspace& ws) {
  if (static_cast<int>(x.size()) != m.input_dim)
    throw std::invalid_argument("forward: feature dimension does not match the model");
  const int layers = m.layer_count();
  ws.act.resize(layers + 1);
  ws.pre.resize(layers);
  ws.act[0].resize(m.input_dim);
  for (int i = 0; i < m.input_dim; ++i)
    ws.act[0][i] = (x[i] - m.feat_mean[i]) / m.feat_std[i];
  for (int l = 0; l < layers; ++l) {
    const int in = m.layer_in(l), out = m.layer_out(l);
    ws.pre[l].assign(out, 0.0);
    const double* W = m.weights[l].data();
    const double* a = ws.act[l].data();
    for (int o = 0; o < out; ++o) {
      double s = m.biases[l][o];
      const double* row = W + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) s += row[i] * a[i];
      ws.pre[l][o] = s;
    }
    if (l + 1 < layers) {
      ws.act[l + 1].resize(out);
      for (int o = 0; o < out; ++o) ws.act[l + 1][o] = std::max(0.0, ws.pre[l][o]);
    } else {
      ws.act[l + 1] = ws.pre[l];  // linear output, head applied separately
    }
  }
}

inline void apply_head(Head head, std::span<const double> pre, std::span<double> out) {
  if (head == Head::kSurvival) {
    out[0] = softplus(pre[0]) + kParamFloor;
    out[1] = softplus(pre[1]) + kParamFloor;
  } else {
    out[0] = sigmoid(pre[0]);
  }
}

inline std::vector<double> forward(const MlpModel& m, std::span<const double> x) {
  Workspace ws;
  forward_raw(m, x, ws);
  std::vector<double> out(m.output_dim());
  apply_head(m.head, ws.pre.back(), out);
  for (double v : out)
    if (!std::isfinite(v)) throw std::runtime_error("forward: non-finite output");
  return out;
}

// Loss evaluation at one sample: the value plus its derivative with respect
// to the pre-activation outputs of the network.
struct LossEval {
  double value = 0.0;
  std::array<double, 2> dpre{0.0, 0.0};
};

struct Gradients {
  std::vector<std::vector<double>> dw, db;
  double mean_loss = 0.0;
};

inline Gradients zero_gradients(const MlpModel& m) {
  Gradients g;
  g.dw.resize(m.layer_count());
  g.db.resize(m.layer_count());
  for (int l = 0; l < m.layer_count(); ++l) {
    g.dw[l].assign(m.weights[l].size(), 0.0);
    g.db[l].assign(m.biases[l].size(), 0.0);
  }
  return g;
}

// Adds un-normalized per-sample gradients of `batch` into `g`.
template <class Sample, class LossFn>
void accumulate_gradient(const MlpModel& m, std::span<const Sample> batch, LossFn&& loss,
                         Gradients& g) {
  Workspace ws;
  const int layers = m.layer_count();
  std::vector<std::vector<double>> delta(layers);
  std::vector<double> out(m.output_dim());
  for (const Sample& s : batch) {
    forward_raw(m, s.features, ws);
    apply_head(m.head, ws.pre.back(), out);
    const LossEval le = loss(std::span<const double>(out), std::span<const double>(ws.pre.back()),
                             s);
    if (!std::isfinite(le.value)) {
      std::ostringstream os;
      os << "gradient: non-finite loss (" << le.value << ")";
      throw std::runtime_error(os.str());
    }
    g.mean_loss += le.value;
    delta[layers - 1].assign(le.dpre.begin(), le.dpre.begin() + m.output_dim());
    for (int l = layers - 1; l >= 0; --l) {
      const int in = m.layer_in(l), out_d = m.layer_out(l);
      double* dW = g.dw[l].data();
      const double* a = ws.act[l].data();
      for (int o = 0; o < out_d; ++o) {
        const double d = delta[l][o];
        if (d == 0.0) continue;
        double* row = dW + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) row[i] += d * a[i];
        g.db[l][o] += d;
      }
      if (l > 0) {
        delta[l - 1].assign(in, 0.0);
        const double* W = m.weights[l].data();
        for (int o = 0; o < out_d; ++o) {
          const double d = delta[l][o];
          if (d == 0.0) continue;
          const double* row = W + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) delta[l - 1][i] += d * row[i];
        }
        for (int i = 0; i < in; ++i)
          if (ws.pre[l - 1][i] <= 0.0) delta[l - 1][i] = 0.0;
      }
    }
  }
}

// Analytic gradient of the mean loss over the batch. LossFn is called as
// loss(activated_outputs, pre_activation_outputs, sample) -> LossEval.
template <class Sample, class LossFn>
Gradients gradient(const MlpModel& m, std::span<const Sample> batch, LossFn&& loss) {
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  Gradients g = zero_gradients(m);
  accumulate_gradient(m, batch, loss, g);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& layer : g.dw)
    for (auto& v : layer) v *= inv;
  for (auto& layer : g.db)
    for (auto& v : layer) v *= inv;
  g.mean_loss *= inv;
  return g;
}

struct TrainParams {
  double lr = 1e-3;
  int epochs = 20;
  int batch_size = 256;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
};

struct TrainResult {
  // epoch_loss[0] is the loss before any update; one entry per epoch after.
  std::vector<double> epoch_loss;
  double initial_loss() const { return epoch_loss.front(); }
  double final_loss() const { return epoch_loss.back(); }
};

template <class Sample, class LossFn>
double mean_loss(const MlpModel& m, std::span<const Sample> data, LossFn&& loss) {
  Workspace ws;
  std::vector<double> out(m.output_dim());
  double total = 0.0;
  for (const Sample& s : data) {
    forward_raw(m, s.features, ws);
    apply_head(m.head, ws.pre.back(), out);
    total += loss(std::span<const double>(out), std::span<const double>(ws.pre.back()), s).value;
  }
  return total / static_cast<double>(data.size());
}

// Minibatch Adam. Deterministic given (model, data order, params). The
// returned model carries the parameters of the best epoch by training loss,
// so the final loss never exceeds the initial one.
template <class Sample, class LossFn>
TrainResult optimize(MlpModel& m, std::vector<Sample> data, LossFn&& loss, const TrainParams& hp) {
  if (data.empty()) throw std::invalid_argument("optimize: empty dataset");
  if (hp.epochs < 0 || hp.batch_size < 1) throw std::invalid_argument("optimize: bad params");
  Rng rng(hp.seed);

  std::vector<std::vector<double>> mw(m.layer_count()), vw(m.layer_count());
  std::vector<std::vector<double>> mb(m.layer_count()), vb(m.layer_count());
  for (int l = 0; l < m.layer_count(); ++l) {
    mw[l].assign(m.weights[l].size(), 0.0);
    vw[l].assign(m.weights[l].size(), 0.0);
    mb[l].assign(m.biases[l].size(), 0.0);
    vb[l].assign(m.biases[l].size(), 0.0);
  }

  TrainResult result;
  result.epoch_loss.push_back(mean_loss(m, std::span<const Sample>(data), loss));
  if (!std::isfinite(result.epoch_loss.back()))
    throw std::runtime_error("optimize: initial loss is not finite");

  auto best_w = m.weights;
  auto best_b = m.biases;
  double best = result.epoch_loss.front();

  long step = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    // Fisher-Yates with our own stream; std::shuffle is not portable
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.next_below(i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_total = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t bsz = std::min<std::size_t>(hp.batch_size, order.size() - done);
      batch.clear();
      for (std::size_t k = 0; k < bsz; ++k) batch.push_back(data[order[done + k]]);
      done += bsz;
      Gradients g = zero_gradients(m);
      accumulate_gradient(m, std::span<const Sample>(batch), loss, g);
      epoch_total += g.mean_loss;
      const double inv = 1.0 / static_cast<double>(bsz);
      ++step;
      const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
      for (int l = 0; l < m.layer_count(); ++l) {
        for (std::size_t i = 0; i < m.weights[l].size(); ++i) {
          const double gr = g.dw[l][i] * inv;
          mw[l][i] = hp.beta1 * mw[l][i] + (1.0 - hp.beta1) * gr;
          vw[l][i] = hp.beta2 * vw[l][i] + (1.0 - hp.beta2) * gr * gr;
          m.weights[l][i] -= hp.lr * (mw[l][i] / c1) / (std::sqrt(vw[l][i] / c2) + hp.eps);
        }
        for (std::size_t i = 0; i < m.biases[l].size(); ++i) {
          const double gr = g.db[l][i] * inv;
          mb[l][i] = hp.beta1 * mb[l][i] + (1.0 - hp.beta1) * gr;
          vb[l][i] = hp.beta2 * vb[l][i] + (1.0 - hp.beta2) * gr * gr;
          m.biases[l][i] -= hp.lr * (mb[l][i] / c1) / (std::sqrt(vb[l][i] / c2) + hp.eps);
        }
      }
    }
    const double epoch_mean = epoch_total / static_cast<double>(order.size());
    if (!std::isfinite(epoch_mean))
      throw std::runtime_error("optimize: training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));
    result.epoch_loss.push_back(epoch_mean);
    if (epoch_mean < best) {
      best = epoch_mean;
      best_w = m.weights;
      best_b = m.biases;
    }
  }
  m.weights = std::move(best_w);
  m.biases = std::move(best_b);
  return result;
}

inline std::string head_name(Head h) { return h == Head::kSurvival ? "survival" : "classifier"; }

inline Head head_from_name(const std::string& s) {
  if (s == "survival") return Head::kSurvival;
  if (s == "classifier") return Head::kClassifier;
  throw std::runtime_error("unknown head type: " + s);
}

// Self-describing text format: shapes, parameters, normalization stats and
// the monitor metadata the model was trained with.
inline std::string serialize_model(const MlpModel& m) {
  std::ostringstream os;
  os << "rit-mlp 1\n";
  os << "head " << head_name(m.head) << "\n";
  os << "input_dim " << m.input_dim << "\n";
  os << "hidden";
  for (int h : m.hidden) os << " " << h;
  os << "\n";
  os << "history_len " << m.meta.history_len << "\n";
  os << "forecast_window " << m.meta.forecast_window << "\n";
  os << "alpha " << fmt_g(m.meta.alpha) << "\n";
  os << "horizon " << m.meta.horizon << "\n";
  os << "use_time " << (m.meta.use_time ? 1 : 0) << "\n";
  auto put_vec = [&os](const char* tag, const std::vector<double>& v) {
    os << tag;
    for (double x : v) os << " " << fmt_g(x);
    os << "\n";
  };
  put_vec("feat_mean", m.feat_mean);
  put_vec("feat_std", m.feat_std);
  for (int l = 0; l < m.layer_count(); ++l) {
    os << "layer " << l << " " << m.layer_out(l) << " " << m.layer_in(l) << "\n";
    put_vec("w", m.weights[l]);
    put_vec("b", m.biases[l]);
  }
  os << "end\n";
  return os.str();
}

inline MlpModel deserialize_model(const std::string& text) {
  std::istringstream is(text);
  std::string tag;
  int version = 0;
  is >> tag >> version;
  if (tag != "rit-mlp" || version != 1) throw std::runtime_error("not a rit-mlp v1 model file");
  MlpModel m;
  std::string head_s;
  is >> tag >> head_s;
  if (tag != "head") throw std::runtime_error("model file: expected 'head'");
  m.head = head_from_name(head_s);
  is >> tag >> m.input_dim;
  if (tag != "input_dim") throw std::runtime_error("model file: expected 'input_dim'");
  is >> tag;
  if (tag != "hidden") throw std::runtime_error("model file: expected 'hidden'");
  {
    std::string rest;
    std::getline(is, rest);
    std::istringstream hs(rest);
    int h;
    while (hs >> h) m.hidden.push_back(h);
  }
  auto read_kv_int = [&is](const char* key) {
    std::string k;
    long long v;
    is >> k >> v;
    if (k != key) throw std::runtime_error(std::string("model file: expected '") + key + "'");
    return v;
  };
  m.meta.history_len = static_cast<int>(read_kv_int("history_len"));
  m.meta.forecast_window = static_cast<int>(read_kv_int("forecast_window"));
  {
    std::string k;
    is >> k >> m.meta.alpha;
    if (k != "alpha") throw std::runtime_error("model file: expected 'alpha'");
  }
  m.meta.horizon = static_cast<int>(read_kv_int("horizon"));
  m.meta.use_time = read_kv_int("use_time") != 0;

  MlpModel shaped = make_mlp(m.input_dim, m.hidden, m.head);
  shaped.meta = m.meta;
  auto read_vec = [&is](const char* key, std::vector<double>& v) {
    std::string k;
    is >> k;
    if (k != key) throw std::runtime_error(std::string("model file: expected '") + key + "'");
    for (auto& x : v)
      if (!(is >> x)) throw std::runtime_error("model file: truncated vector");
  };
  read_vec("feat_mean", shaped.feat_mean);
  read_vec("feat_std", shaped.feat_std);
  for (int l = 0; l < shaped.layer_count(); ++l) {
    std::string k;
    int idx, rows, cols;
    is >> k >> idx >> rows >> cols;
    if (k != "layer" || idx != l || rows != shaped.layer_out(l) || cols != shaped.layer_in(l))
      throw std::runtime_error("model file: layer header mismatch");
    read_vec("w", shaped.weights[l]);
    read_vec("b", shaped.biases[l]);
  }
  std::string end_tag;
  is >> end_tag;
  if (end_tag != "end") throw std::runtime_error("model file: missing end marker");
  return shaped;
}

// Smallest |pre-activation| across the hidden rectifier units of a batch.
// The loss is not differentiable at a rectifier kink, so finite-difference
// verification is only meaningful when this clears the probe step size.
template <class Sample>
double min_hidden_preactivation(const MlpModel& m, std::span<const Sample> batch) {
  Workspace ws;
  double lo = std::numeric_limits<double>::infinity();
  for (const Sample& s : batch) {
    forward_raw(m, s.features, ws);
    for (int l = 0; l + 1 < m.layer_count(); ++l)
      for (double v : ws.pre[l]) lo = std::min(lo, std::abs(v));
  }
  return lo;
}

// Central finite differences over every parameter; the independent check for
// the analytic gradients.
template <class Sample, class LossFn>
Gradients numeric_gradient(const MlpModel& model, std::span<const Sample> batch, LossFn&& loss,
                           double h = 1e-5) {
  MlpModel m = model;
  Gradients g = zero_gradients(m);
  auto probe = [&](double& param, double& slot) {
    const double saved = param;
    param = saved + h;
    const double up = mean_loss(m, batch, loss);
    param = saved - h;
    const double dn = mean_loss(m, batch, loss);
    param = saved;
    slot = (up - dn) / (2.0 * h);
  };
  for (int l = 0; l < m.layer_count(); ++l) {
    for (std::size_t i = 0; i < m.weights[l].size(); ++i) probe(m.weights[l][i], g.dw[l][i]);
    for (std::size_t i = 0; i < m.biases[l].size(); ++i) probe(m.biases[l][i], g.db[l][i]);
  }
  g.mean_loss = mean_loss(m, batch, loss);
  return g;
}

}  // namespace rit::nn
