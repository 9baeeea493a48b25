#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rit/io.hpp"
#include "rit/nn.hpp"
#include "rit/policy.hpp"
#include "rit/pose.hpp"
#include "rit/rng.hpp"

namespace rit::forecasting {

inline constexpr int kPoseDims = 4;  // x, y, z, yaw per observation

inline int feature_dim(int history_len) { return kPoseDims * history_len + 1; }

// Feature vector at step t: the last history_len relative-pose observations
// flattened earliest-first, front-padded with the earliest available
// observation when the episode is younger than the window, plus normalized
// time t/T in the final slot (zeroed when use_time is off).
inline std::vector<double> build_features(std::span<const PlanarPose> window, int t, int horizon,
                                          int history_len, bool use_time) {
  if (window.empty()) throw std::invalid_argument("build_features: empty window");
  if (history_len < 1) throw std::invalid_argument("build_features: history_len must be >= 1");
  std::vector<double> f;
  f.reserve(feature_dim(history_len));
  const int have = static_cast<int>(window.size());
  const int take = std::min(have, history_len);
  const int pad = history_len - take;
  const PlanarPose& first = window[window.size() - take];
  for (int i = 0; i < pad; ++i) {
    f.push_back(first.x);
    f.push_back(first.y);
    f.push_back(first.z);
    f.push_back(first.yaw);
  }
  for (int i = have - take; i < have; ++i) {
    f.push_back(window[i].x);
    f.push_back(window[i].y);
    f.push_back(window[i].z);
    f.push_back(window[i].yaw);
  }
  f.push_back(use_time ? static_cast<double>(t) / static_cast<double>(horizon) : 0.0);
  return f;
}

struct LabeledSample {
  std::vector<double> features;
  int success_time = 0;   // T; set to the horizon when the episode failed
  bool censored = false;  // true iff the episode failed
  bool label() const { return !censored; }
};

// One sample per (episode, step). Windows are rebuilt from the logged
// observations, so they match what a monitor would have seen online.
inline std::vector<LabeledSample> build_dataset(std::span<const Trajectory> trajectories,
                                                int horizon, int history_len,
                                                bool use_time = true) {
  if (trajectories.empty()) throw std::invalid_argument("build_dataset: no trajectories");
  std::vector<LabeledSample> out;
  std::vector<PlanarPose> obs;
  for (const Trajectory& traj : trajectories) {
    if (traj.steps.empty()) throw std::invalid_argument("build_dataset: empty trajectory");
    obs.clear();
    for (const StepRecord& s : traj.steps) obs.push_back(s.rel_pose);
    for (std::size_t t = 0; t < obs.size(); ++t) {
      const std::size_t lo = t + 1 >= static_cast<std::size_t>(history_len)
                                 ? t + 1 - static_cast<std::size_t>(history_len)
                                 : 0;
      LabeledSample s;
      s.features = build_features(std::span<const PlanarPose>(obs.data() + lo, t - lo + 1),
                                  static_cast<int>(t), horizon, history_len, use_time);
      s.success_time = traj.outcome.success_time;
      s.censored = !traj.outcome.success;
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time-Only model: empirical probability that an episode still running at t
// succeeds by the horizon.

struct TimeOnlyTable {
  int horizon = 0;
  std::vector<std::int64_t> alive;      // episodes with a sub-trajectory starting at t
  std::vector<std::int64_t> succeeded;  // of those, how many succeed by the horizon

  // nullopt marks time steps where no episode was alive (no data, no claim)
  std::optional<double> prob(int t) const {
    if (t < 0 || t > horizon) throw std::out_of_range("TimeOnlyTable: t outside [0, T]");
    if (alive[t] == 0) return std::nullopt;
    return static_cast<double>(succeeded[t]) / static_cast<double>(alive[t]);
  }
};

inline TimeOnlyTable fit_time_only(std::span<const Outcome> outcomes, int horizon) {
  if (outcomes.empty()) throw std::invalid_argument("fit_time_only: no trajectories");
  if (horizon < 1) throw std::invalid_argument("fit_time_only: horizon must be >= 1");
  TimeOnlyTable table;
  table.horizon = horizon;
  table.alive.assign(horizon + 1, 0);
  table.succeeded.assign(horizon + 1, 0);
  for (const Outcome& o : outcomes) {
    // a successful episode is alive up to its success time, a failed one for
    // the whole horizon
    const int last = o.success ? o.success_time : horizon;
    for (int t = 0; t <= last; ++t) {
      ++table.alive[t];
      if (o.success) ++table.succeeded[t];
    }
  }
  return table;
}

inline TimeOnlyTable fit_time_only(std::span<const Trajectory> trajectories, int horizon) {
  std::vector<Outcome> outcomes;
  outcomes.reserve(trajectories.size());
  for (const auto& t : trajectories) outcomes.push_back(t.outcome);
  return fit_time_only(std::span<const Outcome>(outcomes), horizon);
}

inline std::optional<double> predict_time_only(const TimeOnlyTable& table, int t) {
  return table.prob(t);
}

inline std::string serialize_time_only(const TimeOnlyTable& table) {
  std::ostringstream os;
  os << "t,alive,succeeded,p\n";
  for (int t = 0; t <= table.horizon; ++t) {
    os << t << "," << table.alive[t] << "," << table.succeeded[t] << ",";
    const auto p = table.prob(t);
    os << (p ? fmt_g(*p) : std::string("na")) << "\n";
  }
  return os.str();
}

inline TimeOnlyTable deserialize_time_only(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || trim(line) != "t,alive,succeeded,p")
    throw std::runtime_error("not a time-only table file");
  TimeOnlyTable table;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 4) throw std::runtime_error("time-only table: bad row: " + line);
    table.alive.push_back(parse_int(cols[1]));
    table.succeeded.push_back(parse_int(cols[2]));
  }
  if (table.alive.empty()) throw std::runtime_error("time-only table: empty");
  table.horizon = static_cast<int>(table.alive.size()) - 1;
  return table;
}

// ---------------------------------------------------------------------------
// Weibull survival machinery.

// S(tau) = exp(-(tau/lambda)^rho): probability that the success event has not
// happened by tau.
inline double weibull_survival(double tau, double lambda, double rho) {
  if (!(lambda > 0.0) || !(rho > 0.0))
    throw std::invalid_argument("weibull_survival: lambda and rho must be > 0");
  if (tau < 0.0) throw std::invalid_argument("weibull_survival: tau must be >= 0");
  return std::exp(-std::pow(tau / lambda, rho));
}

// Negative log likelihood of one (possibly right-censored) success time.
//  uncensored: -[ln rho - ln lambda + (rho-1) ln(T_S/lambda) - (T_S/lambda)^rho]
//  censored:   (T_S/lambda)^rho
inline double censored_weibull_nll(double lambda, double rho, double success_time, bool censored) {
  if (!(lambda > 0.0) || !(rho > 0.0))
    throw std::invalid_argument("censored_weibull_nll: lambda and rho must be > 0");
  if (!(success_time > 0.0))
    throw std::invalid_argument("censored_weibull_nll: success time must be > 0");
  const double log_u = std::log(success_time / lambda);
  const double pow_u = std::exp(rho * log_u);
  double loss;
  if (censored) {
    loss = pow_u;
  } else {
    loss = -(std::log(rho) - std::log(lambda) + (rho - 1.0) * log_u - pow_u);
  }
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "censored_weibull_nll: non-finite loss at lambda=" << lambda << " rho=" << rho
       << " t=" << success_time;
    throw std::runtime_error(os.str());
  }
  return loss;
}

struct NllGrad {
  double loss = 0.0;
  double dlambda = 0.0;
  double drho = 0.0;
};

inline NllGrad censored_weibull_nll_grad(double lambda, double rho, double success_time,
                                         bool censored) {
  NllGrad g;
  g.loss = censored_weibull_nll(lambda, rho, success_time, censored);
  const double log_u = std::log(success_time / lambda);
  const double pow_u = std::exp(rho * log_u);
  if (censored) {
    g.dlambda = -rho * pow_u / lambda;
    g.drho = pow_u * log_u;
  } else {
    g.dlambda = rho * (1.0 - pow_u) / lambda;
    g.drho = -1.0 / rho + (pow_u - 1.0) * log_u;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Loss functors plugged into the nn trainer.

struct SurvivalNllLoss {
  nn::LossEval operator()(std::span<const double> out, std::span<const double> pre,
                          const LabeledSample& s) const {
    const NllGrad g = censored_weibull_nll_grad(out[0], out[1],
                                                static_cast<double>(s.success_time), s.censored);
    nn::LossEval le;
    le.value = g.loss;
    // chain through softplus (its derivative is the logistic)
    le.dpre[0] = g.dlambda * nn::sigmoid(pre[0]);
    le.dpre[1] = g.drho * nn::sigmoid(pre[1]);
    return le;
  }
};

struct BinaryCrossEntropyLoss {
  nn::LossEval operator()(std::span<const double> out, std::span<const double> pre,
                          const LabeledSample& s) const {
    const double y = s.label() ? 1.0 : 0.0;
    const double z = pre[0];
    nn::LossEval le;
    // numerically stable -[y ln p + (1-y) ln(1-p)] with p = sigmoid(z)
    le.value = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    le.dpre[0] = out[0] - y;
    return le;
  }
};

// ---------------------------------------------------------------------------
// Training pipelines.

inline void standardize_from(const std::vector<LabeledSample>& data, nn::MlpModel& m) {
  const std::size_t dim = m.feat_mean.size();
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& s : data)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += s.features[i];
  for (auto& v : mean) v /= static_cast<double>(data.size());
  for (const auto& s : data)
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = s.features[i] - mean[i];
      var[i] += d * d;
    }
  for (std::size_t i = 0; i < dim; ++i) {
    const double sd = std::sqrt(var[i] / static_cast<double>(data.size()));
    m.feat_mean[i] = mean[i];
    m.feat_std[i] = sd > 1e-12 ? sd : 1.0;
  }
}

inline std::vector<LabeledSample> subsample(std::vector<LabeledSample> data, std::size_t max_n,
                                            Rng& rng) {
  if (max_n == 0 || data.size() <= max_n) return data;
  // partial Fisher-Yates: the first max_n entries are a uniform subset
  for (std::size_t i = 0; i < max_n; ++i) {
    const std::size_t j = i + rng.next_below(data.size() - i);
    std::swap(data[i], data[j]);
  }
  data.resize(max_n);
  return data;
}

// Replicates the failure samples (whole copies, remainder drawn without
// replacement) until the class counts match. No success is dropped and every
// distinct failure sample is kept. Balances the minority class, which in this
// regime is failures.
inline std::vector<LabeledSample> upsample_failures(std::vector<LabeledSample> data, Rng& rng) {
  std::vector<std::size_t> minority;
  std::size_t successes = 0, failures = 0;
  for (std::size_t i = 0; i < data.size(); ++i) (data[i].censored ? failures : successes)++;
  if (failures == 0 || successes == 0)
    throw std::invalid_argument("upsample_failures: need both classes");
  const bool failures_minor = failures <= successes;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].censored == failures_minor) minority.push_back(i);
  const std::size_t want = failures_minor ? successes : failures;
  const std::size_t have = minority.size();
  const std::size_t whole = want / have;
  const std::size_t remainder = want % have;
  std::vector<LabeledSample> out;
  out.reserve(data.size() + (whole - 1) * have + remainder);
  for (const auto& s : data) out.push_back(s);
  for (std::size_t k = 1; k < whole; ++k)
    for (std::size_t i : minority) out.push_back(data[i]);
  // remainder: draw without replacement
  std::vector<std::size_t> pool = minority;
  for (std::size_t k = 0; k < remainder; ++k) {
    const std::size_t j = k + rng.next_below(pool.size() - k);
    std::swap(pool[k], pool[j]);
    out.push_back(data[pool[k]]);
  }
  return out;
}

struct SurvivalTrainParams {
  std::vector<int> hidden{128, 128};  // "three-layer" MLP: two rectifier layers + output
  nn::TrainParams opt{.lr = 3e-3, .epochs = 30, .batch_size = 256, .seed = 7};
  std::size_t max_samples = 40000;  // subsample cap applied before training
};

struct ClassifierTrainParams {
  std::vector<int> hidden{128};  // "two-layer" MLP: one rectifier layer + output
  nn::TrainParams opt{.lr = 3e-3, .epochs = 12, .batch_size = 256, .seed = 7};
  std::size_t max_samples = 60000;  // cap applied before class balancing
};

inline nn::MlpModel train_survival(const std::vector<LabeledSample>& dataset,
                                   const SurvivalTrainParams& hp, nn::ModelMeta meta) {
  if (dataset.empty()) throw std::invalid_argument("train_survival: empty dataset");
  const int dim = static_cast<int>(dataset.front().features.size());
  nn::MlpModel m = nn::make_mlp(dim, hp.hidden, nn::Head::kSurvival);
  m.meta = meta;
  Rng rng(derive_seed(hp.opt.seed, 101));
  nn::init_params(m, rng);
  auto data = subsample(dataset, hp.max_samples, rng);
  standardize_from(data, m);
  // warm start: scale bias near the mean uncensored success time, shape near 1
  double mean_ts = 0.0;
  std::size_t n_unc = 0;
  for (const auto& s : data)
    if (!s.censored) {
      mean_ts += s.success_time;
      ++n_unc;
    }
  m.biases.back()[0] = n_unc > 0 ? mean_ts / static_cast<double>(n_unc) : 1.0;
  m.biases.back()[1] = 1.0;
  nn::optimize(m, std::move(data), SurvivalNllLoss{}, hp.opt);
  return m;
}

inline nn::MlpModel train_full_trajectory(const std::vector<LabeledSample>& dataset,
                                          const ClassifierTrainParams& hp, nn::ModelMeta meta) {
  if (dataset.empty()) throw std::invalid_argument("train_full_trajectory: empty dataset");
  bool any_succ = false, any_fail = false;
  for (const auto& s : dataset) (s.censored ? any_fail : any_succ) = true;
  if (!any_succ || !any_fail)
    throw std::invalid_argument("train_full_trajectory: dataset must contain both classes");
  const int dim = static_cast<int>(dataset.front().features.size());
  nn::MlpModel m = nn::make_mlp(dim, hp.hidden, nn::Head::kClassifier);
  m.meta = meta;
  Rng rng(derive_seed(hp.opt.seed, 202));
  nn::init_params(m, rng);
  auto data = upsample_failures(subsample(dataset, hp.max_samples, rng), rng);
  standardize_from(data, m);
  nn::optimize(m, std::move(data), BinaryCrossEntropyLoss{}, hp.opt);
  return m;
}

// ---------------------------------------------------------------------------
// Predictors and the threshold monitor.

// p_t = S(t) - S(t + T_F): probability that success lands within the next
// forecast window. Clamped at zero against floating-point wobble in exp/pow.
inline double predict_moving_window(const nn::MlpModel& model, std::span<const double> features,
                                    double t, double forecast_window) {
  if (model.head != nn::Head::kSurvival)
    throw std::invalid_argument("predict_moving_window: needs a survival model");
  if (t < 0.0 || forecast_window < 0.0)
    throw std::invalid_argument("predict_moving_window: t and window must be >= 0");
  const auto out = nn::forward(model, features);
  const double s_now = weibull_survival(t, out[0], out[1]);
  const double s_later = weibull_survival(t + forecast_window, out[0], out[1]);
  return std::max(0.0, s_now - s_later);
}

inline double predict_full_trajectory(const nn::MlpModel& model,
                                      std::span<const double> features) {
  if (model.head != nn::Head::kClassifier)
    throw std::invalid_argument("predict_full_trajectory: needs a classifier model");
  return nn::forward(model, features)[0];
}

// F(t) = 1 iff p_t < alpha (strict); absent predictions never trigger.
inline bool monitor_decide(std::optional<double> p, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("monitor_decide: alpha must be in [0, 1]");
  return p.has_value() && *p < alpha;
}

enum class ModelKind { kTimeOnly, kMovingWindow, kFullTrajectory };

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kTimeOnly: return "time-only";
    case ModelKind::kMovingWindow: return "moving-window";
    case ModelKind::kFullTrajectory: return "full-trajectory";
  }
  throw std::logic_error("bad model kind");
}

inline ModelKind model_kind_from_name(const std::string& s) {
  if (s == "time-only") return ModelKind::kTimeOnly;
  if (s == "moving-window") return ModelKind::kMovingWindow;
  if (s == "full-trajectory") return ModelKind::kFullTrajectory;
  throw std::runtime_error("unknown model kind: " + s);
}

// A trained forecasting model of any of the three kinds, as loaded from disk.
struct ForecastModel {
  ModelKind kind = ModelKind::kTimeOnly;
  TimeOnlyTable table;
  nn::MlpModel mlp;

  double default_alpha() const {
    return kind == ModelKind::kTimeOnly ? 0.2 : mlp.meta.alpha;
  }
  int default_forecast_window() const {
    return kind == ModelKind::kMovingWindow ? mlp.meta.forecast_window : 0;
  }
};

inline std::string serialize_forecast_model(const ForecastModel& m) {
  if (m.kind == ModelKind::kTimeOnly) return serialize_time_only(m.table);
  return nn::serialize_model(m.mlp);
}

inline ForecastModel load_forecast_model(const std::string& path) {
  const std::string text = read_file(path);
  ForecastModel m;
  if (text.rfind("rit-mlp", 0) == 0) {
    m.mlp = nn::deserialize_model(text);
    m.kind = m.mlp.head == nn::Head::kSurvival ? ModelKind::kMovingWindow
                                               : ModelKind::kFullTrajectory;
  } else {
    m.table = deserialize_time_only(text);
    m.kind = ModelKind::kTimeOnly;
  }
  return m;
}

struct MonitorConfig {
  double alpha = 0.2;
  int forecast_window = 30;  // moving-window only
  int history_len = 10;
  int horizon = 255;
  bool use_time = true;

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0, 1]");
    if (forecast_window < 0) throw std::invalid_argument("forecast window must be >= 0");
    if (history_len < 1) throw std::invalid_argument("history_len must be >= 1");
  }
};

// Binds a model and a threshold into the trigger consulted by the executor.
// Time flows on the attempt clock: each retry is a fresh trial of the same
// policy, which is exactly the population the models were fitted on.
inline TriggerFn make_trigger(const ForecastModel& model, const MonitorConfig& mc) {
  mc.validate();
  switch (model.kind) {
    case ModelKind::kTimeOnly:
      return [&model, mc](const MonitorInput& in) {
        const int t = std::min(in.attempt_step, model.table.horizon);
        return monitor_decide(predict_time_only(model.table, t), mc.alpha);
      };
    case ModelKind::kMovingWindow:
      return [&model, mc](const MonitorInput& in) {
        const auto f =
            build_features(in.window, in.attempt_step, mc.horizon, mc.history_len, mc.use_time);
        return monitor_decide(
            predict_moving_window(model.mlp, f, static_cast<double>(in.attempt_step),
                                  static_cast<double>(mc.forecast_window)),
            mc.alpha);
      };
    case ModelKind::kFullTrajectory:
      return [&model, mc](const MonitorInput& in) {
        const auto f =
            build_features(in.window, in.attempt_step, mc.horizon, mc.history_len, mc.use_time);
        return monitor_decide(predict_full_trajectory(model.mlp, f), mc.alpha);
      };
  }
  throw std::logic_error("bad model kind");
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep: closed-loop success rate over a validation set of
// episode seeds, per (alpha, forecast window) grid point.

struct SweepPoint {
  double alpha = 0.0;
  int forecast_window = 0;
  double success_rate = 0.0;
};

struct SweepResult {
  SweepPoint best;
  std::vector<SweepPoint> grid;  // evaluation order: alpha-major, window-minor
};

inline SweepResult sweep_threshold(const ForecastModel& model, const SimConfig& sim_cfg,
                                   const PolicyGains& gains, const ExecutorConfig& exec_cfg,
                                   const MonitorConfig& base_mc,
                                   std::span<const double> alpha_grid,
                                   std::span<const int> window_grid, int episodes,
                                   std::uint64_t root_seed) {
  if (alpha_grid.empty()) throw std::invalid_argument("sweep_threshold: empty alpha grid");
  if (episodes < 1) throw std::invalid_argument("sweep_threshold: episodes must be >= 1");
  // the window grid only matters for the moving-window model
  std::vector<int> windows(window_grid.begin(), window_grid.end());
  if (windows.empty() || model.kind != ModelKind::kMovingWindow)
    windows.assign(1, base_mc.forecast_window);

  SweepResult result;
  bool first = true;
  for (double alpha : alpha_grid) {
    for (int w : windows) {
      MonitorConfig mc = base_mc;
      mc.alpha = alpha;
      mc.forecast_window = w;
      const TriggerFn trigger = make_trigger(model, mc);
      int succ = 0;
      for (int e = 0; e < episodes; ++e) {
        const Trajectory traj =
            run_episode(sim_cfg, gains, exec_cfg, &trigger, derive_seed(root_seed, e));
        if (traj.outcome.success) ++succ;
      }
      SweepPoint pt{alpha, w, static_cast<double>(succ) / episodes};
      result.grid.push_back(pt);
      // argmax; ties go to the smaller alpha (fewer resets), then smaller window
      const bool better =
          first || pt.success_rate > result.best.success_rate ||
          (pt.success_rate == result.best.success_rate &&
           (pt.alpha < result.best.alpha ||
            (pt.alpha == result.best.alpha && pt.forecast_window < result.best.forecast_window)));
      if (better) {
        result.best = pt;
        first = false;
      }
    }
  }
  return result;
}

}  // namespace rit::forecasting
