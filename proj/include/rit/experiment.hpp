#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rit/config.hpp"
#include "rit/forecasting.hpp"
#include "rit/io.hpp"
#include "rit/policy.hpp"

namespace rit::experiment {

// ---------------------------------------------------------------------------
// Trajectory files: one line per executed step.

inline const char* kTrajectoryHeader =
    "episode,t,rel_x,rel_y,rel_z,rel_yaw,goal_x,goal_y,goal_z,goal_yaw,"
    "act_x,act_y,act_z,act_yaw,mode,success,success_time";

inline void append_trajectory_csv(std::ostringstream& os, int episode_id, const Trajectory& traj) {
  for (const StepRecord& s : traj.steps) {
    os << episode_id << ',' << s.t;
    const auto put = [&os](const PlanarPose& p) {
      os << ',' << fmt_g(p.x, 9) << ',' << fmt_g(p.y, 9) << ',' << fmt_g(p.z, 9) << ','
         << fmt_g(p.yaw, 9);
    };
    put(s.rel_pose);
    put(s.goal_rel);
    put(s.action);
    os << ',' << static_cast<int>(s.mode) << ',' << (traj.outcome.success ? 1 : 0) << ','
       << traj.outcome.success_time << '\n';
  }
}

inline std::string trajectories_to_csv(std::span<const Trajectory> trajs) {
  std::ostringstream os;
  os << kTrajectoryHeader << '\n';
  for (std::size_t i = 0; i < trajs.size(); ++i)
    append_trajectory_csv(os, static_cast<int>(i), trajs[i]);
  return os.str();
}

inline std::vector<Trajectory> trajectories_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || trim(line) != kTrajectoryHeader)
    throw std::runtime_error("not a trajectory file (bad header)");
  std::vector<Trajectory> out;
  int current_id = -1;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 17) throw std::runtime_error("trajectory file: bad row: " + line);
    const int ep = static_cast<int>(parse_int(cols[0]));
    if (ep != current_id) {
      if (ep != current_id + 1)
        throw std::runtime_error("trajectory file: episodes must be contiguous");
      out.emplace_back();
      current_id = ep;
    }
    StepRecord s;
    s.t = static_cast<int>(parse_int(cols[1]));
    s.rel_pose = {parse_double(cols[2]), parse_double(cols[3]), parse_double(cols[4]),
                  parse_double(cols[5])};
    s.goal_rel = {parse_double(cols[6]), parse_double(cols[7]), parse_double(cols[8]),
                  parse_double(cols[9])};
    s.action = {parse_double(cols[10]), parse_double(cols[11]), parse_double(cols[12]),
                parse_double(cols[13])};
    s.mode = parse_int(cols[14]) == 0 ? Mode::kInsert : Mode::kRecover;
    out.back().steps.push_back(s);
    out.back().outcome.success = parse_int(cols[15]) != 0;
    out.back().outcome.success_time = static_cast<int>(parse_int(cols[16]));
  }
  if (out.empty()) throw std::runtime_error("trajectory file: no episodes");
  return out;
}

// ---------------------------------------------------------------------------
// Collection.

struct CollectSummary {
  int episodes = 0;
  double success_rate = 0.0;
  int success_time_mode = 0;               // argmax of the success-time histogram
  std::vector<int> success_time_histogram;  // index = T_S, successes only
};

inline std::vector<Trajectory> collect_episodes(const ExperimentConfig& cfg, int episodes,
                                                std::uint64_t root_seed,
                                                const TriggerFn* trigger = nullptr) {
  if (episodes < 1) throw std::invalid_argument("collect_episodes: need at least one episode");
  cfg.validate();
  std::vector<Trajectory> out;
  out.reserve(episodes);
  for (int e = 0; e < episodes; ++e)
    out.push_back(run_episode(cfg.sim, cfg.gains, cfg.exec, trigger, derive_seed(root_seed, e)));
  return out;
}

inline CollectSummary summarize_collection(std::span<const Trajectory> trajs, int horizon) {
  CollectSummary s;
  s.episodes = static_cast<int>(trajs.size());
  s.success_time_histogram.assign(horizon + 1, 0);
  int succ = 0;
  for (const auto& t : trajs)
    if (t.outcome.success) {
      ++succ;
      ++s.success_time_histogram[t.outcome.success_time];
    }
  s.success_rate = trajs.empty() ? 0.0 : static_cast<double>(succ) / trajs.size();
  int best = 0;
  for (int t = 0; t <= horizon; ++t)
    if (s.success_time_histogram[t] > s.success_time_histogram[best]) best = t;
  s.success_time_mode = best;
  return s;
}

// ---------------------------------------------------------------------------
// Single-insertion evaluation: seeds x episodes, paper-style report row.

struct MethodEval {
  std::string method;
  double friction = 0.0;
  double alpha = 0.0;
  int forecast_window = 0;
  int seeds = 0;
  int episodes = 0;
  double success_rate = 0.0;  // mean over seeds
  double success_std = 0.0;   // sample std over seed-level rates
  double mean_steps = 0.0;    // successful trials only
  double reset_rate = 0.0;    // successful trials containing >= 1 recovery
};

inline const char* kEvalHeader =
    "method,friction,alpha,tf,seeds,episodes,success_rate,success_std,mean_steps,reset_rate";

inline std::string eval_row_csv(const MethodEval& r) {
  std::ostringstream os;
  os << r.method << ',' << fmt_g(r.friction) << ',' << fmt_g(r.alpha) << ',' << r.forecast_window
     << ',' << r.seeds << ',' << r.episodes << ',' << fmt_g(r.success_rate) << ','
     << fmt_g(r.success_std) << ',' << fmt_g(r.mean_steps) << ',' << fmt_g(r.reset_rate);
  return os.str();
}

inline MethodEval eval_single(const ExperimentConfig& cfg, const TriggerFn* trigger,
                              const std::string& method, double alpha, int forecast_window,
                              std::uint64_t root_seed) {
  cfg.validate();
  MethodEval r;
  r.method = method;
  r.friction = cfg.sim.friction_mu;
  r.alpha = alpha;
  r.forecast_window = forecast_window;
  r.seeds = cfg.eval_seeds;
  r.episodes = cfg.eval_episodes;
  std::vector<double> seed_rates;
  long long steps_sum = 0, succ_total = 0, succ_with_reset = 0;
  for (int s = 0; s < cfg.eval_seeds; ++s) {
    int succ = 0;
    const std::uint64_t seed_base = derive_seed(root_seed, s);
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      const Trajectory traj =
          run_episode(cfg.sim, cfg.gains, cfg.exec, trigger, derive_seed(seed_base, e));
      if (traj.outcome.success) {
        ++succ;
        steps_sum += traj.outcome.success_time;
        if (contains_recovery(traj)) ++succ_with_reset;
      }
    }
    succ_total += succ;
    seed_rates.push_back(static_cast<double>(succ) / cfg.eval_episodes);
  }
  double mean = 0.0;
  for (double v : seed_rates) mean += v;
  mean /= seed_rates.size();
  double var = 0.0;
  for (double v : seed_rates) var += (v - mean) * (v - mean);
  r.success_rate = mean;
  r.success_std = seed_rates.size() > 1 ? std::sqrt(var / (seed_rates.size() - 1)) : 0.0;
  r.mean_steps = succ_total > 0 ? static_cast<double>(steps_sum) / succ_total : 0.0;
  r.reset_rate = succ_total > 0 ? static_cast<double>(succ_with_reset) / succ_total : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Rhythmic runs: rounds of insert -> rotate -> reset until the first failure.

struct RhythmicConfig {
  int rounds = 20;          // round budget per trial
  int round_budget = 255;   // step budget per insertion attempt
  bool independent = false; // re-randomize the nut every round (Bernoulli mode)

  void validate() const {
    if (rounds < 1) throw std::invalid_argument("rhythmic rounds must be >= 1");
    if (round_budget < 0) throw std::invalid_argument("round budget must be >= 0");
  }
};

struct RhythmicResult {
  std::vector<int> consecutive;  // per trial: successes before the first failure
  long long rounds_run = 0;
  long long rounds_succeeded = 0;

  double mean_consecutive() const {
    if (consecutive.empty()) return 0.0;
    double s = 0.0;
    for (int c : consecutive) s += c;
    return s / consecutive.size();
  }
  double round_success_rate() const {
    return rounds_run > 0 ? static_cast<double>(rounds_succeeded) / rounds_run : 0.0;
  }
};

// Expected consecutive successes before the first failure under independent
// rounds with per-round success probability p.
inline double geometric_expectation(double p) {
  if (!(p >= 0.0) || !(p < 1.0))
    throw std::invalid_argument("geometric_expectation: p must be in [0, 1)");
  return p / (1.0 - p);
}

inline RhythmicResult eval_rhythmic(const ExperimentConfig& cfg, const RhythmicConfig& rc,
                                    const TriggerFn* trigger, int trials,
                                    std::uint64_t root_seed) {
  cfg.validate();
  rc.validate();
  if (trials < 1) throw std::invalid_argument("eval_rhythmic: trials must be >= 1");
  ExperimentConfig round_cfg = cfg;
  if (rc.round_budget > 0) round_cfg.sim.max_steps = rc.round_budget;

  RhythmicResult result;
  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(root_seed, trial);
    int streak = 0;
    // nut state carried across rounds in the dependent mode
    std::optional<double> nut_yaw;
    Rng round_rng(derive_seed(trial_seed, 9001));
    for (int round = 0; round < rc.rounds; ++round) {
      if (rc.round_budget == 0) break;  // no budget: the round cannot succeed
      const std::uint64_t ep_seed = derive_seed(trial_seed, 100 + round);
      const Trajectory traj = run_episode(round_cfg.sim, round_cfg.gains, round_cfg.exec, trigger,
                                          ep_seed, rc.independent ? std::nullopt : nut_yaw);
      ++result.rounds_run;
      if (!traj.outcome.success) break;
      ++result.rounds_succeeded;
      ++streak;
      // Rotation + reset, scripted open loop: the engaged wrench advances the
      // nut by at least one symmetry sector, the tool is lifted clear, and the
      // nut settles with a small disturbance.
      nut_yaw = wrap_angle(traj.final_nut_yaw + cfg.sim.yaw_period() +
                           round_rng.uniform(0.0, from_degrees(15.0)) +
                           round_rng.symmetric(from_degrees(2.0)));
    }
    result.consecutive.push_back(streak);
  }
  return result;
}

inline const char* kRhythmicHeader = "label,trial,consecutive_successes";

inline std::string rhythmic_to_csv(const std::string& label, const RhythmicResult& r) {
  std::ostringstream os;
  os << kRhythmicHeader << '\n';
  for (std::size_t i = 0; i < r.consecutive.size(); ++i)
    os << label << ',' << i << ',' << r.consecutive[i] << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Report merging: several per-method evaluation CSVs into one table-shaped
// matrix, or several rhythmic count files into one bar-chart CSV. Rows are
// sorted so the merge is independent of input order.

inline std::string merge_eval_reports(std::span<const std::string> csv_texts) {
  if (csv_texts.empty()) throw std::invalid_argument("merge_eval_reports: no inputs");
  std::vector<std::string> rows;
  for (const std::string& text : csv_texts) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || trim(line) != kEvalHeader)
      throw std::runtime_error("eval report: header mismatch");
    while (std::getline(is, line)) {
      line = trim(line);
      if (line.empty()) continue;
      if (split(line, ',').size() != split(kEvalHeader, ',').size())
        throw std::runtime_error("eval report: column count mismatch: " + line);
      rows.push_back(line);
    }
  }
  std::sort(rows.begin(), rows.end());
  std::ostringstream os;
  os << kEvalHeader << '\n';
  for (const auto& r : rows) os << r << '\n';
  return os.str();
}

inline std::string merge_rhythmic_reports(std::span<const std::string> csv_texts) {
  if (csv_texts.empty()) throw std::invalid_argument("merge_rhythmic_reports: no inputs");
  struct Row {
    std::string label;
    long long trial;
    long long count;
  };
  std::vector<Row> rows;
  for (const std::string& text : csv_texts) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || trim(line) != kRhythmicHeader)
      throw std::runtime_error("rhythmic report: header mismatch");
    while (std::getline(is, line)) {
      line = trim(line);
      if (line.empty()) continue;
      const auto cols = split(line, ',');
      if (cols.size() != 3)
        throw std::runtime_error("rhythmic report: column count mismatch: " + line);
      rows.push_back({cols[0], parse_int(cols[1]), parse_int(cols[2])});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.label != b.label) return a.label < b.label;
    return a.trial < b.trial;
  });
  std::ostringstream os;
  os << kRhythmicHeader << '\n';
  for (const auto& r : rows) os << r.label << ',' << r.trial << ',' << r.count << '\n';
  return os.str();
}

}  // namespace rit::experiment
