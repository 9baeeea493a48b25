// Command-line front end for the insertion experiments: data collection,
// forecaster training, closed-loop evaluation, threshold sweeps and report
// merging. Every command is a pure function of its inputs: identical flags
// and files produce byte-identical outputs.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rit/config.hpp"
#include "rit/experiment.hpp"
#include "rit/forecasting.hpp"
#include "rit/io.hpp"

namespace fc = rit::forecasting;
namespace ex = rit::experiment;

namespace {

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  std::optional<double> friction;
};

rit::ExperimentConfig load_cfg(const CommonOpts& c) {
  rit::ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = rit::load_config(c.config_path);
  if (c.friction) cfg.sim.friction_mu = *c.friction;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "experiment config file (key = value)");
  cmd->add_option("--seed", c.seed, "root seed (u64)");
  cmd->add_option("--friction", c.friction, "override friction_mu");
}

fc::MonitorConfig monitor_config(const rit::ExperimentConfig& cfg, const fc::ForecastModel& model,
                                 std::optional<double> alpha, std::optional<int> tf) {
  fc::MonitorConfig mc;
  mc.alpha = alpha.value_or(model.default_alpha());
  mc.forecast_window = tf.value_or(model.default_forecast_window());
  mc.history_len = cfg.exec.history_len;
  mc.horizon = cfg.sim.max_steps;
  mc.use_time = cfg.use_time_feature;
  mc.validate();
  return mc;
}

std::string histogram_block(const ex::CollectSummary& s) {
  // success-time counts in bins of 10 steps, zero bins skipped
  std::string out;
  const int n = static_cast<int>(s.success_time_histogram.size());
  for (int lo = 0; lo < n; lo += 10) {
    int c = 0;
    for (int t = lo; t < std::min(lo + 10, n); ++t) c += s.success_time_histogram[t];
    if (c > 0)
      out += "  [" + std::to_string(lo) + "," + std::to_string(std::min(lo + 9, n - 1)) + "] " +
             std::to_string(c) + "\n";
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"rhythmic-insertion experiment harness"};
  app.require_subcommand(1);

  // collect ------------------------------------------------------------
  auto* collect = app.add_subcommand("collect", "roll out monitor-free episodes");
  CommonOpts c_collect;
  int collect_episodes = 1;
  std::string collect_out;
  add_common(collect, c_collect);
  collect->add_option("--episodes", collect_episodes, "number of episodes")->required();
  collect->add_option("--out", collect_out, "trajectory CSV path")->required();

  // train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "fit a forecasting model from trajectories");
  CommonOpts c_train;
  std::string train_kind, train_traj, train_out;
  std::optional<double> train_alpha;
  std::optional<int> train_tf;
  add_common(train, c_train);
  train->add_option("kind", train_kind, "time-only | survival | classifier")->required();
  train->add_option("--traj", train_traj, "input trajectory CSV")->required();
  train->add_option("--out", train_out, "model output path")->required();
  train->add_option("--alpha", train_alpha, "threshold stored with the model");
  train->add_option("--tf", train_tf, "forecast window stored with the model");

  // eval-single -----------------------------------------------------------
  auto* evals = app.add_subcommand("eval-single", "seeds x episodes single-insertion evaluation");
  CommonOpts c_eval;
  std::string eval_model, eval_out, eval_recovery = "off", eval_method;
  std::optional<double> eval_alpha;
  std::optional<int> eval_tf;
  std::optional<int> eval_episodes_flag, eval_seeds_flag;
  add_common(evals, c_eval);
  evals->add_option("--model", eval_model, "forecasting model file");
  evals->add_option("--recovery", eval_recovery, "on | off")->check(CLI::IsMember({"on", "off"}));
  evals->add_option("--alpha", eval_alpha, "monitor threshold override");
  evals->add_option("--tf", eval_tf, "forecast window override");
  evals->add_option("--episodes", eval_episodes_flag, "episodes per seed");
  evals->add_option("--seeds", eval_seeds_flag, "number of seeds");
  evals->add_option("--method", eval_method, "method label in the report row");
  evals->add_option("--out", eval_out, "report CSV path")->required();

  // eval-rhythmic ----------------------------------------------------------
  auto* rhythm = app.add_subcommand("eval-rhythmic", "consecutive-round insertion trials");
  CommonOpts c_rhythm;
  std::string rhythm_model, rhythm_out, rhythm_recovery = "off", rhythm_label = "default";
  std::string rhythm_independent = "off";
  std::optional<double> rhythm_alpha;
  std::optional<int> rhythm_tf;
  int rhythm_trials = 3, rhythm_rounds = 20, rhythm_budget = -1;
  add_common(rhythm, c_rhythm);
  rhythm->add_option("--model", rhythm_model, "forecasting model file");
  rhythm->add_option("--recovery", rhythm_recovery, "on | off")
      ->check(CLI::IsMember({"on", "off"}));
  rhythm->add_option("--alpha", rhythm_alpha, "monitor threshold override");
  rhythm->add_option("--tf", rhythm_tf, "forecast window override");
  rhythm->add_option("--trials", rhythm_trials, "number of trials");
  rhythm->add_option("--rounds", rhythm_rounds, "round budget per trial");
  rhythm->add_option("--round-budget", rhythm_budget,
                     "step budget per round (default: config max_steps)");
  rhythm->add_option("--independent", rhythm_independent,
                     "on: re-randomize the nut every round (Bernoulli mode)")
      ->check(CLI::IsMember({"on", "off"}));
  rhythm->add_option("--label", rhythm_label, "label column in the counts file");
  rhythm->add_option("--out", rhythm_out, "counts CSV path")->required();

  // sweep -------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "grid search over (alpha, tf) by closed-loop rate");
  CommonOpts c_sweep;
  std::string sweep_model, sweep_out;
  int sweep_episodes = 128;
  std::vector<double> sweep_alphas{0.05, 0.1, 0.13, 0.2, 0.3};
  std::vector<int> sweep_tfs{15, 30, 60};
  add_common(sweep, c_sweep);
  sweep->add_option("--model", sweep_model, "forecasting model file")->required();
  sweep->add_option("--episodes", sweep_episodes, "validation episodes per grid point");
  sweep->add_option("--alpha-grid", sweep_alphas, "alpha grid")->delimiter(',');
  sweep->add_option("--tf-grid", sweep_tfs, "forecast-window grid (moving-window only)")
      ->delimiter(',');
  sweep->add_option("--out", sweep_out, "grid CSV path")->required();

  // report -------------------------------------------------------------------
  auto* report = app.add_subcommand("report", "merge evaluation or rhythmic CSVs");
  std::string report_kind = "eval", report_out;
  std::vector<std::string> report_in;
  report->add_option("--kind", report_kind, "eval | rhythmic")
      ->check(CLI::IsMember({"eval", "rhythmic"}));
  report->add_option("--in", report_in, "input CSV files")->required();
  report->add_option("--out", report_out, "merged CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  if (collect->parsed()) {
    const auto cfg = load_cfg(c_collect);
    const auto trajs = ex::collect_episodes(cfg, collect_episodes, c_collect.seed);
    rit::write_file(collect_out, ex::trajectories_to_csv(trajs));
    const auto s = ex::summarize_collection(trajs, cfg.sim.max_steps);
    std::cout << "episodes " << s.episodes << "\n"
              << "success_rate " << rit::fmt_g(s.success_rate) << "\n"
              << "success_time_mode " << s.success_time_mode << "\n"
              << "success_time_histogram (bins of 10)\n"
              << histogram_block(s);
    return 0;
  }

  if (train->parsed()) {
    const auto cfg = load_cfg(c_train);
    const auto trajs = ex::trajectories_from_csv(rit::read_file(train_traj));
    fc::ForecastModel model;
    rit::nn::ModelMeta meta;
    meta.history_len = cfg.exec.history_len;
    meta.horizon = cfg.sim.max_steps;
    meta.use_time = cfg.use_time_feature;
    if (train_kind == "time-only") {
      model.kind = fc::ModelKind::kTimeOnly;
      model.table = fc::fit_time_only(std::span<const rit::Trajectory>(trajs), cfg.sim.max_steps);
    } else if (train_kind == "survival") {
      meta.forecast_window = train_tf.value_or(30);
      meta.alpha = train_alpha.value_or(0.13);
      const auto data = fc::build_dataset(std::span<const rit::Trajectory>(trajs),
                                          cfg.sim.max_steps, cfg.exec.history_len,
                                          cfg.use_time_feature);
      model.kind = fc::ModelKind::kMovingWindow;
      model.mlp = fc::train_survival(data, fc::SurvivalTrainParams{}, meta);
    } else if (train_kind == "classifier") {
      meta.forecast_window = train_tf.value_or(0);
      // default threshold picked on the closed-loop success/reset trade-off
      // across both friction regimes; override with --alpha or re-sweep
      meta.alpha = train_alpha.value_or(0.03);
      const auto data = fc::build_dataset(std::span<const rit::Trajectory>(trajs),
                                          cfg.sim.max_steps, cfg.exec.history_len,
                                          cfg.use_time_feature);
      model.kind = fc::ModelKind::kFullTrajectory;
      model.mlp = fc::train_full_trajectory(data, fc::ClassifierTrainParams{}, meta);
    } else {
      throw std::runtime_error("train: kind must be time-only, survival or classifier");
    }
    rit::write_file(train_out, fc::serialize_forecast_model(model));
    std::cout << "trained " << train_kind << " on " << trajs.size() << " episodes -> " << train_out
              << "\n";
    return 0;
  }

  if (evals->parsed()) {
    auto cfg = load_cfg(c_eval);
    if (eval_episodes_flag) cfg.eval_episodes = *eval_episodes_flag;
    if (eval_seeds_flag) cfg.eval_seeds = *eval_seeds_flag;
    cfg.validate();
    const bool recovery = eval_recovery == "on";
    fc::ForecastModel model;
    fc::MonitorConfig mc;
    rit::TriggerFn trigger;
    std::string method = eval_method;
    if (recovery) {
      if (eval_model.empty()) throw std::runtime_error("eval-single: --recovery on needs --model");
      model = fc::load_forecast_model(eval_model);
      mc = monitor_config(cfg, model, eval_alpha, eval_tf);
      trigger = fc::make_trigger(model, mc);
      if (method.empty()) method = fc::model_kind_name(model.kind);
    } else if (method.empty()) {
      method = "object-centric";
    }
    const auto row = ex::eval_single(cfg, recovery ? &trigger : nullptr, method,
                                     recovery ? mc.alpha : 0.0,
                                     recovery ? mc.forecast_window : 0, c_eval.seed);
    std::string csv = std::string(ex::kEvalHeader) + "\n" + ex::eval_row_csv(row) + "\n";
    rit::write_file(eval_out, csv);
    std::cout << csv;
    return 0;
  }

  if (rhythm->parsed()) {
    const auto cfg = load_cfg(c_rhythm);
    ex::RhythmicConfig rc;
    rc.rounds = rhythm_rounds;
    rc.round_budget = rhythm_budget < 0 ? cfg.sim.max_steps : rhythm_budget;
    rc.independent = rhythm_independent == "on";
    const bool recovery = rhythm_recovery == "on";
    fc::ForecastModel model;
    rit::TriggerFn trigger;
    if (recovery) {
      if (rhythm_model.empty())
        throw std::runtime_error("eval-rhythmic: --recovery on needs --model");
      model = fc::load_forecast_model(rhythm_model);
      const auto mc = monitor_config(cfg, model, rhythm_alpha, rhythm_tf);
      trigger = fc::make_trigger(model, mc);
    }
    const auto result =
        ex::eval_rhythmic(cfg, rc, recovery ? &trigger : nullptr, rhythm_trials, c_rhythm.seed);
    rit::write_file(rhythm_out, ex::rhythmic_to_csv(rhythm_label, result));
    std::cout << "trials " << rhythm_trials << "\n"
              << "mean_consecutive " << rit::fmt_g(result.mean_consecutive()) << "\n"
              << "round_success_rate " << rit::fmt_g(result.round_success_rate()) << "\n";
    return 0;
  }

  if (sweep->parsed()) {
    const auto cfg = load_cfg(c_sweep);
    const auto model = fc::load_forecast_model(sweep_model);
    fc::MonitorConfig mc = monitor_config(cfg, model, std::nullopt, std::nullopt);
    const auto result = fc::sweep_threshold(
        model, cfg.sim, cfg.gains, cfg.exec, mc, std::span<const double>(sweep_alphas),
        std::span<const int>(sweep_tfs), sweep_episodes, c_sweep.seed);
    std::string csv = "alpha,tf,success_rate\n";
    for (const auto& pt : result.grid)
      csv += rit::fmt_g(pt.alpha) + "," + std::to_string(pt.forecast_window) + "," +
             rit::fmt_g(pt.success_rate) + "\n";
    rit::write_file(sweep_out, csv);
    std::cout << "best alpha " << rit::fmt_g(result.best.alpha) << " tf "
              << result.best.forecast_window << " success_rate "
              << rit::fmt_g(result.best.success_rate) << "\n";
    return 0;
  }

  if (report->parsed()) {
    std::vector<std::string> texts;
    for (const auto& p : report_in) texts.push_back(rit::read_file(p));
    const std::string merged = report_kind == "eval"
                                   ? ex::merge_eval_reports(std::span<const std::string>(texts))
                                   : ex::merge_rhythmic_reports(std::span<const std::string>(texts));
    rit::write_file(report_out, merged);
    std::cout << "merged " << texts.size() << " file(s) -> " << report_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
