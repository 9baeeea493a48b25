#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rit/forecasting.hpp"
#include "rit/nn.hpp"

using namespace rit;
using nn::Head;
using nn::MlpModel;

namespace {

struct Vec2Sample {
  std::vector<double> features;
  double target = 0.0;
};

// quadratic loss on the first pre-activation output; grad flows through dpre
struct QuadraticPreLoss {
  double target;
  nn::LossEval operator()(std::span<const double>, std::span<const double> pre,
                          const Vec2Sample&) const {
    nn::LossEval le;
    le.value = (pre[0] - target) * (pre[0] - target);
    le.dpre[0] = 2.0 * (pre[0] - target);
    return le;
  }
};

double max_rel_err(const nn::Gradients& a, const nn::Gradients& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.dw.size(); ++l) {
    for (std::size_t i = 0; i < a.dw[l].size(); ++i) {
      const double scale = std::max({1.0, std::abs(a.dw[l][i]), std::abs(b.dw[l][i])});
      worst = std::max(worst, std::abs(a.dw[l][i] - b.dw[l][i]) / scale);
    }
    for (std::size_t i = 0; i < a.db[l].size(); ++i) {
      const double scale = std::max({1.0, std::abs(a.db[l][i]), std::abs(b.db[l][i])});
      worst = std::max(worst, std::abs(a.db[l][i] - b.db[l][i]) / scale);
    }
  }
  return worst;
}

std::vector<forecasting::LabeledSample> random_survival_batch(int n, int dim, Rng& rng) {
  std::vector<forecasting::LabeledSample> batch(n);
  for (auto& s : batch) {
    s.features.resize(dim);
    for (auto& f : s.features) f = rng.symmetric(2.0);
    s.success_time = 1 + static_cast<int>(rng.next_below(200));
    s.censored = rng.uniform01() < 0.3;
  }
  return batch;
}

}  // namespace

TEST_CASE("forward: zero parameters give the analytic head values") {
  auto survival = nn::make_mlp(3, {4}, Head::kSurvival);
  const auto out = nn::forward(survival, std::vector<double>{0.5, -1.0, 2.0});
  REQUIRE(out.size() == 2);
  // softplus(0) + floor
  CHECK(out[0] == Catch::Approx(std::log(2.0) + 1e-4).epsilon(1e-12));
  CHECK(out[1] == Catch::Approx(std::log(2.0) + 1e-4).epsilon(1e-12));

  auto clf = nn::make_mlp(3, {4}, Head::kClassifier);
  const auto p = nn::forward(clf, std::vector<double>{0.1, 0.2, 0.3});
  REQUIRE(p.size() == 1);
  CHECK(p[0] == 0.5);
}

TEST_CASE("forward: survival outputs stay positive for any finite input") {
  Rng rng(1);
  auto m = nn::make_mlp(5, {16, 16}, Head::kSurvival);
  nn::init_params(m, rng);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(5);
    for (auto& v : x) v = rng.symmetric(50.0);
    const auto out = nn::forward(m, x);
    CHECK(out[0] >= nn::kParamFloor);
    CHECK(out[1] >= nn::kParamFloor);
    CHECK(std::isfinite(out[0]));
    CHECK(std::isfinite(out[1]));
  }
}

TEST_CASE("forward rejects a dimension mismatch") {
  auto m = nn::make_mlp(4, {8}, Head::kClassifier);
  CHECK_THROWS_AS(nn::forward(m, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("gradient: single weight, quadratic loss gives 2(w - w*)") {
  auto m = nn::make_mlp(1, {}, Head::kClassifier);  // one weight, one bias
  m.weights[0][0] = 1.7;
  const std::vector<Vec2Sample> batch{{{1.0}, 0.0}};
  const auto g = nn::gradient(m, std::span<const Vec2Sample>(batch), QuadraticPreLoss{0.4});
  // pre = w * x + b = 1.7; dL/dw = 2 (w - 0.4) * x
  CHECK(g.dw[0][0] == Catch::Approx(2.0 * (1.7 - 0.4)).epsilon(1e-12));
  CHECK(g.db[0][0] == Catch::Approx(2.0 * (1.7 - 0.4)).epsilon(1e-12));
}

TEST_CASE("gradient: duplicated batch leaves the mean gradient unchanged") {
  Rng rng(2);
  auto m = nn::make_mlp(4, {6}, Head::kClassifier);
  nn::init_params(m, rng);
  auto batch = random_survival_batch(8, 4, rng);
  for (auto& s : batch) s.censored = rng.uniform01() < 0.5;
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto g1 = nn::gradient(m, std::span<const forecasting::LabeledSample>(batch),
                               forecasting::BinaryCrossEntropyLoss{});
  const auto g2 = nn::gradient(m, std::span<const forecasting::LabeledSample>(doubled),
                               forecasting::BinaryCrossEntropyLoss{});
  CHECK(max_rel_err(g1, g2) < 1e-12);
}

TEST_CASE("gradient matches central finite differences for both heads") {
  // resample any configuration whose hidden units sit within the probe step
  // of a rectifier kink: the loss is not differentiable there
  constexpr double kKinkClearance = 1e-3;
  Rng rng(3);
  int done = 0;
  while (done < 10) {
    const int dim = 2 + static_cast<int>(rng.next_below(4));
    auto surv = nn::make_mlp(dim, {5, 4}, Head::kSurvival);
    nn::init_params(surv, rng);
    surv.biases.back()[0] = 3.0;  // keep lambda away from the floor
    const auto batch = random_survival_batch(6, dim, rng);
    const auto span = std::span<const forecasting::LabeledSample>(batch);

    auto clf = nn::make_mlp(dim, {6}, Head::kClassifier);
    nn::init_params(clf, rng);
    if (nn::min_hidden_preactivation(surv, span) < kKinkClearance ||
        nn::min_hidden_preactivation(clf, span) < kKinkClearance)
      continue;

    const auto ga = nn::gradient(surv, span, forecasting::SurvivalNllLoss{});
    const auto gn = nn::numeric_gradient(surv, span, forecasting::SurvivalNllLoss{});
    CHECK(max_rel_err(ga, gn) < 1e-4);

    const auto ca = nn::gradient(clf, span, forecasting::BinaryCrossEntropyLoss{});
    const auto cn = nn::numeric_gradient(clf, span, forecasting::BinaryCrossEntropyLoss{});
    CHECK(max_rel_err(ca, cn) < 1e-4);
    ++done;
  }
}

TEST_CASE("gradient rejects an empty batch") {
  auto m = nn::make_mlp(2, {}, Head::kClassifier);
  const std::vector<forecasting::LabeledSample> empty;
  CHECK_THROWS_AS(nn::gradient(m, std::span<const forecasting::LabeledSample>(empty),
                               forecasting::BinaryCrossEntropyLoss{}),
                  std::invalid_argument);
}

TEST_CASE("optimize: linearly separable classes reach 99 percent accuracy") {
  Rng rng(4);
  std::vector<forecasting::LabeledSample> data;
  for (int i = 0; i < 2000; ++i) {
    forecasting::LabeledSample s;
    const double x = rng.symmetric(1.0), y = rng.symmetric(1.0);
    s.features = {x, y};
    s.censored = (x + 2.0 * y < 0.0);  // censored == failure == label 0
    s.success_time = 100;
    data.push_back(s);
  }
  auto m = nn::make_mlp(2, {16}, Head::kClassifier);
  nn::init_params(m, rng);
  forecasting::standardize_from(data, m);
  nn::TrainParams hp;
  hp.lr = 0.01;
  hp.epochs = 40;
  hp.batch_size = 64;
  const auto result = nn::optimize(m, data, forecasting::BinaryCrossEntropyLoss{}, hp);
  CHECK(result.final_loss() <= result.initial_loss());
  int correct = 0;
  for (const auto& s : data) {
    const double p = nn::forward(m, s.features)[0];
    if ((p > 0.5) == s.label()) ++correct;
  }
  CHECK(static_cast<double>(correct) / data.size() >= 0.99);
}

TEST_CASE("optimize: recovers Weibull parameters from censored samples") {
  // inverse-CDF sampling oracle: t = lambda * (-ln U)^(1/rho), censored at a
  // fixed horizon so roughly 20 percent of draws are right-censored
  const double true_lambda = 70.0, true_rho = 3.0;
  const double censor_at = 82.0;
  Rng rng(5);
  std::vector<forecasting::LabeledSample> data;
  int censored_n = 0;
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform01();
    if (u <= 0.0) u = 1e-12;
    const double t = true_lambda * std::pow(-std::log(1.0 - u), 1.0 / true_rho);
    forecasting::LabeledSample s;
    s.features = {1.0};
    s.censored = t > censor_at;
    s.success_time = s.censored ? static_cast<int>(censor_at) : std::max(1, static_cast<int>(t));
    censored_n += s.censored ? 1 : 0;
    data.push_back(s);
  }
  CHECK(static_cast<double>(censored_n) / data.size() == Catch::Approx(0.2).margin(0.05));

  // constant features: the head biases carry the whole fit
  auto m = nn::make_mlp(1, {}, Head::kSurvival);
  m.biases[0][0] = 50.0;
  m.biases[0][1] = 1.0;
  forecasting::standardize_from(data, m);
  nn::TrainParams hp;
  hp.lr = 0.05;
  hp.epochs = 60;
  hp.batch_size = 1024;
  nn::optimize(m, data, forecasting::SurvivalNllLoss{}, hp);
  const auto out = nn::forward(m, std::vector<double>{1.0});
  CHECK(out[0] == Catch::Approx(true_lambda).epsilon(0.05));
  CHECK(out[1] == Catch::Approx(true_rho).epsilon(0.10));
}

TEST_CASE("optimize: zero learning rate leaves the parameters untouched") {
  Rng rng(6);
  auto m = nn::make_mlp(3, {8}, Head::kClassifier);
  nn::init_params(m, rng);
  const auto w_before = m.weights;
  const auto b_before = m.biases;
  auto data = random_survival_batch(50, 3, rng);
  nn::TrainParams hp;
  hp.lr = 0.0;
  hp.epochs = 3;
  nn::optimize(m, data, forecasting::BinaryCrossEntropyLoss{}, hp);
  CHECK(m.weights == w_before);
  CHECK(m.biases == b_before);
}

TEST_CASE("optimize is reproducible from the seed") {
  Rng rng(7);
  auto data = random_survival_batch(300, 4, rng);
  auto run = [&data]() {
    Rng init_rng(11);
    auto m = nn::make_mlp(4, {8}, Head::kClassifier);
    nn::init_params(m, init_rng);
    nn::TrainParams hp;
    hp.epochs = 5;
    hp.seed = 123;
    nn::optimize(m, data, forecasting::BinaryCrossEntropyLoss{}, hp);
    return m;
  };
  const auto a = run(), b = run();
  CHECK(a.weights == b.weights);
  CHECK(a.biases == b.biases);
}

TEST_CASE("model serialization round-trips exactly") {
  Rng rng(8);
  auto m = nn::make_mlp(7, {12, 5}, Head::kSurvival);
  nn::init_params(m, rng);
  m.feat_mean[2] = 0.123456789012345;
  m.feat_std[3] = 9.87654321e-7;
  m.meta = {10, 30, 0.13, 255, true};
  const auto text = nn::serialize_model(m);
  const auto back = nn::deserialize_model(text);
  CHECK(back.weights == m.weights);
  CHECK(back.biases == m.biases);
  CHECK(back.feat_mean == m.feat_mean);
  CHECK(back.feat_std == m.feat_std);
  CHECK(back.head == m.head);
  CHECK(back.meta.history_len == 10);
  CHECK(back.meta.forecast_window == 30);
  CHECK(back.meta.alpha == 0.13);
  CHECK(back.meta.horizon == 255);
  CHECK(back.meta.use_time);
  // byte-identical re-serialization
  CHECK(nn::serialize_model(back) == text);
}

TEST_CASE("optimize reports divergence instead of returning garbage") {
  Rng rng(9);
  auto m = nn::make_mlp(1, {}, Head::kSurvival);
  auto data = random_survival_batch(10, 1, rng);
  nn::TrainParams hp;
  hp.lr = 1e15;  // absurd rate: parameters explode, loss goes non-finite
  hp.epochs = 50;
  CHECK_THROWS_AS(nn::optimize(m, data, forecasting::SurvivalNllLoss{}, hp), std::runtime_error);
}
