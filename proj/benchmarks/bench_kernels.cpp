#include <benchmark/benchmark.h>

#include "ccsoc/chance.hpp"
#include "ccsoc/validation.hpp"

using namespace ccsoc;

namespace {

Execution mode(const benchmark::State& state) {
  return state.range(1) ? Execution::Parallel : Execution::Serial;
}

Eigen::MatrixXd correlated(int dim) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(dim, dim);
  return 0.01 * (a * a.transpose() + Eigen::MatrixXd::Identity(dim, dim));
}

void BM_SampleWind(benchmark::State& state) {
  const GaussianSampler sampler(correlated(8));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler.sample(static_cast<std::size_t>(state.range(0)), 1, mode(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LinearModelMc(benchmark::State& state) {
  const int dim = 4, rows = 200;
  const Eigen::MatrixXd upsilon = Eigen::MatrixXd::Random(rows, dim);
  const Eigen::VectorXd offset = Eigen::VectorXd::Zero(rows);
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(rows, -1.0);
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(rows, 1.0);
  const auto sigma = correlated(dim);
  for (auto _ : state) {
    benchmark::DoNotOptimize(linear_model_mc(upsilon, offset, lower, upper, sigma,
                                             static_cast<std::size_t>(state.range(0)), 7, mode(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EvaluatePolicy(benchmark::State& state) {
  auto net = load_case(std::string(CCSOC_DATA) + "/case118_linear.m");
  std::vector<WindAddition> w{{5, 300.0, 30.0, 0.95}, {64, 600.0, 60.0, 0.95}};
  net = apply_modifiers(net, 0.7, w);
  UncertaintySpec spec;
  spec.sigma = covariance({net.wind_farms[0].sigma, net.wind_farms[1].sigma});
  spec.gamma = capacity_participation(net);
  const auto base = solve_sequential(net, nullptr);
  const auto policy = ScenarioPolicy::from_state(net, base.state, spec);
  const auto xi = sample_wind(spec, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_policy(net, policy, xi, 1e-6, mode(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_SampleWind)->ArgsProduct({{100000}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinearModelMc)->ArgsProduct({{100000}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluatePolicy)->ArgsProduct({{2048}, {0, 1}})->ArgNames({"n", "parallel"})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
