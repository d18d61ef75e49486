#include <benchmark/benchmark.h>

#include "smcvi/hawkes.hpp"
#include "smcvi/lgss.hpp"
#include "smcvi/trainer.hpp"

using namespace smcvi;

namespace {

std::vector<Eigen::MatrixXd> ar_series(std::size_t steps) {
  RngStream rng(1);
  return {lgss::simulate(lgss::ar_params(0.9), steps - 1, rng).y};
}

}  // namespace

// Bootstrap filter on the 2-D AR model, double path.
static void BM_SmcAr(benchmark::State& state) {
  const auto p = lgss::ar_params(0.9);
  const auto th = lgss::theta_from_params(p);
  const auto y = ar_series(100)[0];
  lgss::Model<double> m(th, nullptr, y);
  SmcOptions o;
  o.particles = static_cast<std::size_t>(state.range(0));
  o.keep_history = false;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    SmcStreams s(seed++);
    benchmark::DoNotOptimize(run_smc(m, o, s).log_z);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_SmcAr)->Arg(10)->Arg(100)->Arg(1000);

// One bound-gradient sample through the tape.
static void BM_ElboStepAr(benchmark::State& state) {
  const lgss::ArRecipe recipe(ar_series(100), 0.5);
  const auto fam = recipe.initial_family();
  const auto phi = recipe.initial_proposal();
  TrainConfig cfg;
  cfg.mode = FitMode::Em;
  cfg.particles = static_cast<std::size_t>(state.range(0));
  std::uint64_t it = 0;
  for (auto _ : state) {
    const auto g = elbo_step(recipe, fam, phi, cfg, it, RngStream(1).child(it));
    benchmark::DoNotOptimize(g.sample.total);
    ++it;
  }
}
BENCHMARK(BM_ElboStepAr)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_HawkesCompensator(benchmark::State& state) {
  hawkes::Params<double> p;
  p.D = 4;
  p.B = 2;
  p.mu.assign(4, 0.3);
  p.alpha.assign(32, 0.1);
  p.sigma2.assign(32, 0.01);
  p.beta = {1.0, 6.0};
  p.nu = 0.1;
  const std::vector<double> z{0.2, -0.1, 0.4, 0.0, 0.1, 0.3, -0.2, 0.05};
  for (auto _ : state) {
    benchmark::DoNotOptimize(hawkes::compensator(p, std::span<const double>(z), 0.7, hawkes::reference_rule()));
  }
}
BENCHMARK(BM_HawkesCompensator);

static void BM_TapeGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ad::Tape tape;
  for (auto _ : state) {
    tape.clear();
    std::vector<ad::Var> x;
    for (std::size_t i = 0; i < n; ++i) x.push_back(tape.parameter(0.001 * static_cast<double>(i)));
    ad::Var acc(0.0);
    for (const auto& v : x) acc = acc + exp(v) * v;
    benchmark::DoNotOptimize(tape.gradient(acc));
  }
}
BENCHMARK(BM_TapeGradient)->Arg(1000)->Arg(100000);
BENCHMARK_MAIN();
