#include <benchmark/benchmark.h>

#include "marlab/advantage.hpp"
#include "marlab/environments.hpp"
#include "marlab/oracle.hpp"
#include "marlab/trainer.hpp"

using namespace marlab;

namespace {

DecMdp bench_mdp(int states, int agents) {
  return random_decmdp(states, agents, std::vector<int>(agents, 3), 7, 1.0,
                       0.95);
}

JointPolicy bench_policy(const DecMdp& mdp, std::uint64_t seed) {
  Rng rng(seed);
  JointPolicy jp = JointPolicy::uniform(mdp.n_states, mdp.action_counts);
  for (int i = 0; i < jp.n_agents(); ++i)
    jp.agent(i).randomize_logits(0.5, rng);
  return jp;
}

void BM_exact_eval(benchmark::State& state) {
  const DecMdp mdp = bench_mdp(static_cast<int>(state.range(0)), 2);
  const JointPolicy jp = bench_policy(mdp, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_eval(mdp, jp).expected_return);
  }
}
BENCHMARK(BM_exact_eval)->Arg(4)->Arg(16)->Arg(64);

void BM_rollout(benchmark::State& state) {
  const DecMdp mdp = bench_mdp(8, 2);
  const JointPolicy jp = bench_policy(mdp, 2);
  const int episodes = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rollout(mdp, jp, 32, episodes, 3).n_steps());
  }
  state.SetItemsProcessed(state.iterations() * episodes * 32);
}
BENCHMARK(BM_rollout)->Arg(16)->Arg(128);

void BM_corrected_backward_pass(benchmark::State& state) {
  const DecMdp mdp = bench_mdp(8, 2);
  const JointPolicy base = bench_policy(mdp, 4);
  JointPolicy inter = base;
  {
    Rng rng(5);
    std::vector<double> step(inter.agent(0).logits().size());
    for (double& x : step) x = 0.4 * rng.normal();
    inter.agent(0).add_to_logits(step);
  }
  const RolloutBatch batch =
      rollout(mdp, base, 32, static_cast<int>(state.range(0)), 6);
  const ValueTable v{exact_eval(mdp, base).v};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        preopc(batch, v, base, inter, mdp.gamma, 0.95).advantage.size());
  }
  state.SetItemsProcessed(state.iterations() * batch.n_steps());
}
BENCHMARK(BM_corrected_backward_pass)->Arg(16)->Arg(128);

void BM_clipped_surrogate(benchmark::State& state) {
  const DecMdp mdp = bench_mdp(8, 3);
  const JointPolicy base = bench_policy(mdp, 8);
  const JointPolicy working = bench_policy(mdp, 9);
  const RolloutBatch batch = rollout(mdp, base, 32, 64, 10);
  Rng rng(11);
  std::vector<double> adv(batch.n_steps());
  for (double& a : adv) a = rng.normal();
  const std::vector<int> preceding{0, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        clipped_surrogate(batch, adv, base, working, 2, preceding, 0.2)
            .objective);
  }
  state.SetItemsProcessed(state.iterations() * batch.n_steps());
}
BENCHMARK(BM_clipped_surrogate);

void BM_bound_report(benchmark::State& state) {
  const DecMdp mdp = bench_mdp(static_cast<int>(state.range(0)), 3);
  const JointPolicy base = bench_policy(mdp, 12);
  JointPolicy target = base;
  {
    Rng rng(13);
    for (int i = 0; i < 3; ++i) {
      std::vector<double> step(target.agent(i).logits().size());
      for (double& x : step) x = 0.3 * rng.normal();
      target.agent(i).add_to_logits(step);
    }
  }
  const std::vector<int> order{0, 1, 2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        bound_report(mdp, base, target, order, 0.9).joint_gap);
  }
}
BENCHMARK(BM_bound_report)->Arg(4)->Arg(8);

void BM_a2po_stage(benchmark::State& state) {
  const DecMdp mdp = bench_mdp(8, 3);
  const JointPolicy base = bench_policy(mdp, 14);
  const RolloutBatch batch = rollout(mdp, base, 32, 32, 15);
  TrainerConfig cfg;
  cfg.gamma = mdp.gamma;
  cfg.ppo_epochs = 8;
  cfg.lr = 0.3;
  for (auto _ : state) {
    Rng rng(16);
    benchmark::DoNotOptimize(
        a2po_stage(mdp, batch, base, ValueTable::zeros(mdp.n_states), cfg, rng)
            .updates.size());
  }
}
BENCHMARK(BM_a2po_stage);

}  // namespace

BENCHMARK_MAIN();
