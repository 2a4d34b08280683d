#include <benchmark/benchmark.h>

#include "srtd/datastore.hpp"
#include "srtd/envsuite.hpp"
#include "srtd/offrl.hpp"
#include "srtd/skillspace.hpp"
#include "srtd/taskdecomp.hpp"
#include "support/test_support.hpp"

using namespace srtd;

namespace {

data::Dataset bench_dataset() {
  const auto suite = env::make_suite(3, 7);
  data::MixConfig mix;
  mix.tiers[0] = data::Tier::kMediumReplay;
  mix.tiers[1] = data::Tier::kReplay;
  mix.tiers[2] = data::Tier::kMediumExpert;
  mix.scale(0.2);
  mix.seed = 1;
  data::Dataset dataset = data::generate_dataset(suite, mix);
  data::relabel_returns(dataset);
  return dataset;
}

void bm_forward_batch(benchmark::State& state) {
  Rng rng(1);
  fa::ParamMap net =
      fa::ParamMap::glorot({60, 64, 64, 8}, fa::Activation::kTanh,
                           fa::OutputActivation::kIdentity, rng);
  const Mat inputs = test_support::random_mat(64, 60, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward_batch(inputs));
  }
}
BENCHMARK(bm_forward_batch);

void bm_mmd_penalty(benchmark::State& state) {
  Rng rng(2);
  const int m = static_cast<int>(state.range(0));
  const Mat b = test_support::random_mat(m, 8, rng);
  const Mat p = test_support::random_mat(m, 8, rng);
  const skill::KernelSpec spec{
      skill::KernelSpec::Family::kInverseMultiquadratic, 16.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(skill::mmd_penalty(b, p, spec));
  }
}
BENCHMARK(bm_mmd_penalty)->Arg(64)->Arg(256);

void bm_env_episode(benchmark::State& state) {
  const auto suite = env::make_suite(1, 7);
  Rng rng(3);
  for (auto _ : state) {
    env::EnvState s = env::reset(suite[0], 1);
    bool done = false;
    double total = 0.0;
    while (!done) {
      const auto action = env::scripted_policy(suite[0], s, 0.5, rng);
      const auto result = env::step(suite[0], s, action);
      total += result.reward;
      done = result.done;
      s = result.next;
    }
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(bm_env_episode);

void bm_joint_training_step(benchmark::State& state) {
  const data::Dataset dataset = bench_dataset();
  Rng rng(4);
  skill::SkillModel sm = skill::SkillModel::make(4, 2, 5, 8, 64, rng);
  task::TaskModel tm = task::TaskModel::make(4, 2, 5, 8, 64, rng);
  Vec g_phi = Vec::Zero(sm.param_count());
  Vec g_theta = Vec::Zero(tm.param_count());
  task::SrtdOptions opts;
  for (auto _ : state) {
    const data::WindowBatch batch = data::sample_windows(dataset, 64, 5, rng);
    const Mat prior_b = skill::sample_prior(64, 8, rng);
    const Mat prior_z = skill::sample_prior(64, 8, rng);
    g_phi.setZero();
    g_theta.setZero();
    benchmark::DoNotOptimize(
        skill::skill_loss_grad(sm, batch, 1.0, prior_b, g_phi));
    benchmark::DoNotOptimize(task::srtd_loss_grad(tm, sm.encoder, batch, 1.0,
                                                  prior_z, opts, g_theta));
  }
}
BENCHMARK(bm_joint_training_step);

void bm_agent_update(benchmark::State& state) {
  const data::Dataset dataset = bench_dataset();
  rl::AgentConfig cfg;
  cfg.mode = rl::Conditioning::kOneHot;
  cfg.num_tasks = 3;
  cfg.batch = 256;
  const rl::TransitionTable table =
      rl::build_transition_table(dataset, cfg, nullptr);
  rl::AgentTrainer trainer(rl::Agent::make(cfg, 4, 2, std::nullopt));
  Rng rng(5);
  for (auto _ : state) {
    const auto batch = rl::sample_update_batch(table, cfg.batch, rng);
    benchmark::DoNotOptimize(trainer.update(batch));
  }
}
BENCHMARK(bm_agent_update);

}  // namespace

BENCHMARK_MAIN();
