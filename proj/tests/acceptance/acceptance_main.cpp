// Release gate: every check below must pass at the stated tolerance.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.
//
// Heavy checks write their artifacts under ./acceptance_out and reuse
// completed pipeline stages on reruns; pass --fresh to recompute everything.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "srtd/datastore.hpp"
#include "srtd/envsuite.hpp"
#include "srtd/harness.hpp"
#include "srtd/imagine.hpp"
#include "srtd/offrl.hpp"
#include "srtd/skillspace.hpp"
#include "srtd/taskdecomp.hpp"
#include "support/test_support.hpp"

namespace fs = std::filesystem;
using namespace srtd;
using test_support::brute_mmd;
using test_support::fd_grad;
using test_support::max_rel_error;
using test_support::naive_forward;
using test_support::random_mat;
using test_support::random_window_batch;

namespace {

int g_jobs = 2;
std::string g_root = "acceptance_out";

struct Outcome {
  bool passed = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// shared fixtures

data::MixConfig three_task_mix(data::Tier t0, data::Tier t1, data::Tier t2,
                               std::uint64_t seed) {
  data::MixConfig mix;
  mix.tiers[0] = t0;
  mix.tiers[1] = t1;
  mix.tiers[2] = t2;
  mix.seed = seed;
  return mix;
}

task::TrainingConfig desk_embed_config(std::uint64_t seed) {
  task::TrainingConfig config;
  config.steps = 5000;
  config.batch = 64;
  config.half_width = 5;
  config.dim_z = 8;
  config.hidden = 64;
  config.lambda = 1.0;
  config.learning_rate = 3e-4;
  config.seed = seed;
  return config;
}

/// Test-only oracle: mean reward recomputed from generated states through the
/// true environment reward function.
double env_relabeled_mean(const data::Dataset& dataset,
                          const std::vector<env::TaskSpec>& suite,
                          data::Origin origin) {
  std::map<int, Eigen::Vector2d> goals;
  for (const env::TaskSpec& task : suite) goals[task.task_id] = task.goal;
  double total = 0.0;
  std::size_t count = 0;
  for (const data::Trajectory& traj : dataset.trajectories) {
    if (traj.origin != origin) continue;
    const Eigen::Vector2d goal = goals.at(traj.task_id);
    for (const data::Transition& tr : traj.transitions) {
      const Eigen::Vector2d position{tr.s_next[0], tr.s_next[1]};
      total += 1.0 - (position - goal).norm() / std::sqrt(2.0);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// scalar-loop loss oracles (same conventions as the unit suites)

double unrolled_skill_loss(const skill::SkillModel& model,
                           const data::WindowBatch& batch, double lambda,
                           const Mat& prior) {
  const int m = batch.size();
  const int n = batch.half_width;
  Mat embeddings(m, model.dim_z);
  double recon = 0.0;
  for (int i = 0; i < m; ++i) {
    const Vec b = naive_forward(model.encoder.layer_sizes(), "tt", 'i',
                                model.encoder.params(),
                                data::skill_window_flat(batch.items[i]));
    embeddings.row(i) = b.transpose();
    for (int j = 0; j < 2 * n; ++j) {
      Vec dec_in(batch.obs_dim + model.dim_z);
      dec_in << batch.items[i].states[j], b;
      const Vec predicted = naive_forward(model.decoder.layer_sizes(), "tt",
                                          't', model.decoder.params(), dec_in);
      recon += (batch.items[i].actions[j] - predicted).norm();
    }
  }
  recon /= m;
  const double scale = model.kernel.scale;
  const double penalty =
      brute_mmd(embeddings, prior, [scale](const Vec& x, const Vec& y) {
        return scale / (scale + (x - y).squaredNorm());
      });
  return recon + lambda * penalty;
}

double unrolled_te(const task::TaskModel& model,
                   const data::WindowBatch& batch) {
  const int m = batch.size();
  const int n = batch.half_width;
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const Vec z = naive_forward(model.encoder.layer_sizes(), "tt", 'i',
                                model.encoder.params(),
                                data::task_window_flat(batch.items[i]));
    for (int k = 0; k <= n; ++k) {
      Vec dec_in(batch.obs_dim + batch.act_dim + model.dim_z);
      dec_in << batch.items[i].states[k], batch.items[i].actions[k], z;
      const Vec predicted = naive_forward(model.decoder.layer_sizes(), "tt",
                                          'i', model.decoder.params(), dec_in);
      Vec target(batch.obs_dim + 1);
      target << batch.items[i].next_states[k], batch.items[i].rewards[k];
      total += (target - predicted).norm();
    }
  }
  return total / m;
}

double unrolled_sr(const task::TaskModel& model,
                   const fa::ParamMap& skill_encoder,
                   const data::WindowBatch& batch) {
  const int m = batch.size();
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const Vec z = naive_forward(model.encoder.layer_sizes(), "tt", 'i',
                                model.encoder.params(),
                                data::task_window_flat(batch.items[i]));
    const Vec b = naive_forward(skill_encoder.layer_sizes(), "tt", 'i',
                                skill_encoder.params(),
                                data::skill_window_flat(batch.items[i]));
    total += batch.items[i].quality * (z - b).norm();
  }
  return total / m;
}

// ---------------------------------------------------------------------------
// criteria

Outcome criterion_mmd_oracle() {
  Rng rng(101);
  double worst = 0.0;
  for (int m = 2; m <= 8; ++m) {
    for (int rep = 0; rep < 100; ++rep) {
      const Mat b = random_mat(m, 8, rng, 2.0);
      const Mat p = random_mat(m, 8, rng, 2.0);
      const skill::KernelSpec imq{
          skill::KernelSpec::Family::kInverseMultiquadratic, 16.0};
      const skill::KernelSpec rbf{skill::KernelSpec::Family::kGaussianRbf,
                                  2.0};
      const double d1 = std::abs(
          skill::mmd_penalty(b, p, imq) -
          brute_mmd(b, p, [](const Vec& x, const Vec& y) {
            return 16.0 / (16.0 + (x - y).squaredNorm());
          }));
      const double d2 = std::abs(
          skill::mmd_penalty(b, p, rbf) -
          brute_mmd(b, p, [](const Vec& x, const Vec& y) {
            return std::exp(-(x - y).squaredNorm() / 4.0);
          }));
      worst = std::max({worst, d1, d2});
    }
  }
  std::ostringstream detail;
  detail << "max |difference| vs brute force = " << worst;
  return {worst < 1e-10, detail.str()};
}

Outcome criterion_literal_coefficients() {
  double worst = 0.0;
  for (const auto family : {skill::KernelSpec::Family::kInverseMultiquadratic,
                            skill::KernelSpec::Family::kGaussianRbf}) {
    const skill::KernelSpec spec{family, 7.5};
    for (int m = 2; m <= 8; ++m) {
      Mat batch(m, 8);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < 8; ++j) batch(i, j) = 0.1 * j - 0.3;
      worst = std::max(worst,
                       std::abs(skill::mmd_penalty(batch, batch, spec) - 1.0));
    }
  }
  std::ostringstream detail;
  detail << "max |value - 1| on degenerate batches = " << worst;
  return {worst <= 1e-9, detail.str()};
}

Outcome criterion_gradient_suite() {
  double worst = 0.0;
  std::string worst_name = "none";
  auto record = [&](const std::string& name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };

  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    Rng rng(seed);
    const int n = 2;
    skill::SkillModel sm = skill::SkillModel::make(4, 2, n, 3, 12, rng);
    task::TaskModel tm = task::TaskModel::make(4, 2, n, 3, 12, rng);
    const data::WindowBatch batch = random_window_batch(6, n, 4, 2, rng);
    const Mat prior = skill::sample_prior(6, 3, rng);

    auto check = [&](const std::string& name, const fa::DiffLoss& objective,
                     const Vec& params) {
      const Vec analytic = fa::grad(objective, params);
      const Vec numeric = fd_grad(
          [&](const Vec& p) { return objective.value(p); }, params, 1e-5);
      record(name, max_rel_error(analytic, numeric));
    };

    check("L_SE", *skill::make_skill_objective(sm, batch, 1.0, prior),
          sm.flat_params());
    check("L_TE", *task::make_te_objective(tm, batch), tm.flat_params());
    check("L_SR", *task::make_sr_objective(tm, sm.encoder, batch),
          tm.flat_params());
    check("L_SRTD",
          *task::make_srtd_objective(tm, sm.encoder, batch, 1.0, prior),
          tm.flat_params());

    rl::AgentConfig agent_cfg;
    agent_cfg.mode = rl::Conditioning::kOneHot;
    agent_cfg.num_tasks = 2;
    agent_cfg.hidden = 12;
    agent_cfg.seed = seed;
    rl::Agent agent = rl::Agent::make(agent_cfg, 4, 2, std::nullopt);
    const Mat x = random_mat(6, 6, rng);
    const Mat a = random_mat(6, 2, rng, 0.5);
    check("actor",
          *rl::make_actor_objective(agent.actor, agent.critic1, x, a, 2.5),
          agent.actor.params());
  }

  std::ostringstream detail;
  detail << "max relative error " << worst << " (" << worst_name << ")";
  return {worst < 1e-3, detail.str()};
}

Outcome criterion_loss_fixtures() {
  Rng rng(44);
  double worst = 0.0;

  {
    const int n = 2;
    skill::SkillModel sm = skill::SkillModel::make(4, 2, n, 3, 8, rng);
    const data::WindowBatch batch = random_window_batch(4, n, 4, 2, rng);
    const Mat prior = skill::sample_prior(4, 3, rng);
    const double value = skill::skill_loss(sm, batch, 1.0, prior).total;
    worst = std::max(worst,
                     std::abs(value - unrolled_skill_loss(sm, batch, 1.0, prior)));
  }
  {
    const int n = 2;
    task::TaskModel tm = task::TaskModel::make(4, 2, n, 3, 8, rng);
    const data::WindowBatch batch = random_window_batch(4, n, 4, 2, rng);
    worst = std::max(worst,
                     std::abs(task::te_loss(tm, batch) - unrolled_te(tm, batch)));
  }
  {
    task::TaskModel tm = task::TaskModel::make(4, 2, 0, 3, 8, rng);
    const data::WindowBatch batch = random_window_batch(1, 0, 4, 2, rng);
    worst = std::max(worst,
                     std::abs(task::te_loss(tm, batch) - unrolled_te(tm, batch)));
  }
  {
    const int n = 2;
    task::TaskModel tm = task::TaskModel::make(4, 2, n, 3, 8, rng);
    skill::SkillModel sm = skill::SkillModel::make(4, 2, n, 3, 8, rng);
    data::WindowBatch batch = random_window_batch(3, n, 4, 2, rng);
    batch.items[0].quality = 0.0;
    batch.items[1].quality = 0.5;
    batch.items[2].quality = 1.0;
    worst = std::max(worst, std::abs(task::sr_loss(tm, sm.encoder, batch) -
                                     unrolled_sr(tm, sm.encoder, batch)));

    const Mat prior = skill::sample_prior(3, 3, rng);
    const auto parts = task::srtd_loss(tm, sm.encoder, batch, 0.8, prior);
    const double scale = tm.kernel.scale;
    const Mat z = tm.encoder.forward_batch([&] {
      Mat inputs(3, (n + 1) * 7);
      for (int i = 0; i < 3; ++i)
        inputs.row(i) = data::task_window_flat(batch.items[i]).transpose();
      return inputs;
    }());
    const double oracle =
        unrolled_te(tm, batch) + unrolled_sr(tm, sm.encoder, batch) +
        0.8 * brute_mmd(z, prior, [scale](const Vec& x, const Vec& y) {
          return scale / (scale + (x - y).squaredNorm());
        });
    worst = std::max(worst, std::abs(parts.total - oracle));
  }

  std::ostringstream detail;
  detail << "max |loss - scalar oracle| = " << worst;
  return {worst < 1e-12, detail.str()};
}

Outcome criterion_quality_ordering() {
  int hits = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto suite = env::make_suite(3, 7);
    data::Dataset dataset = data::generate_dataset(
        suite, three_task_mix(data::Tier::kMediumReplay, data::Tier::kReplay,
                              data::Tier::kMediumExpert, seed));
    data::relabel_returns(dataset);
    const task::TrainResult trained =
        task::train_joint(dataset, desk_embed_config(seed));

    const int n = trained.models.task.half_width;
    const auto index = data::AnchorIndex::build(dataset, n);
    const int count = static_cast<int>(index.anchors.size());

    Mat task_inputs(count, (n + 1) * 7);
    Mat skill_inputs(count, 2 * n * 6);
    std::vector<double> weights(count);
    for (int i = 0; i < count; ++i) {
      const auto w = data::extract_window(dataset, index.anchors[i].trajectory,
                                          index.anchors[i].t, n);
      task_inputs.row(i) = data::task_window_flat(w).transpose();
      skill_inputs.row(i) = data::skill_window_flat(w).transpose();
      weights[i] = w.quality;
    }
    const Mat z = trained.models.task.encoder.forward_batch(task_inputs);
    const Mat b = trained.models.skill.encoder.forward_batch(skill_inputs);

    std::vector<int> order(count);
    for (int i = 0; i < count; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
      return weights[lhs] < weights[rhs];
    });
    const int quartile = count / 4;
    double bottom = 0.0;
    double top = 0.0;
    for (int i = 0; i < quartile; ++i) {
      bottom += (z.row(order[i]) - b.row(order[i])).norm();
      top += (z.row(order[count - 1 - i]) - b.row(order[count - 1 - i])).norm();
    }
    bottom /= quartile;
    top /= quartile;
    const bool ok = top < bottom;
    hits += ok ? 1 : 0;
    detail << "seed " << seed << ": top " << top << (ok ? " < " : " >= ")
           << "bottom " << bottom << "; ";
  }
  detail << hits << "/3 seeds ordered";
  return {hits >= 2, detail.str()};
}

Outcome criterion_augmentation_quality() {
  int hits = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto suite = env::make_suite(3, 7);
    data::Dataset dataset = data::generate_dataset(
        suite, three_task_mix(data::Tier::kMediumReplay,
                              data::Tier::kMediumReplay,
                              data::Tier::kMediumReplay, seed));
    data::relabel_returns(dataset);
    const task::TrainResult trained =
        task::train_joint(dataset, desk_embed_config(seed));

    imagine::AugmentConfig cfg;
    cfg.fraction = 0.5;
    cfg.noise_sigma = 0.01;
    cfg.seed = seed;
    const data::Dataset imagined =
        imagine::augment_dataset(dataset, trained.models, cfg);
    const data::Dataset noisy = imagine::augment_dataset_gaussian(dataset, cfg);

    const double source_mean =
        env_relabeled_mean(dataset, suite, data::Origin::kReal);
    const double imagined_mean =
        env_relabeled_mean(imagined, suite, data::Origin::kImagined);
    const double gaussian_mean =
        env_relabeled_mean(noisy, suite, data::Origin::kGaussian);
    const bool ok = imagined_mean > gaussian_mean && imagined_mean > source_mean;
    hits += ok ? 1 : 0;
    detail << "seed " << seed << ": imagined " << imagined_mean << " source "
           << source_mean << " gaussian " << gaussian_mean << "; ";
  }
  detail << hits << "/3 seeds ordered";
  return {hits >= 2, detail.str()};
}

lab::ExperimentSpec desk_sweep_spec() {
  lab::ExperimentSpec spec;
  spec.name = "desk_sweep";
  spec.suite_size = 3;
  spec.suite_seed = 7;
  spec.methods = {lab::Method::kOneHotBaseline, lab::Method::kSrtd,
                  lab::Method::kSrtdImagined};
  spec.seeds = {1, 2, 3};
  spec.embed = desk_embed_config(0);
  spec.agent.steps = 50000;
  spec.agent.batch = 256;
  spec.agent.hidden = 64;
  spec.eval_episodes = 40;
  return spec;
}

struct SweepOutcome {
  Outcome directional;
  Outcome offline_contract;
};

SweepOutcome criterion_end_to_end() {
  const lab::ExperimentSpec spec = desk_sweep_spec();
  const lab::ExperimentResult result =
      lab::run_experiment(spec, g_root, g_jobs);

  SweepOutcome outcome;
  std::map<std::string, std::pair<double, int>> means;
  for (const lab::SeedResult& row : result.rows) {
    means[row.method].first += row.success_rate;
    means[row.method].second += 1;
  }
  std::ostringstream detail;
  bool complete = true;
  for (const auto method : {"onehot-baseline", "SRTD", "SRTD+ID"}) {
    if (means[method].second != 3) complete = false;
  }
  if (!complete) {
    detail << "sweep incomplete:";
    for (const auto& report : result.reports)
      for (const auto& error : report.errors) detail << " [" << error << "]";
    outcome.directional = {false, detail.str()};
  } else {
    const double onehot = means["onehot-baseline"].first / 3.0;
    const double srtd = means["SRTD"].first / 3.0;
    const double srtd_id = means["SRTD+ID"].first / 3.0;
    detail << "mean success%: onehot " << onehot << ", SRTD " << srtd
           << ", SRTD+ID " << srtd_id;
    outcome.directional = {srtd >= onehot && srtd_id >= srtd - 2.0,
                           detail.str()};
  }

  // offline contract over the same sweep's stage records
  std::ostringstream offline_detail;
  bool offline_ok = true;
  std::uint64_t eval_steps = 0;
  for (const auto& report : result.reports) {
    for (const auto& stage : report.stages) {
      const bool training_stage = stage.name.rfind("train-", 0) == 0 ||
                                  stage.name.rfind("augment", 0) == 0;
      if (training_stage && stage.env_steps != 0) {
        offline_ok = false;
        offline_detail << stage.name << " took " << stage.env_steps
                       << " env steps; ";
      }
      if (stage.name.rfind("eval", 0) == 0) eval_steps += stage.env_steps;
    }
  }
  if (eval_steps == 0) {
    offline_ok = false;
    offline_detail << "no recorded evaluation steps; ";
  }
  offline_detail << "training stages 0 env steps, evaluation " << eval_steps;
  outcome.offline_contract = {offline_ok, offline_detail.str()};
  return outcome;
}

Outcome criterion_data_quality_monotonicity() {
  auto run_mix = [&](const std::string& name, data::Tier tier) {
    lab::ExperimentSpec spec;
    spec.name = name;
    spec.suite_size = 3;
    spec.suite_seed = 7;
    spec.methods = {lab::Method::kOneHotBaseline};
    spec.seeds = {1, 2, 3};
    spec.mix = three_task_mix(tier, tier, tier, 0);
    spec.embed = desk_embed_config(0);
    spec.agent.steps = 50000;
    spec.agent.batch = 256;
    spec.agent.hidden = 64;
    spec.eval_episodes = 20;
    const lab::ExperimentResult result =
        lab::run_experiment(spec, g_root, g_jobs);
    double total = 0.0;
    for (const lab::SeedResult& row : result.rows) total += row.success_rate;
    return result.rows.size() == 3 ? total / 3.0 : -1.0;
  };

  const double expert = run_mix("all_me", data::Tier::kMediumExpert);
  const double replay = run_mix("all_mr", data::Tier::kMediumReplay);
  std::ostringstream detail;
  detail << "mean success%: all-ME " << expert << " vs all-MR " << replay;
  if (expert < 0.0 || replay < 0.0)
    return {false, "sweep incomplete; " + detail.str()};
  return {expert > replay, detail.str()};
}

Outcome criterion_determinism() {
  lab::ExperimentSpec spec;
  spec.name = "determinism";
  spec.suite_size = 3;
  spec.suite_seed = 7;
  spec.methods = {lab::Method::kSrtdImagined};
  spec.seeds = {5};
  spec.embed = desk_embed_config(0);
  spec.embed.steps = 300;
  spec.agent.steps = 300;
  spec.agent.batch = 64;
  spec.eval_episodes = 4;
  spec.scale = 0.1;

  const std::string root_a = g_root + "/det_a";
  const std::string root_b = g_root + "/det_b";
  fs::remove_all(root_a);
  fs::remove_all(root_b);
  (void)lab::run_experiment(spec, root_a, 1);
  (void)lab::run_experiment(spec, root_b, 1);

  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root_a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const fs::path relative = fs::relative(entry.path(), root_a);
    const fs::path twin = fs::path(root_b) / relative;
    if (!fs::exists(twin)) {
      return {false, "missing artifact on rerun: " + relative.string()};
    }
    std::ifstream in_a(entry.path(), std::ios::binary);
    std::ifstream in_b(twin, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(in_a)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(in_b)),
                              std::istreambuf_iterator<char>());
    if (bytes_a != bytes_b)
      return {false, "artifact differs between reruns: " + relative.string()};
  }
  std::ostringstream detail;
  detail << files << " artifacts byte-identical across independent reruns";
  return {files > 0, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  bool fresh = false;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--fresh") == 0) fresh = true;
    if (std::strcmp(argv[i], "--jobs") == 0 && i + 1 < argc)
      g_jobs = std::atoi(argv[++i]);
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc)
      only = std::atoi(argv[++i]);
  }
  if (fresh) fs::remove_all(g_root);
  fs::create_directories(g_root);

  struct Entry {
    int id;
    std::string label;
    std::function<Outcome()> run;
  };

  // criteria 7 and 9 share one sweep; cache its outcome
  std::optional<SweepOutcome> sweep;
  auto sweep_once = [&]() -> SweepOutcome& {
    if (!sweep.has_value()) sweep = criterion_end_to_end();
    return *sweep;
  };

  const std::vector<Entry> entries = {
      {1, "mmd oracle equivalence", criterion_mmd_oracle},
      {2, "literal coefficient lock", criterion_literal_coefficients},
      {3, "gradient suite", criterion_gradient_suite},
      {4, "loss fixture oracle", criterion_loss_fixtures},
      {5, "quality ordering after joint training", criterion_quality_ordering},
      {6, "imagined-demonstration quality", criterion_augmentation_quality},
      {7, "end-to-end directional check",
       [&]() { return sweep_once().directional; }},
      {8, "data-quality monotonicity", criterion_data_quality_monotonicity},
      {9, "offline contract", [&]() { return sweep_once().offline_contract; }},
      {10, "stage determinism", criterion_determinism},
  };

  int failures = 0;
  for (const Entry& entry : entries) {
    if (only != 0 && entry.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = entry.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    failures += outcome.passed ? 0 : 1;
    std::cout << (outcome.passed ? "PASS" : "FAIL") << " criterion "
              << entry.id << ": " << entry.label << " [" << std::fixed
              << std::setprecision(1) << seconds << "s] -- " << outcome.detail
              << "\n"
              << std::defaultfloat;
    std::cout.flush();
  }

  if (failures == 0) {
    std::cout << "all criteria passed\n";
  } else {
    std::cout << failures << " criterion(s) failed\n";
  }
  return failures == 0 ? 0 : 1;
}
