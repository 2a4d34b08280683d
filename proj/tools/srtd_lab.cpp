// Experiment CLI: dataset generation, joint embedding training, augmentation,
// offline agent training, evaluation, and full seeded sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "srtd/datastore.hpp"
#include "srtd/envsuite.hpp"
#include "srtd/harness.hpp"
#include "srtd/imagine.hpp"
#include "srtd/offrl.hpp"
#include "srtd/taskdecomp.hpp"

namespace fs = std::filesystem;
using namespace srtd;

namespace {

lab::ExperimentSpec load_config_or_default(const std::string& path) {
  if (path.empty()) return lab::ExperimentSpec{};
  return lab::load_spec(path);
}

int cmd_gen_data(const std::string& config, const std::string& out,
                 std::optional<std::uint64_t> seed, double scale) {
  lab::ExperimentSpec spec = load_config_or_default(config);
  if (spec.mix.tiers.empty()) {
    const data::Tier cycle[3] = {data::Tier::kMediumReplay, data::Tier::kReplay,
                                 data::Tier::kMediumExpert};
    for (int i = 0; i < spec.suite_size; ++i)
      spec.mix.tiers[i] = cycle[i % 3];
  }
  if (seed.has_value()) spec.mix.seed = *seed;
  if (scale != 1.0) spec.mix.scale(scale);

  fs::create_directories(out);
  const auto suite = env::make_suite(spec.suite_size, spec.suite_seed);
  env::save_suite(suite, out + "/suite.json");
  data::Dataset dataset = data::generate_dataset(suite, spec.mix);
  dataset.window_half_width = spec.embed.half_width;
  data::relabel_returns(dataset);
  data::save(dataset, out + "/dataset.bin");
  data::save_mix(spec.mix, out + "/mix.json");

  std::cout << "wrote " << dataset.trajectories.size() << " trajectories ("
            << dataset.transition_count() << " transitions) for "
            << suite.size() << " tasks to " << out << "/dataset.bin\n";
  return 0;
}

int cmd_train_embed(const std::string& config, const std::string& data_path,
                    const std::string& out, const std::string& variant,
                    std::optional<std::uint64_t> seed) {
  lab::ExperimentSpec spec = load_config_or_default(config);
  task::TrainingConfig cfg = spec.embed;
  if (seed.has_value()) cfg.seed = *seed;
  if (variant == "te") {
    cfg.use_skill_reg = false;
  } else if (variant == "srtd-q") {
    cfg.use_quality_weight = false;
  } else if (variant != "srtd") {
    std::cerr << "unknown variant '" << variant
              << "' (expected srtd, te, srtd-q)\n";
    return 1;
  }

  const data::Dataset dataset = data::load(data_path);
  const task::TrainResult result = task::train_joint(dataset, cfg);
  task::save_checkpoint(result.models, result.log, out);
  const task::TrainLogRow& last = result.log.back();
  std::cout << "trained " << cfg.steps << " steps; final L_SE=" << last.l_se
            << " L_TE=" << last.l_te << " L_SR=" << last.l_sr
            << "; checkpoint in " << out << "\n";
  return 0;
}

int cmd_augment(const std::string& config, const std::string& data_path,
                const std::string& models_dir, const std::string& out,
                const std::string& mode, std::optional<std::uint64_t> seed) {
  lab::ExperimentSpec spec = load_config_or_default(config);
  imagine::AugmentConfig cfg = spec.augment;
  if (seed.has_value()) cfg.seed = *seed;

  data::Dataset dataset = data::load(data_path);
  data::Dataset augmented = [&]() {
    if (mode == "gaussian") return imagine::augment_dataset_gaussian(dataset, cfg);
    if (mode == "id")
      return imagine::augment_dataset(
          dataset, task::load_checkpoint(models_dir), cfg);
    throw std::invalid_argument("unknown augment mode '" + mode + "'");
  }();

  fs::create_directories(out);
  data::save(augmented, out + "/dataset.bin");
  const auto report = imagine::quality_report(augmented);
  imagine::write_quality_report(report, out + "/quality_report.csv");
  std::cout << imagine::quality_report_csv(report);
  return 0;
}

int cmd_train_agent(const std::string& config, const std::string& data_path,
                    const std::string& models_dir, const std::string& out,
                    const std::string& mode, int num_tasks,
                    std::optional<std::uint64_t> seed) {
  lab::ExperimentSpec spec = load_config_or_default(config);
  rl::AgentConfig cfg = spec.agent;
  if (seed.has_value()) cfg.seed = *seed;
  cfg.half_width = spec.embed.half_width;
  cfg.dim_z = spec.embed.dim_z;

  const data::Dataset dataset = data::load(data_path);
  std::optional<fa::ParamMap> encoder;
  if (mode == "onehot") {
    cfg.mode = rl::Conditioning::kOneHot;
    cfg.num_tasks = num_tasks;
  } else if (mode == "embedding") {
    cfg.mode = rl::Conditioning::kSubtaskEmbedding;
    if (models_dir.empty()) {
      std::cerr << "embedding mode needs --models <checkpoint dir>\n";
      return 1;
    }
    encoder = fa::ParamMap::load_file(models_dir + "/task_encoder.pm");
  } else {
    std::cerr << "unknown mode '" << mode << "' (expected onehot, embedding)\n";
    return 1;
  }

  const rl::TrainAgentResult result =
      rl::train_agent(dataset, cfg, encoder ? &*encoder : nullptr);
  rl::save_agent(result.agent, out);
  rl::write_agent_log(result.log, out + "/train_log.csv");
  std::cout << "trained agent for " << cfg.steps << " steps; checkpoint in "
            << out << "\n";
  return 0;
}

int cmd_eval(const std::string& agent_dir, const std::string& suite_path,
             int episodes, std::uint64_t seed, const std::string& out) {
  const rl::Agent agent = rl::load_agent(agent_dir);
  const auto suite = env::load_suite(suite_path);
  const rl::EvalResult result = rl::evaluate(agent, suite, episodes, seed);
  if (!out.empty()) {
    fs::create_directories(fs::path(out).parent_path().empty()
                               ? "."
                               : fs::path(out).parent_path().string());
    rl::write_eval_csv(result, out);
  }
  std::cout << rl::eval_csv(result);
  std::cout << "success_rate: " << 100.0 * result.success_rate
            << "%  mean_return: " << result.mean_return
            << "  normalized_return: " << result.normalized_return << "\n";
  return 0;
}

int cmd_experiment(const std::string& config, const std::string& out, int jobs,
                   double scale, std::optional<std::uint64_t> seed) {
  lab::ExperimentSpec spec = load_config_or_default(config);
  if (scale != 1.0) spec.scale = scale;
  if (seed.has_value()) spec.seeds = {*seed};

  const lab::ExperimentResult result = lab::run_experiment(spec, out, jobs);
  for (const lab::JobReport& report : result.reports) {
    for (const std::string& error : report.errors)
      std::cerr << "seed " << report.seed << " failed stage " << error << "\n";
  }
  std::cout << lab::format_table(result.aggregated);
  std::cout << "results: " << result.out_dir << "/results.csv\n";
  return result.rows.empty() ? 1 : 0;
}

int cmd_plot(const std::string& csv, const std::string& out) {
  const auto rows = lab::read_results_csv(csv);
  const auto aggregated = lab::tabulate(rows);
  const auto images = lab::plot(aggregated, out);
  for (const std::string& image : images) std::cout << "wrote " << image << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skill-regularized task decomposition lab"};
  app.require_subcommand(1);

  std::string config;
  std::string out = lab::default_out_root();
  std::string data_path;
  std::string models_dir;
  std::string agent_dir;
  std::string suite_path;
  std::string mode = "id";
  std::string variant = "srtd";
  std::string csv_path;
  std::optional<std::uint64_t> seed;
  std::uint64_t eval_seed = 1;
  double scale = 1.0;
  int jobs = 1;
  int episodes = 20;
  int num_tasks = 3;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "experiment JSON config");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seed", seed, "override the run seed");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a mixed dataset");
  add_common(gen);
  gen->add_option("--scale", scale, "scale per-tier episode counts");

  CLI::App* embed = app.add_subcommand("train-embed",
                                       "train skill/task embeddings jointly");
  add_common(embed);
  embed->add_option("--data", data_path, "dataset file")->required();
  embed->add_option("--variant", variant, "srtd | te | srtd-q");

  CLI::App* augment =
      app.add_subcommand("augment", "augment a dataset with synthetic data");
  add_common(augment);
  augment->add_option("--data", data_path, "dataset file")->required();
  augment->add_option("--models", models_dir, "embedding checkpoint dir");
  augment->add_option("--mode", mode, "id | gaussian");

  CLI::App* agent = app.add_subcommand("train-agent", "train the offline agent");
  add_common(agent);
  agent->add_option("--data", data_path, "dataset file")->required();
  agent->add_option("--models", models_dir, "embedding checkpoint dir");
  agent->add_option("--mode", mode, "onehot | embedding")->required();
  agent->add_option("--num-tasks", num_tasks, "one-hot context width");

  CLI::App* eval = app.add_subcommand("eval", "evaluate an agent checkpoint");
  eval->add_option("--agent", agent_dir, "agent checkpoint dir")->required();
  eval->add_option("--suite", suite_path, "suite JSON")->required();
  eval->add_option("--episodes", episodes, "episodes per task");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--out", out, "eval CSV path (optional)");

  CLI::App* experiment =
      app.add_subcommand("experiment", "run a full method x seed sweep");
  add_common(experiment);
  experiment->add_option("--jobs", jobs, "parallel seed jobs");
  experiment->add_option("--scale", scale, "scale per-tier episode counts");

  CLI::App* plot = app.add_subcommand("plot", "plot a results CSV");
  plot->add_option("--csv", csv_path, "results.csv path")->required();
  plot->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config, out, seed, scale);
    if (embed->parsed())
      return cmd_train_embed(config, data_path, out, variant, seed);
    if (augment->parsed())
      return cmd_augment(config, data_path, models_dir, out, mode, seed);
    if (agent->parsed())
      return cmd_train_agent(config, data_path, models_dir, out, mode,
                             num_tasks, seed);
    if (eval->parsed())
      return cmd_eval(agent_dir, suite_path, episodes, eval_seed,
                      eval->count("--out") ? out : "");
    if (experiment->parsed())
      return cmd_experiment(config, out, jobs, scale, seed);
    if (plot->parsed()) return cmd_plot(csv_path, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
