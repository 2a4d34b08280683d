#include "srtd/harness.hpp"

#include <nlohmann/json.hpp>

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace srtd::lab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStageFile = ".stage.json";

std::string slug(Method method) {
  switch (method) {
    case Method::kOneHotBaseline:
      return "onehot";
    case Method::kTaskEmbeddingOnly:
      return "te";
    case Method::kSrtdUnweighted:
      return "srtd-q";
    case Method::kSrtd:
      return "srtd";
    case Method::kSrtdNoise:
      return "srtd-n";
    case Method::kSrtdImagined:
      return "srtd-id";
  }
  return "unknown";
}

json embed_config_json(const task::TrainingConfig& c) {
  return {{"lambda", c.lambda},          {"batch", c.batch},
          {"learning_rate", c.learning_rate}, {"half_width", c.half_width},
          {"dim_z", c.dim_z},            {"hidden", c.hidden},
          {"steps", c.steps},            {"log_every", c.log_every}};
}

task::TrainingConfig embed_config_from_json(const json& j,
                                            task::TrainingConfig c) {
  c.lambda = j.value("lambda", c.lambda);
  c.batch = j.value("batch", c.batch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.half_width = j.value("half_width", c.half_width);
  c.dim_z = j.value("dim_z", c.dim_z);
  c.hidden = j.value("hidden", c.hidden);
  c.steps = j.value("steps", c.steps);
  c.log_every = j.value("log_every", c.log_every);
  return c;
}

json agent_config_json(const rl::AgentConfig& c) {
  return {{"alpha", c.bc_alpha},
          {"gamma", c.gamma},
          {"target_rate", c.target_rate},
          {"policy_noise", c.policy_noise},
          {"noise_clip", c.noise_clip},
          {"policy_delay", c.policy_delay},
          {"batch", c.batch},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"hidden", c.hidden},
          {"log_every", c.log_every}};
}

rl::AgentConfig agent_config_from_json(const json& j, rl::AgentConfig c) {
  c.bc_alpha = j.value("alpha", c.bc_alpha);
  c.gamma = j.value("gamma", c.gamma);
  c.target_rate = j.value("target_rate", c.target_rate);
  c.policy_noise = j.value("policy_noise", c.policy_noise);
  c.noise_clip = j.value("noise_clip", c.noise_clip);
  c.policy_delay = j.value("policy_delay", c.policy_delay);
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.hidden = j.value("hidden", c.hidden);
  c.log_every = j.value("log_every", c.log_every);
  return c;
}

json augment_config_json(const imagine::AugmentConfig& c) {
  return {{"horizon", c.horizon},
          {"fraction", c.fraction},
          {"source", c.source == imagine::AugmentConfig::Source::kTopQuality
                         ? "top-quality"
                         : "uniform"},
          {"sigma", c.noise_sigma}};
}

imagine::AugmentConfig augment_config_from_json(const json& j,
                                                imagine::AugmentConfig c) {
  c.horizon = j.value("horizon", c.horizon);
  c.fraction = j.value("fraction", c.fraction);
  const std::string source = j.value("source", "top-quality");
  c.source = source == "uniform" ? imagine::AugmentConfig::Source::kUniform
                                 : imagine::AugmentConfig::Source::kTopQuality;
  c.noise_sigma = j.value("sigma", c.noise_sigma);
  return c;
}

/// Completed marker + inputs fingerprint + env-step count of a stage.
struct StageRecord {
  std::string fingerprint;
  std::uint64_t env_steps = 0;
};

bool read_stage_record(const fs::path& dir, StageRecord& record) {
  std::ifstream in(dir / kStageFile);
  if (!in) return false;
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error&) {
    return false;
  }
  record.fingerprint = doc.value("fingerprint", "");
  record.env_steps = doc.value("env_steps", static_cast<std::uint64_t>(0));
  return true;
}

void write_stage_record(const fs::path& dir, const StageRecord& record) {
  json doc{{"fingerprint", record.fingerprint},
           {"env_steps", record.env_steps}};
  std::ofstream out(dir / kStageFile);
  if (!out)
    throw FormatError("stage: cannot write marker in " + dir.string());
  out << doc.dump(2) << "\n";
}

/// Runs body() unless the stage directory already carries a marker with the
/// same fingerprint. Records the number of environment transitions the body
/// consumed.
template <typename Body>
StageInfo run_stage(const fs::path& dir, const std::string& name,
                    const std::string& fingerprint, Body&& body) {
  StageInfo info;
  info.name = name;
  StageRecord record;
  if (read_stage_record(dir, record) && record.fingerprint == fingerprint) {
    info.cached = true;
    info.env_steps = record.env_steps;
    return info;
  }
  fs::create_directories(dir);
  const std::uint64_t before = env::step_count();
  body(dir);
  record.fingerprint = fingerprint;
  record.env_steps = env::step_count() - before;
  write_stage_record(dir, record);
  info.cached = false;
  info.env_steps = record.env_steps;
  return info;
}

struct MethodPlan {
  bool needs_embed = false;
  bool embed_skill_reg = true;
  bool embed_quality = true;
  std::string embed_variant;  // directory suffix
  bool augment_imagined = false;
  bool augment_noise = false;
};

MethodPlan plan_for(Method method) {
  MethodPlan plan;
  switch (method) {
    case Method::kOneHotBaseline:
      return plan;
    case Method::kTaskEmbeddingOnly:
      plan.needs_embed = true;
      plan.embed_skill_reg = false;
      plan.embed_variant = "te";
      return plan;
    case Method::kSrtdUnweighted:
      plan.needs_embed = true;
      plan.embed_quality = false;
      plan.embed_variant = "srtd-q";
      return plan;
    case Method::kSrtd:
      plan.needs_embed = true;
      plan.embed_variant = "srtd";
      return plan;
    case Method::kSrtdNoise:
      plan.needs_embed = true;
      plan.embed_variant = "srtd";
      plan.augment_noise = true;
      return plan;
    case Method::kSrtdImagined:
      plan.needs_embed = true;
      plan.embed_variant = "srtd";
      plan.augment_imagined = true;
      return plan;
  }
  return plan;
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::kOneHotBaseline:
      return "onehot-baseline";
    case Method::kTaskEmbeddingOnly:
      return "TE";
    case Method::kSrtdUnweighted:
      return "SRTD-Q";
    case Method::kSrtd:
      return "SRTD";
    case Method::kSrtdNoise:
      return "SRTD+N";
    case Method::kSrtdImagined:
      return "SRTD+ID";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "onehot-baseline") return Method::kOneHotBaseline;
  if (name == "TE") return Method::kTaskEmbeddingOnly;
  if (name == "SRTD-Q") return Method::kSrtdUnweighted;
  if (name == "SRTD") return Method::kSrtd;
  if (name == "SRTD+N") return Method::kSrtdNoise;
  if (name == "SRTD+ID") return Method::kSrtdImagined;
  throw FormatError("unknown method '" + name + "'");
}

std::string spec_to_json(const ExperimentSpec& spec) {
  json methods = json::array();
  for (Method m : spec.methods) methods.push_back(method_name(m));
  json doc{{"name", spec.name},
           {"suite", {{"num_tasks", spec.suite_size}, {"seed", spec.suite_seed}}},
           {"mix", json::parse(data::mix_to_json(spec.mix))},
           {"methods", methods},
           {"seeds", spec.seeds},
           {"embed", embed_config_json(spec.embed)},
           {"agent", agent_config_json(spec.agent)},
           {"augment", augment_config_json(spec.augment)},
           {"eval_episodes", spec.eval_episodes},
           {"scale", spec.scale}};
  return doc.dump(2);
}

ExperimentSpec spec_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("experiment spec: invalid JSON: ") + e.what());
  }
  ExperimentSpec spec;
  spec.name = doc.value("name", spec.name);
  if (doc.contains("suite")) {
    spec.suite_size = doc["suite"].value("num_tasks", spec.suite_size);
    spec.suite_seed = doc["suite"].value("seed", spec.suite_seed);
  }
  if (doc.contains("mix")) spec.mix = data::mix_from_json(doc["mix"].dump());
  if (doc.contains("methods")) {
    spec.methods.clear();
    for (const auto& name : doc["methods"])
      spec.methods.push_back(method_from_name(name.get<std::string>()));
  }
  if (doc.contains("seeds")) {
    spec.seeds.clear();
    for (const auto& s : doc["seeds"])
      spec.seeds.push_back(s.get<std::uint64_t>());
  }
  if (doc.contains("embed"))
    spec.embed = embed_config_from_json(doc["embed"], spec.embed);
  if (doc.contains("agent"))
    spec.agent = agent_config_from_json(doc["agent"], spec.agent);
  if (doc.contains("augment"))
    spec.augment = augment_config_from_json(doc["augment"], spec.augment);
  spec.eval_episodes = doc.value("eval_episodes", spec.eval_episodes);
  spec.scale = doc.value("scale", spec.scale);
  return spec;
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("experiment spec: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return spec_from_json(buffer.str());
}

namespace {

ExperimentSpec resolve_spec(ExperimentSpec spec) {
  if (spec.suite_size < 1)
    throw std::invalid_argument("experiment: suite_size must be >= 1");
  if (spec.seeds.empty())
    throw std::invalid_argument("experiment: need at least one seed");
  if (spec.methods.empty())
    throw std::invalid_argument("experiment: need at least one method");
  if (spec.mix.tiers.empty()) {
    const data::Tier cycle[3] = {data::Tier::kMediumReplay, data::Tier::kReplay,
                                 data::Tier::kMediumExpert};
    for (int i = 0; i < spec.suite_size; ++i)
      spec.mix.tiers[i] = cycle[i % 3];
  }
  if (static_cast<int>(spec.mix.tiers.size()) != spec.suite_size)
    throw std::invalid_argument("experiment: mix covers wrong task count");
  if (spec.scale != 1.0) spec.mix.scale(spec.scale);
  return spec;
}

/// Everything one (method, seed) pipeline needs and produces.
struct SeedJob {
  const ExperimentSpec& spec;
  fs::path exp_dir;
  std::uint64_t run_seed;
  JobReport report;

  fs::path seed_dir() const {
    return exp_dir / ("seed" + std::to_string(run_seed));
  }

  void run() {
    const fs::path dir = seed_dir();
    fs::create_directories(dir);

    data::MixConfig mix = spec.mix;
    mix.seed = run_seed;
    const std::string fp_data =
        json{{"suite_seed", spec.suite_seed},
             {"suite_size", spec.suite_size},
             {"mix", json::parse(data::mix_to_json(mix))}}
            .dump();

    const fs::path data_dir = dir / "data";
    report.stages.push_back(
        run_stage(data_dir, "gen-data", fp_data, [&](const fs::path& d) {
          const auto suite = env::make_suite(spec.suite_size, spec.suite_seed);
          env::save_suite(suite, (d / "suite.json").string());
          data::Dataset dataset = data::generate_dataset(suite, mix);
          dataset.window_half_width = spec.embed.half_width;
          data::relabel_returns(dataset);
          data::save(dataset, (d / "dataset.bin").string());
        }));

    for (Method method : spec.methods) {
      try {
        run_method(method, dir, data_dir, fp_data);
      } catch (const std::exception& e) {
        const std::string what =
            method_name(method) + ": " + std::string(e.what());
        report.errors.push_back(what);
        std::ofstream err(dir / ("error_" + slug(method) + ".txt"));
        err << what << "\n";
      }
    }
  }

  void run_method(Method method, const fs::path& dir, const fs::path& data_dir,
                  const std::string& fp_data) {
    const MethodPlan plan = plan_for(method);
    const auto suite = env::load_suite((data_dir / "suite.json").string());

    fs::path embed_dir;
    std::string fp_embed = fp_data;
    if (plan.needs_embed) {
      task::TrainingConfig embed = spec.embed;
      embed.seed = run_seed;
      embed.use_skill_reg = plan.embed_skill_reg;
      embed.use_quality_weight = plan.embed_quality;
      embed_dir = dir / ("embed_" + plan.embed_variant);
      fp_embed = json{{"upstream", fp_data},
                      {"embed", embed_config_json(embed)},
                      {"variant", plan.embed_variant},
                      {"skill_reg", embed.use_skill_reg},
                      {"quality", embed.use_quality_weight},
                      {"seed", run_seed}}
                     .dump();
      report.stages.push_back(run_stage(
          embed_dir, "train-embed:" + plan.embed_variant, fp_embed,
          [&](const fs::path& d) {
            const data::Dataset dataset =
                data::load((data_dir / "dataset.bin").string());
            const task::TrainResult result = task::train_joint(dataset, embed);
            task::save_checkpoint(result.models, result.log, d.string());
          }));
    }

    fs::path agent_data_dir = data_dir;
    std::string fp_agent_data = fp_embed;
    if (plan.augment_imagined || plan.augment_noise) {
      imagine::AugmentConfig augment = spec.augment;
      augment.seed = run_seed;
      const std::string kind = plan.augment_imagined ? "id" : "n";
      const fs::path aug_dir = dir / ("aug_" + kind);
      fp_agent_data = json{{"upstream", fp_embed},
                           {"augment", augment_config_json(augment)},
                           {"kind", kind},
                           {"seed", run_seed}}
                          .dump();
      report.stages.push_back(run_stage(
          aug_dir, "augment:" + kind, fp_agent_data, [&](const fs::path& d) {
            data::Dataset dataset =
                data::load((data_dir / "dataset.bin").string());
            data::Dataset augmented =
                plan.augment_imagined
                    ? imagine::augment_dataset(
                          dataset,
                          task::load_checkpoint(embed_dir.string()), augment)
                    : imagine::augment_dataset_gaussian(dataset, augment);
            data::save(augmented, (d / "dataset.bin").string());
            imagine::write_quality_report(imagine::quality_report(augmented),
                                          (d / "quality_report.csv").string());
          }));
      agent_data_dir = aug_dir;
    }

    rl::AgentConfig agent_cfg = spec.agent;
    agent_cfg.seed = run_seed;
    agent_cfg.half_width = spec.embed.half_width;
    agent_cfg.dim_z = spec.embed.dim_z;
    if (method == Method::kOneHotBaseline) {
      agent_cfg.mode = rl::Conditioning::kOneHot;
      agent_cfg.num_tasks = spec.suite_size;
    } else {
      agent_cfg.mode = rl::Conditioning::kSubtaskEmbedding;
    }

    const fs::path agent_dir = dir / ("agent_" + slug(method));
    const std::string fp_agent = json{{"upstream", fp_agent_data},
                                      {"agent", agent_config_json(agent_cfg)},
                                      {"mode", static_cast<int>(agent_cfg.mode)},
                                      {"seed", run_seed}}
                                     .dump();
    report.stages.push_back(run_stage(
        agent_dir, "train-agent:" + slug(method), fp_agent,
        [&](const fs::path& d) {
          const data::Dataset dataset =
              data::load((agent_data_dir / "dataset.bin").string());
          std::optional<fa::ParamMap> encoder;
          if (agent_cfg.mode == rl::Conditioning::kSubtaskEmbedding) {
            encoder = fa::ParamMap::load_file(
                (embed_dir / "task_encoder.pm").string());
          }
          const rl::TrainAgentResult result = rl::train_agent(
              dataset, agent_cfg, encoder ? &*encoder : nullptr);
          rl::save_agent(result.agent, d.string());
          rl::write_agent_log(result.log, (d / "train_log.csv").string());
        }));

    const fs::path eval_dir = dir / ("eval_" + slug(method));
    const std::string fp_eval = json{{"upstream", fp_agent},
                                     {"episodes", spec.eval_episodes},
                                     {"seed", run_seed}}
                                    .dump();
    report.stages.push_back(run_stage(
        eval_dir, "eval:" + slug(method), fp_eval, [&](const fs::path& d) {
          const rl::Agent agent = rl::load_agent(agent_dir.string());
          const rl::EvalResult metrics = rl::evaluate(
              agent, suite, spec.eval_episodes, derive_seed(run_seed, 0xea1));
          rl::write_eval_csv(metrics, (d / "eval.csv").string());
          json summary{{"method", method_name(method)},
                       {"mix", spec.mix.describe()},
                       {"seed", run_seed},
                       {"success_rate", 100.0 * metrics.success_rate},
                       {"mean_return", metrics.mean_return},
                       {"normalized_return", metrics.normalized_return}};
          std::ofstream out(d / "metrics.json");
          out << summary.dump(2) << "\n";
        }));
  }
};

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& raw_spec,
                                const std::string& out_root, int jobs) {
  const ExperimentSpec spec = resolve_spec(raw_spec);
  const fs::path exp_dir = fs::path(out_root) / spec.name;
  fs::create_directories(exp_dir);
  {
    std::ofstream out(exp_dir / "spec.json");
    out << spec_to_json(spec) << "\n";
  }

  std::vector<SeedJob> seed_jobs;
  seed_jobs.reserve(spec.seeds.size());
  for (std::uint64_t seed : spec.seeds) {
    seed_jobs.push_back(SeedJob{spec, exp_dir, seed, JobReport{seed, {}, {}}});
  }

  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(seed_jobs.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  auto work = [&]() {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= seed_jobs.size()) return;
      seed_jobs[index].run();
    }
  };
  if (workers == 1) {
    work();
  } else {
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  ExperimentResult result;
  result.out_dir = exp_dir.string();
  for (SeedJob& job : seed_jobs) result.reports.push_back(std::move(job.report));

  for (Method method : spec.methods) {
    for (std::uint64_t seed : spec.seeds) {
      const fs::path metrics_path = exp_dir / ("seed" + std::to_string(seed)) /
                                    ("eval_" + slug(method)) / "metrics.json";
      std::ifstream in(metrics_path);
      if (!in) continue;  // stage failed; error already recorded
      json doc;
      in >> doc;
      SeedResult row;
      row.method = doc.at("method").get<std::string>();
      row.mix = doc.at("mix").get<std::string>();
      row.seed = doc.at("seed").get<std::uint64_t>();
      row.success_rate = doc.at("success_rate").get<double>();
      row.mean_return = doc.at("mean_return").get<double>();
      row.normalized_return = doc.at("normalized_return").get<double>();
      result.rows.push_back(std::move(row));
    }
  }

  write_results_csv(result.rows, (exp_dir / "results.csv").string());
  result.aggregated = tabulate(result.rows);
  write_aggregate_csv(result.aggregated,
                      (exp_dir / "results_aggregate.csv").string());
  return result;
}

double student_t_975(int dof) {
  if (dof < 1) throw std::invalid_argument("student t: dof must be >= 1");
  const boost::math::students_t_distribution<double> dist(dof);
  return boost::math::quantile(dist, 0.975);
}

std::vector<ResultRow> tabulate(const std::vector<SeedResult>& rows) {
  std::vector<ResultRow> out;
  auto find = [&out](const std::string& method,
                     const std::string& mix) -> ResultRow& {
    for (ResultRow& row : out)
      if (row.method == method && row.mix == mix) return row;
    out.push_back(ResultRow{method, mix, 0.0, 0.0, false, {}, 0.0, 0.0});
    return out.back();
  };

  for (const SeedResult& row : rows) {
    ResultRow& agg = find(row.method, row.mix);
    agg.per_seed.push_back(row.success_rate);
    agg.mean_return += row.mean_return;
    agg.normalized_return += row.normalized_return;
  }

  for (ResultRow& agg : out) {
    const int k = static_cast<int>(agg.per_seed.size());
    double sum = 0.0;
    for (double v : agg.per_seed) sum += v;
    agg.mean = sum / k;
    agg.mean_return /= k;
    agg.normalized_return /= k;
    if (k >= 2) {
      double ss = 0.0;
      for (double v : agg.per_seed) ss += (v - agg.mean) * (v - agg.mean);
      const double sd = std::sqrt(ss / (k - 1));
      agg.ci_half = student_t_975(k - 1) * sd / std::sqrt(static_cast<double>(k));
      agg.ci_valid = true;
    }
  }
  return out;
}

std::string format_table(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "method            mix             seeds  success%        95% CI\n";
  for (const ResultRow& row : rows) {
    std::ostringstream success;
    success.setf(std::ios::fixed);
    success.precision(2);
    success << row.mean;
    std::ostringstream ci;
    if (row.ci_valid) {
      ci.setf(std::ios::fixed);
      ci.precision(2);
      ci << "+-" << row.ci_half;
    } else {
      ci << "n/a (needs >= 2 seeds)";
    }
    out << row.method;
    for (std::size_t i = row.method.size(); i < 18; ++i) out << ' ';
    out << row.mix;
    for (std::size_t i = row.mix.size(); i < 16; ++i) out << ' ';
    out << row.per_seed.size() << "      " << success.str();
    for (std::size_t i = success.str().size(); i < 16; ++i) out << ' ';
    out << ci.str() << "\n";
  }
  return out.str();
}

void write_results_csv(const std::vector<SeedResult>& rows,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("results: cannot open " + path);
  out.precision(17);
  out << "method,mix,seed,success_rate,mean_return,normalized_return\n";
  for (const SeedResult& row : rows)
    out << row.method << ',' << row.mix << ',' << row.seed << ','
        << row.success_rate << ',' << row.mean_return << ','
        << row.normalized_return << '\n';
}

std::vector<SeedResult> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("results: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "method,mix,seed,success_rate,mean_return,normalized_return")
    throw FormatError("results: unexpected header in " + path);
  std::vector<SeedResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SeedResult row;
    std::string field;
    std::getline(ss, row.method, ',');
    std::getline(ss, row.mix, ',');
    std::getline(ss, field, ',');
    row.seed = std::stoull(field);
    std::getline(ss, field, ',');
    row.success_rate = std::stod(field);
    std::getline(ss, field, ',');
    row.mean_return = std::stod(field);
    std::getline(ss, field, ',');
    row.normalized_return = std::stod(field);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_aggregate_csv(const std::vector<ResultRow>& rows,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("results: cannot open " + path);
  out.precision(17);
  out << "method,mix,seeds,mean,ci_half,ci_missing,mean_return,"
         "normalized_return\n";
  for (const ResultRow& row : rows) {
    out << row.method << ',' << row.mix << ',' << row.per_seed.size() << ','
        << row.mean << ',';
    if (row.ci_valid)
      out << row.ci_half << ",0,";
    else
      out << ",1,";
    out << row.mean_return << ',' << row.normalized_return << '\n';
  }
}

namespace {

const char* kPalette[6] = {"#4878cf", "#ee854a", "#6acc65",
                           "#d65f5f", "#956cb4", "#8c613c"};

std::string fmt(double v, int precision = 2) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(precision);
  out << v;
  return out.str();
}

}  // namespace

std::vector<std::string> plot(const std::vector<ResultRow>& rows,
                              const std::string& out_dir) {
  if (rows.empty()) {
    std::cerr << "plot: nothing to plot\n";
    return {};
  }
  fs::create_directories(out_dir);

  std::vector<std::string> mixes;
  std::vector<std::string> methods;
  for (const ResultRow& row : rows) {
    if (std::find(mixes.begin(), mixes.end(), row.mix) == mixes.end())
      mixes.push_back(row.mix);
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end())
      methods.push_back(row.method);
  }
  auto lookup = [&rows](const std::string& mix,
                        const std::string& method) -> const ResultRow* {
    for (const ResultRow& row : rows)
      if (row.mix == mix && row.method == method) return &row;
    return nullptr;
  };

  double max_y = 1.0;
  for (const ResultRow& row : rows)
    max_y = std::max(max_y, row.mean + (row.ci_valid ? row.ci_half : 0.0));
  max_y *= 1.15;

  const double bar_w = 26.0;
  const double group_gap = 34.0;
  const double left = 64.0;
  const double top = 24.0;
  const double plot_h = 240.0;
  const double bottom = top + plot_h;
  const double group_w = methods.size() * bar_w + group_gap;
  const double width = left + mixes.size() * group_w + 160.0;
  const double height = bottom + 56.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\""
      << width - 140 << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 5; ++tick) {
    const double value = max_y * tick / 5.0;
    const double y = bottom - plot_h * tick / 5.0;
    svg << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left
        << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(value, 1)
        << "</text>\n";
  }

  std::ostringstream csv;
  csv << "mix,method,mean,ci_half,seeds\n";
  csv.precision(17);

  for (std::size_t g = 0; g < mixes.size(); ++g) {
    const double group_x = left + group_gap / 2 + g * group_w;
    for (std::size_t b = 0; b < methods.size(); ++b) {
      const ResultRow* row = lookup(mixes[g], methods[b]);
      if (row == nullptr) continue;
      const double x = group_x + b * bar_w;
      const double h = plot_h * row->mean / max_y;
      svg << "<rect x=\"" << x << "\" y=\"" << bottom - h << "\" width=\""
          << bar_w - 4 << "\" height=\"" << h << "\" fill=\""
          << kPalette[b % 6] << "\"/>\n";
      if (row->ci_valid && row->ci_half > 0.0) {
        const double cx = x + (bar_w - 4) / 2;
        const double y_lo = bottom - plot_h * (row->mean - row->ci_half) / max_y;
        const double y_hi = bottom - plot_h * (row->mean + row->ci_half) / max_y;
        svg << "<line x1=\"" << cx << "\" y1=\"" << y_lo << "\" x2=\"" << cx
            << "\" y2=\"" << y_hi << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << cx - 5 << "\" y1=\"" << y_hi << "\" x2=\""
            << cx + 5 << "\" y2=\"" << y_hi << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << cx - 5 << "\" y1=\"" << y_lo << "\" x2=\""
            << cx + 5 << "\" y2=\"" << y_lo << "\" stroke=\"black\"/>\n";
      }
      csv << mixes[g] << ',' << methods[b] << ',' << row->mean << ','
          << (row->ci_valid ? row->ci_half : 0.0) << ',' << row->per_seed.size()
          << '\n';
    }
    svg << "<text x=\"" << group_x + methods.size() * bar_w / 2 - 2
        << "\" y=\"" << bottom + 18 << "\" font-size=\"12\" "
        << "text-anchor=\"middle\">" << mixes[g] << "</text>\n";
  }

  // legend
  for (std::size_t b = 0; b < methods.size(); ++b) {
    const double y = top + 16.0 * b;
    svg << "<rect x=\"" << width - 130 << "\" y=\"" << y
        << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[b % 6]
        << "\"/>\n";
    svg << "<text x=\"" << width - 112 << "\" y=\"" << y + 10
        << "\" font-size=\"11\">" << methods[b] << "</text>\n";
  }
  svg << "<text x=\"" << left << "\" y=\"" << top - 8
      << "\" font-size=\"12\">success rate (%)</text>\n";
  svg << "</svg>\n";

  const fs::path image = fs::path(out_dir) / "success_rate.svg";
  const fs::path sidecar = fs::path(out_dir) / "success_rate.csv";
  {
    std::ofstream out(image);
    if (!out) throw FormatError("plot: cannot open " + image.string());
    out << svg.str();
  }
  {
    std::ofstream out(sidecar);
    if (!out) throw FormatError("plot: cannot open " + sidecar.string());
    out << csv.str();
  }
  return {image.string()};
}

std::string default_out_root() {
  if (const char* env = std::getenv("SRTD_LAB_OUT"); env != nullptr && *env)
    return env;
  return "srtd_out";
}

}  // namespace srtd::lab
