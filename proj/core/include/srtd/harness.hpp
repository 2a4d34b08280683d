#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srtd/common.hpp"
#include "srtd/datastore.hpp"
#include "srtd/imagine.hpp"
#include "srtd/offrl.hpp"
#include "srtd/taskdecomp.hpp"

namespace srtd::lab {

enum class Method {
  kOneHotBaseline,
  kTaskEmbeddingOnly,  // no skill regularization
  kSrtdUnweighted,     // skill regularization without quality weights
  kSrtd,
  kSrtdNoise,          // Gaussian-noise augmentation
  kSrtdImagined,       // imagined-demonstration augmentation
};

std::string method_name(Method method);
Method method_from_name(const std::string& name);

struct ExperimentSpec {
  std::string name = "exp";
  int suite_size = 3;
  std::uint64_t suite_seed = 7;
  data::MixConfig mix;  // tiers default to MR/RP/ME cycling over tasks
  std::vector<Method> methods{Method::kOneHotBaseline, Method::kSrtd,
                              Method::kSrtdImagined};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  task::TrainingConfig embed;
  rl::AgentConfig agent;
  imagine::AugmentConfig augment;
  int eval_episodes = 20;
  double scale = 1.0;  // multiplies the per-tier episode counts
};

std::string spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const std::string& json_text);
ExperimentSpec load_spec(const std::string& path);

/// One results.csv row; success_rate is in percent.
struct SeedResult {
  std::string method;
  std::string mix;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double normalized_return = 0.0;
};

/// Per-(method, mix) aggregate with a Student-t 95% confidence interval.
struct ResultRow {
  std::string method;
  std::string mix;
  double mean = 0.0;
  double ci_half = 0.0;
  bool ci_valid = false;
  std::vector<double> per_seed;
  double mean_return = 0.0;
  double normalized_return = 0.0;
};

struct StageInfo {
  std::string name;
  bool cached = false;
  std::uint64_t env_steps = 0;  // transitions the stage took in the env
};

struct JobReport {
  std::uint64_t seed = 0;
  std::vector<StageInfo> stages;
  std::vector<std::string> errors;  // "<stage>: <what>"
};

struct ExperimentResult {
  std::vector<SeedResult> rows;
  std::vector<ResultRow> aggregated;
  std::vector<JobReport> reports;
  std::string out_dir;
};

/// Runs every (method, seed) pipeline with per-stage caching and writes
/// results.csv plus all intermediate artifacts under out_root/<spec.name>.
/// Seeds run as independent jobs, at most `jobs` in parallel.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::string& out_root, int jobs = 1);

std::vector<ResultRow> tabulate(const std::vector<SeedResult>& rows);
std::string format_table(const std::vector<ResultRow>& rows);

void write_results_csv(const std::vector<SeedResult>& rows,
                       const std::string& path);
std::vector<SeedResult> read_results_csv(const std::string& path);
void write_aggregate_csv(const std::vector<ResultRow>& rows,
                         const std::string& path);

/// Grouped bar chart (groups = mixes, bars = methods, whiskers = 95% CI) as
/// an SVG, with the plotted numbers in a CSV sidecar next to it. Returns the
/// written image paths; empty input is a warning no-op.
std::vector<std::string> plot(const std::vector<ResultRow>& rows,
                              const std::string& out_dir);

/// Two-sided 97.5% Student-t quantile for the given degrees of freedom.
double student_t_975(int dof);

/// SRTD_LAB_OUT env var, or ./srtd_out.
std::string default_out_root();

}  // namespace srtd::lab
