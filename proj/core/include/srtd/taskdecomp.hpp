#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "srtd/common.hpp"
#include "srtd/datastore.hpp"
#include "srtd/funcapprox.hpp"
#include "srtd/skillspace.hpp"

namespace srtd::task {

/// Encoder over flattened sub-trajectories plus a dynamics decoder predicting
/// (next state, reward) from (state, action, embedding). Embeddings live on
/// the same latent space as skill embeddings.
struct TaskModel {
  fa::ParamMap encoder;
  fa::ParamMap decoder;
  int dim_z = 8;
  int half_width = 5;
  skill::KernelSpec kernel;

  static TaskModel make(int obs_dim, int act_dim, int half_width, int dim_z,
                        int hidden, Rng& rng);

  int param_count() const {
    return encoder.param_count() + decoder.param_count();
  }
  Vec flat_params() const;
  void set_flat_params(const Vec& params);
};

Vec encode_task(const fa::ParamMap& encoder, const data::WindowSample& window);
Vec encode_task(const fa::ParamMap& encoder, std::span<const Vec> states,
                std::span<const Vec> actions, std::span<const double> rewards);

struct DynamicsPrediction {
  Vec next_state;
  double reward = 0.0;
};

DynamicsPrediction decode_dynamics(const fa::ParamMap& decoder, const Vec& s,
                                   const Vec& a, const Vec& embedding);

struct SrtdLossParts {
  double te = 0.0;        // dynamics reconstruction
  double sr = 0.0;        // quality-weighted pull toward skill embeddings
  double prior_penalty = 0.0;
  double total = 0.0;
};

/// Mean summed per-step (next state, reward) reconstruction norm.
double te_loss(const TaskModel& model, const data::WindowBatch& batch);

/// Quality-weighted mean distance between task and skill embeddings at shared
/// anchors. Skill embeddings are targets only; no gradient reaches the skill
/// encoder through this term.
double sr_loss(const TaskModel& model, const fa::ParamMap& skill_encoder,
               const data::WindowBatch& batch, bool use_quality_weight = true);

struct SrtdOptions {
  bool use_skill_reg = true;       // include the sr term
  bool use_quality_weight = true;  // false: every anchor weighs 1
};

SrtdLossParts srtd_loss(const TaskModel& model,
                        const fa::ParamMap& skill_encoder,
                        const data::WindowBatch& batch, double lambda,
                        const Mat& prior_samples, const SrtdOptions& opts = {});

SrtdLossParts srtd_loss_grad(const TaskModel& model,
                             const fa::ParamMap& skill_encoder,
                             const data::WindowBatch& batch, double lambda,
                             const Mat& prior_samples, const SrtdOptions& opts,
                             Eigen::Ref<Vec> grad);

std::unique_ptr<fa::DiffLoss> make_te_objective(TaskModel model,
                                                data::WindowBatch batch);
std::unique_ptr<fa::DiffLoss> make_sr_objective(TaskModel model,
                                                fa::ParamMap skill_encoder,
                                                data::WindowBatch batch,
                                                bool use_quality_weight = true);
std::unique_ptr<fa::DiffLoss> make_srtd_objective(TaskModel model,
                                                  fa::ParamMap skill_encoder,
                                                  data::WindowBatch batch,
                                                  double lambda,
                                                  Mat prior_samples,
                                                  SrtdOptions opts = {});

struct TrainingConfig {
  double lambda = 1.0;
  int batch = 64;
  double learning_rate = 3e-4;
  int half_width = 5;
  int dim_z = 8;
  int hidden = 64;
  int steps = 5000;
  std::uint64_t seed = 0;
  bool use_skill_reg = true;
  bool use_quality_weight = true;
  int log_every = 100;
};

struct TrainLogRow {
  int step = 0;
  double l_se = 0.0;
  double l_te = 0.0;
  double l_sr = 0.0;
  double l_pr_skill = 0.0;
  double l_pr_task = 0.0;
};

struct JointModels {
  skill::SkillModel skill;
  TaskModel task;
  TrainingConfig config;
  bool trained = false;
};

struct TrainResult {
  JointModels models;
  std::vector<TrainLogRow> log;
};

/// Joint loop: per step, sample aligned windows, draw both priors, take one
/// descent step on the skill loss and one on the combined task loss.
/// Deterministic in config.seed. Throws NumericError (with the step index and
/// component values) if any loss goes non-finite.
TrainResult train_joint(const data::Dataset& dataset,
                        const TrainingConfig& config);

void write_loss_log(const std::vector<TrainLogRow>& log,
                    const std::string& path);
std::vector<TrainLogRow> read_loss_log(const std::string& path);

/// Checkpoint bundle: four param files, the loss log, and a JSON manifest.
void save_checkpoint(const JointModels& models,
                     const std::vector<TrainLogRow>& log,
                     const std::string& dir);
JointModels load_checkpoint(const std::string& dir);

}  // namespace srtd::task
