#include "srtd/taskdecomp.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace srtd::task {
namespace {

Mat stack_task_inputs(const data::WindowBatch& batch) {
  const int m = batch.size();
  Mat inputs(m,
             (batch.half_width + 1) * (batch.obs_dim + batch.act_dim + 1));
  for (int i = 0; i < m; ++i)
    inputs.row(i) = data::task_window_flat(batch.items[i]).transpose();
  return inputs;
}

Mat stack_skill_inputs(const data::WindowBatch& batch) {
  const int m = batch.size();
  Mat inputs(m, 2 * batch.half_width * (batch.obs_dim + batch.act_dim));
  for (int i = 0; i < m; ++i)
    inputs.row(i) = data::skill_window_flat(batch.items[i]).transpose();
  return inputs;
}

struct LossAccum {
  SrtdLossParts parts;
};

// Single shared pass for the combined loss and its pieces. When grad is
// non-null it must be zero-initialized to the model's parameter count.
// with_prior toggles the mmd term (callers that only want te/sr may pass
// batches of size 1, which the mmd term would reject).
SrtdLossParts run_task_loss(const TaskModel& model,
                            const fa::ParamMap* skill_encoder,
                            const data::WindowBatch& batch, double lambda,
                            const Mat* prior_samples, const SrtdOptions& opts,
                            bool with_te, Vec* grad) {
  const int m = batch.size();
  if (m < 1) throw std::invalid_argument("task loss: empty batch");
  const int n = batch.half_width;
  const int dz = model.dim_z;

  fa::ParamMap::Trace enc_trace;
  const Mat inputs = stack_task_inputs(batch);
  const Mat embeddings = model.encoder.forward_batch(inputs, enc_trace);
  Mat d_embeddings = Mat::Zero(m, dz);

  SrtdLossParts parts;

  if (with_te) {
    Mat dec_input(m, batch.obs_dim + batch.act_dim + dz);
    Mat upstream(m, batch.obs_dim + 1);
    double te = 0.0;
    for (int k = 0; k <= n; ++k) {
      for (int i = 0; i < m; ++i) {
        const data::WindowSample& w = batch.items[i];
        dec_input.row(i).head(batch.obs_dim) = w.states[k].transpose();
        dec_input.row(i).segment(batch.obs_dim, batch.act_dim) =
            w.actions[k].transpose();
        dec_input.row(i).tail(dz) = embeddings.row(i);
      }
      fa::ParamMap::Trace dec_trace;
      const Mat predicted = model.decoder.forward_batch(dec_input, dec_trace);
      for (int i = 0; i < m; ++i) {
        const data::WindowSample& w = batch.items[i];
        Vec target(batch.obs_dim + 1);
        target << w.next_states[k], w.rewards[k];
        const Vec error = target - predicted.row(i).transpose();
        const double norm = error.norm();
        te += norm;
        if (grad) {
          if (norm > 0.0)
            upstream.row(i) = (-1.0 / (m * norm)) * error.transpose();
          else
            upstream.row(i).setZero();
        }
      }
      if (grad) {
        const Mat d_input = model.decoder.backward(
            dec_trace, upstream, grad->tail(model.decoder.param_count()));
        d_embeddings += d_input.rightCols(dz);
      }
    }
    parts.te = te / m;
  }

  if (opts.use_skill_reg && skill_encoder != nullptr) {
    // Skill embeddings are constant targets here by construction: they are
    // computed in a plain forward pass that no gradient flows back through.
    const Mat targets = skill_encoder->forward_batch(stack_skill_inputs(batch));
    double sr = 0.0;
    for (int i = 0; i < m; ++i) {
      const double weight =
          opts.use_quality_weight ? batch.items[i].quality : 1.0;
      const Vec diff =
          (embeddings.row(i) - targets.row(i)).transpose();
      const double norm = diff.norm();
      sr += weight * norm;
      if (grad && norm > 0.0)
        d_embeddings.row(i) += (weight / (m * norm)) * diff.transpose();
    }
    parts.sr = sr / m;
  }

  if (prior_samples != nullptr) {
    parts.prior_penalty =
        skill::mmd_penalty(embeddings, *prior_samples, model.kernel);
    if (grad)
      skill::mmd_penalty_grad(embeddings, *prior_samples, model.kernel, lambda,
                              d_embeddings);
  }

  if (grad)
    model.encoder.backward(enc_trace, d_embeddings,
                           grad->head(model.encoder.param_count()));

  parts.total = parts.te + parts.sr + lambda * parts.prior_penalty;
  return parts;
}

}  // namespace

TaskModel TaskModel::make(int obs_dim, int act_dim, int half_width, int dim_z,
                          int hidden, Rng& rng) {
  const int window_dim = (half_width + 1) * (obs_dim + act_dim + 1);
  TaskModel model{
      fa::ParamMap::glorot({window_dim, hidden, hidden, dim_z},
                           fa::Activation::kTanh,
                           fa::OutputActivation::kIdentity, rng),
      fa::ParamMap::glorot({obs_dim + act_dim + dim_z, hidden, hidden,
                            obs_dim + 1},
                           fa::Activation::kTanh,
                           fa::OutputActivation::kIdentity, rng),
      dim_z, half_width,
      skill::KernelSpec{skill::KernelSpec::Family::kInverseMultiquadratic,
                        2.0 * dim_z}};
  return model;
}

Vec TaskModel::flat_params() const {
  Vec flat(param_count());
  flat.head(encoder.param_count()) = encoder.params();
  flat.tail(decoder.param_count()) = decoder.params();
  return flat;
}

void TaskModel::set_flat_params(const Vec& params) {
  if (params.size() != param_count())
    throw DimensionError("task model: flat parameter length mismatch");
  encoder.set_params(params.head(encoder.param_count()));
  decoder.set_params(params.tail(decoder.param_count()));
}

Vec encode_task(const fa::ParamMap& encoder, const data::WindowSample& window) {
  return encoder.forward(data::task_window_flat(window));
}

Vec encode_task(const fa::ParamMap& encoder, std::span<const Vec> states,
                std::span<const Vec> actions, std::span<const double> rewards) {
  return encoder.forward(data::task_window_flat(states, actions, rewards));
}

DynamicsPrediction decode_dynamics(const fa::ParamMap& decoder, const Vec& s,
                                   const Vec& a, const Vec& embedding) {
  Vec input(s.size() + a.size() + embedding.size());
  input << s, a, embedding;
  const Vec out = decoder.forward(input);
  DynamicsPrediction prediction;
  prediction.next_state = out.head(out.size() - 1);
  prediction.reward = out[out.size() - 1];
  return prediction;
}

double te_loss(const TaskModel& model, const data::WindowBatch& batch) {
  SrtdOptions opts;
  opts.use_skill_reg = false;
  return run_task_loss(model, nullptr, batch, 0.0, nullptr, opts,
                       /*with_te=*/true, nullptr)
      .te;
}

double sr_loss(const TaskModel& model, const fa::ParamMap& skill_encoder,
               const data::WindowBatch& batch, bool use_quality_weight) {
  SrtdOptions opts;
  opts.use_quality_weight = use_quality_weight;
  return run_task_loss(model, &skill_encoder, batch, 0.0, nullptr, opts,
                       /*with_te=*/false, nullptr)
      .sr;
}

SrtdLossParts srtd_loss(const TaskModel& model,
                        const fa::ParamMap& skill_encoder,
                        const data::WindowBatch& batch, double lambda,
                        const Mat& prior_samples, const SrtdOptions& opts) {
  return run_task_loss(model, &skill_encoder, batch, lambda, &prior_samples,
                       opts, /*with_te=*/true, nullptr);
}

SrtdLossParts srtd_loss_grad(const TaskModel& model,
                             const fa::ParamMap& skill_encoder,
                             const data::WindowBatch& batch, double lambda,
                             const Mat& prior_samples, const SrtdOptions& opts,
                             Eigen::Ref<Vec> grad) {
  if (grad.size() != model.param_count())
    throw DimensionError("task loss: gradient buffer length mismatch");
  Vec buffer = Vec::Zero(model.param_count());
  const SrtdLossParts parts =
      run_task_loss(model, &skill_encoder, batch, lambda, &prior_samples, opts,
                    /*with_te=*/true, &buffer);
  grad = buffer;
  return parts;
}

namespace {

class TaskObjective : public fa::DiffLoss {
 public:
  enum class Kind { kTe, kSr, kSrtd };

  TaskObjective(Kind kind, TaskModel model,
                std::optional<fa::ParamMap> skill_encoder,
                data::WindowBatch batch, double lambda, Mat prior,
                SrtdOptions opts)
      : kind_(kind),
        model_(std::move(model)),
        skill_encoder_(std::move(skill_encoder)),
        batch_(std::move(batch)),
        lambda_(lambda),
        prior_(std::move(prior)),
        opts_(opts) {}

  double value(const Vec& params) const override {
    model_.set_flat_params(params);
    return compute(nullptr);
  }

  double value_and_grad(const Vec& params, Vec& grad) const override {
    model_.set_flat_params(params);
    grad = Vec::Zero(model_.param_count());
    return compute(&grad);
  }

 private:
  double compute(Vec* grad) const {
    const fa::ParamMap* enc =
        skill_encoder_.has_value() ? &*skill_encoder_ : nullptr;
    switch (kind_) {
      case Kind::kTe: {
        SrtdOptions opts;
        opts.use_skill_reg = false;
        return run_task_loss(model_, nullptr, batch_, 0.0, nullptr, opts, true,
                             grad)
            .te;
      }
      case Kind::kSr:
        return run_task_loss(model_, enc, batch_, 0.0, nullptr, opts_, false,
                             grad)
            .sr;
      case Kind::kSrtd:
        return run_task_loss(model_, enc, batch_, lambda_, &prior_, opts_, true,
                             grad)
            .total;
    }
    return 0.0;
  }

  Kind kind_;
  mutable TaskModel model_;
  std::optional<fa::ParamMap> skill_encoder_;
  data::WindowBatch batch_;
  double lambda_;
  Mat prior_;
  SrtdOptions opts_;
};

}  // namespace

std::unique_ptr<fa::DiffLoss> make_te_objective(TaskModel model,
                                                data::WindowBatch batch) {
  return std::make_unique<TaskObjective>(TaskObjective::Kind::kTe,
                                         std::move(model), std::nullopt,
                                         std::move(batch), 0.0, Mat(),
                                         SrtdOptions{});
}

std::unique_ptr<fa::DiffLoss> make_sr_objective(TaskModel model,
                                                fa::ParamMap skill_encoder,
                                                data::WindowBatch batch,
                                                bool use_quality_weight) {
  SrtdOptions opts;
  opts.use_quality_weight = use_quality_weight;
  return std::make_unique<TaskObjective>(
      TaskObjective::Kind::kSr, std::move(model), std::move(skill_encoder),
      std::move(batch), 0.0, Mat(), opts);
}

std::unique_ptr<fa::DiffLoss> make_srtd_objective(TaskModel model,
                                                  fa::ParamMap skill_encoder,
                                                  data::WindowBatch batch,
                                                  double lambda,
                                                  Mat prior_samples,
                                                  SrtdOptions opts) {
  return std::make_unique<TaskObjective>(
      TaskObjective::Kind::kSrtd, std::move(model), std::move(skill_encoder),
      std::move(batch), lambda, std::move(prior_samples), opts);
}

TrainResult train_joint(const data::Dataset& dataset,
                        const TrainingConfig& config) {
  if (!dataset.relabeled)
    throw std::invalid_argument(
        "train_joint: dataset must be relabeled with quality weights first");
  if (config.batch < 2)
    throw std::invalid_argument("train_joint: batch size must be >= 2");

  Rng init_rng(derive_seed(config.seed, 0x10));
  Rng batch_rng(derive_seed(config.seed, 0x11));
  Rng prior_rng(derive_seed(config.seed, 0x12));

  TrainResult result{
      JointModels{skill::SkillModel::make(dataset.obs_dim, dataset.act_dim,
                                          config.half_width, config.dim_z,
                                          config.hidden, init_rng),
                  TaskModel::make(dataset.obs_dim, dataset.act_dim,
                                  config.half_width, config.dim_z,
                                  config.hidden, init_rng),
                  config, false},
      {}};

  skill::SkillModel& sm = result.models.skill;
  TaskModel& tm = result.models.task;

  Vec phi = sm.flat_params();
  Vec theta = tm.flat_params();
  fa::OptState opt_phi(static_cast<int>(phi.size()), config.learning_rate);
  fa::OptState opt_theta(static_cast<int>(theta.size()), config.learning_rate);
  Vec g_phi(phi.size());
  Vec g_theta(theta.size());

  SrtdOptions opts;
  opts.use_skill_reg = config.use_skill_reg;
  opts.use_quality_weight = config.use_quality_weight;

  for (int step = 0; step < config.steps; ++step) {
    const data::WindowBatch batch = data::sample_windows(
        dataset, config.batch, config.half_width, batch_rng);
    const Mat prior_skill =
        skill::sample_prior(config.batch, config.dim_z, prior_rng);
    const Mat prior_task =
        skill::sample_prior(config.batch, config.dim_z, prior_rng);

    g_phi.setZero();
    const skill::SkillLossParts se =
        skill::skill_loss_grad(sm, batch, config.lambda, prior_skill, g_phi);
    g_theta.setZero();
    const SrtdLossParts srtd = srtd_loss_grad(tm, sm.encoder, batch,
                                              config.lambda, prior_task, opts,
                                              g_theta);

    if (!std::isfinite(se.total) || !std::isfinite(srtd.total)) {
      std::ostringstream msg;
      msg << "train_joint: non-finite loss at step " << step
          << " (L_SE = " << se.total << ", L_TE = " << srtd.te
          << ", L_SR = " << srtd.sr << ", L_PR_skill = " << se.prior_penalty
          << ", L_PR_task = " << srtd.prior_penalty << ")";
      throw NumericError(msg.str());
    }

    if (step % config.log_every == 0 || step == config.steps - 1) {
      result.log.push_back({step, se.total, srtd.te, srtd.sr,
                            se.prior_penalty, srtd.prior_penalty});
    }

    fa::opt_step(opt_phi, phi, g_phi);
    fa::opt_step(opt_theta, theta, g_theta);
    sm.set_flat_params(phi);
    tm.set_flat_params(theta);
  }

  result.models.trained = true;
  return result;
}

void write_loss_log(const std::vector<TrainLogRow>& log,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("loss log: cannot open " + path);
  out << "step,L_SE,L_TE,L_SR,L_PR_skill,L_PR_task\n";
  out.precision(17);
  for (const TrainLogRow& row : log) {
    out << row.step << ',' << row.l_se << ',' << row.l_te << ',' << row.l_sr
        << ',' << row.l_pr_skill << ',' << row.l_pr_task << '\n';
  }
}

std::vector<TrainLogRow> read_loss_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("loss log: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<TrainLogRow> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TrainLogRow row;
    char comma;
    std::istringstream ss(line);
    ss >> row.step >> comma >> row.l_se >> comma >> row.l_te >> comma >>
        row.l_sr >> comma >> row.l_pr_skill >> comma >> row.l_pr_task;
    if (ss.fail()) throw FormatError("loss log: malformed row in " + path);
    log.push_back(row);
  }
  return log;
}

namespace {

nlohmann::json config_to_json(const TrainingConfig& c) {
  return {{"lambda", c.lambda},
          {"batch", c.batch},
          {"learning_rate", c.learning_rate},
          {"half_width", c.half_width},
          {"dim_z", c.dim_z},
          {"hidden", c.hidden},
          {"steps", c.steps},
          {"seed", c.seed},
          {"use_skill_reg", c.use_skill_reg},
          {"use_quality_weight", c.use_quality_weight},
          {"log_every", c.log_every}};
}

TrainingConfig config_from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.batch = j.value("batch", c.batch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.half_width = j.value("half_width", c.half_width);
  c.dim_z = j.value("dim_z", c.dim_z);
  c.hidden = j.value("hidden", c.hidden);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", static_cast<std::uint64_t>(0));
  c.use_skill_reg = j.value("use_skill_reg", c.use_skill_reg);
  c.use_quality_weight = j.value("use_quality_weight", c.use_quality_weight);
  c.log_every = j.value("log_every", c.log_every);
  return c;
}

}  // namespace

void save_checkpoint(const JointModels& models,
                     const std::vector<TrainLogRow>& log,
                     const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  models.skill.encoder.save_file(dir + "/skill_encoder.pm");
  models.skill.decoder.save_file(dir + "/skill_decoder.pm");
  models.task.encoder.save_file(dir + "/task_encoder.pm");
  models.task.decoder.save_file(dir + "/task_decoder.pm");
  write_loss_log(log, dir + "/loss_log.csv");

  nlohmann::json manifest{
      {"config", config_to_json(models.config)},
      {"dim_z", models.task.dim_z},
      {"half_width", models.task.half_width},
      {"lambda", models.config.lambda},
      {"kernel",
       {{"family", models.task.kernel.family ==
                           skill::KernelSpec::Family::kInverseMultiquadratic
                       ? "inverse-multiquadratic"
                       : "gaussian-rbf"},
        {"scale", models.task.kernel.scale}}},
      {"steps_completed", models.config.steps},
      {"trained", models.trained},
      {"loss_log", "loss_log.csv"}};
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw FormatError("checkpoint: cannot open manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

JointModels load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw FormatError("checkpoint: cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint: corrupted manifest: ") +
                      e.what());
  }

  const TrainingConfig config = config_from_json(manifest.at("config"));
  skill::KernelSpec kernel;
  if (manifest.contains("kernel")) {
    const auto family = manifest["kernel"].value("family", "inverse-multiquadratic");
    kernel.family = family == "gaussian-rbf"
                        ? skill::KernelSpec::Family::kGaussianRbf
                        : skill::KernelSpec::Family::kInverseMultiquadratic;
    kernel.scale = manifest["kernel"].value("scale", 2.0 * config.dim_z);
  }

  JointModels models{
      skill::SkillModel{fa::ParamMap::load_file(dir + "/skill_encoder.pm"),
                        fa::ParamMap::load_file(dir + "/skill_decoder.pm"),
                        config.dim_z, config.half_width, kernel},
      TaskModel{fa::ParamMap::load_file(dir + "/task_encoder.pm"),
                fa::ParamMap::load_file(dir + "/task_decoder.pm"),
                config.dim_z, config.half_width, kernel},
      config, manifest.value("trained", true)};
  return models;
}

}  // namespace srtd::task
