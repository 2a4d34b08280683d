#include "srtd/offrl.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace srtd::rl {
namespace {

Mat hstack(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

void polyak(const fa::ParamMap& source, fa::ParamMap& target, double rate) {
  target.params() = rate * source.params() + (1.0 - rate) * target.params();
}

}  // namespace

Vec build_state(const Vec& s, const Vec& context) {
  Vec out(s.size() + context.size());
  out << s, context;
  return out;
}

Vec one_hot(int index, int size) {
  if (index < 0 || index >= size)
    throw DimensionError("one_hot: index out of range");
  Vec v = Vec::Zero(size);
  v[index] = 1.0;
  return v;
}

HistoryBuffer::HistoryBuffer(int half_width, int obs_dim, int act_dim)
    : half_width_(half_width), obs_dim_(obs_dim), act_dim_(act_dim),
      first_obs_(Vec::Zero(obs_dim)) {}

void HistoryBuffer::reset(const Vec& first_obs) {
  if (first_obs.size() != obs_dim_)
    throw DimensionError("history: observation length mismatch");
  first_obs_ = first_obs;
  states_.clear();
  actions_.clear();
  rewards_.clear();
}

void HistoryBuffer::push(const Vec& s, const Vec& a, double r) {
  states_.push_back(s);
  actions_.push_back(a);
  rewards_.push_back(r);
  const std::size_t cap = static_cast<std::size_t>(half_width_) + 1;
  if (states_.size() > cap) {
    states_.pop_front();
    actions_.pop_front();
    rewards_.pop_front();
  }
}

std::vector<Vec> HistoryBuffer::window_states() const {
  const int cap = half_width_ + 1;
  const int pad = cap - static_cast<int>(states_.size());
  std::vector<Vec> out;
  out.reserve(cap);
  for (int i = 0; i < pad; ++i) out.push_back(first_obs_);
  for (const Vec& s : states_) out.push_back(s);
  return out;
}

std::vector<Vec> HistoryBuffer::window_actions() const {
  const int cap = half_width_ + 1;
  const int pad = cap - static_cast<int>(actions_.size());
  std::vector<Vec> out;
  out.reserve(cap);
  for (int i = 0; i < pad; ++i) out.push_back(Vec::Zero(act_dim_));
  for (const Vec& a : actions_) out.push_back(a);
  return out;
}

std::vector<double> HistoryBuffer::window_rewards() const {
  const int cap = half_width_ + 1;
  const int pad = cap - static_cast<int>(rewards_.size());
  std::vector<double> out;
  out.reserve(cap);
  for (int i = 0; i < pad; ++i) out.push_back(0.0);
  for (double r : rewards_) out.push_back(r);
  return out;
}

Agent Agent::make(const AgentConfig& cfg, int obs_dim, int act_dim,
                  std::optional<fa::ParamMap> task_encoder) {
  if (cfg.mode == Conditioning::kOneHot && cfg.num_tasks <= 0)
    throw std::invalid_argument("agent: one-hot mode needs num_tasks > 0");
  if (cfg.mode == Conditioning::kSubtaskEmbedding && !task_encoder.has_value())
    throw std::invalid_argument(
        "agent: embedding mode needs a task encoder");

  const int context =
      cfg.mode == Conditioning::kOneHot ? cfg.num_tasks : cfg.dim_z;
  const int x_dim = obs_dim + context;
  Rng rng(derive_seed(cfg.seed, 0xa9e27));

  fa::ParamMap actor =
      fa::ParamMap::glorot({x_dim, cfg.hidden, cfg.hidden, act_dim},
                           fa::Activation::kRelu, fa::OutputActivation::kTanh,
                           rng);
  fa::ParamMap critic1 = fa::ParamMap::glorot(
      {x_dim + act_dim, cfg.hidden, cfg.hidden, 1}, fa::Activation::kRelu,
      fa::OutputActivation::kIdentity, rng);
  fa::ParamMap critic2 = fa::ParamMap::glorot(
      {x_dim + act_dim, cfg.hidden, cfg.hidden, 1}, fa::Activation::kRelu,
      fa::OutputActivation::kIdentity, rng);

  Agent agent{cfg,     obs_dim, act_dim,    actor,   critic1,
              critic2, actor,   critic1,    critic2, std::move(task_encoder),
              false};
  return agent;
}

int Agent::context_dim() const {
  return cfg.mode == Conditioning::kOneHot ? cfg.num_tasks : cfg.dim_z;
}

Vec Agent::act(const Vec& obs, const Vec& context) const {
  if (context.size() != context_dim())
    throw DimensionError("agent: context length mismatch");
  return actor.forward(build_state(obs, context));
}

TransitionTable build_transition_table(const data::Dataset& dataset,
                                       const AgentConfig& cfg,
                                       const fa::ParamMap* task_encoder) {
  const int obs_dim = dataset.obs_dim;
  const int act_dim = dataset.act_dim;
  const int context =
      cfg.mode == Conditioning::kOneHot ? cfg.num_tasks : cfg.dim_z;
  if (cfg.mode == Conditioning::kSubtaskEmbedding && task_encoder == nullptr)
    throw std::invalid_argument(
        "transition table: embedding mode needs a task encoder");

  const std::size_t total = dataset.transition_count();
  TransitionTable table;
  table.x.resize(total, obs_dim + context);
  table.a.resize(total, act_dim);
  table.r.resize(total);
  table.x_next.resize(total, obs_dim + context);
  table.done.resize(total);

  const int n = cfg.half_width;
  std::size_t row = 0;
  for (const data::Trajectory& traj : dataset.trajectories) {
    const int len = traj.length();
    if (len == 0) continue;

    // contexts[k] conditions the decision at step k; it is built from the
    // n+1 completed triples before k, repeat-padded at the episode start.
    Mat contexts;
    if (cfg.mode == Conditioning::kOneHot) {
      contexts = Mat::Zero(len + 1, context);
      contexts.col(traj.task_id).setOnes();
    } else {
      const Vec& first_obs = traj.transitions[0].s;
      Mat windows(len + 1, (n + 1) * (obs_dim + act_dim + 1));
      std::vector<Vec> states(n + 1);
      std::vector<Vec> actions(n + 1);
      std::vector<double> rewards(n + 1);
      for (int k = 0; k <= len; ++k) {
        for (int j = 0; j <= n; ++j) {
          const int idx = k - 1 - n + j;
          if (idx < 0) {
            states[j] = first_obs;
            actions[j] = Vec::Zero(act_dim);
            rewards[j] = 0.0;
          } else {
            const data::Transition& tr = traj.transitions[idx];
            states[j] = tr.s;
            actions[j] = tr.a;
            rewards[j] = tr.r;
          }
        }
        windows.row(k) =
            data::task_window_flat(states, actions, rewards).transpose();
      }
      contexts = task_encoder->forward_batch(windows);
    }

    for (int t = 0; t < len; ++t) {
      const data::Transition& tr = traj.transitions[t];
      table.x.row(row).head(obs_dim) = tr.s.transpose();
      table.x.row(row).tail(context) = contexts.row(t);
      table.a.row(row) = tr.a.transpose();
      table.r[row] = tr.r;
      table.x_next.row(row).head(obs_dim) = tr.s_next.transpose();
      table.x_next.row(row).tail(context) = contexts.row(t + 1);
      table.done[row] = tr.done ? 1.0 : 0.0;
      ++row;
    }
  }
  return table;
}

UpdateBatch sample_update_batch(const TransitionTable& table, int batch_size,
                                Rng& rng) {
  if (table.size() == 0)
    throw std::invalid_argument("update batch: empty transition table");
  UpdateBatch batch;
  batch.x.resize(batch_size, table.x.cols());
  batch.a.resize(batch_size, table.a.cols());
  batch.r.resize(batch_size);
  batch.x_next.resize(batch_size, table.x_next.cols());
  batch.done.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const auto idx = rng.integer(static_cast<std::uint64_t>(table.size()));
    batch.x.row(i) = table.x.row(static_cast<int>(idx));
    batch.a.row(i) = table.a.row(static_cast<int>(idx));
    batch.r[i] = table.r[static_cast<int>(idx)];
    batch.x_next.row(i) = table.x_next.row(static_cast<int>(idx));
    batch.done[i] = table.done[static_cast<int>(idx)];
  }
  return batch;
}

AgentTrainer::AgentTrainer(Agent agent)
    : agent_(std::move(agent)),
      opt_actor_(agent_.actor.param_count(), agent_.cfg.learning_rate),
      opt_critic1_(agent_.critic1.param_count(), agent_.cfg.learning_rate),
      opt_critic2_(agent_.critic2.param_count(), agent_.cfg.learning_rate),
      noise_rng_(derive_seed(agent_.cfg.seed, 0x70d3)) {}

Agent AgentTrainer::take() && { return std::move(agent_); }

UpdateDiagnostics AgentTrainer::update(const UpdateBatch& batch) {
  const AgentConfig& cfg = agent_.cfg;
  const int m = static_cast<int>(batch.r.size());
  const int act_dim = agent_.act_dim;

  // target actions with clipped smoothing noise
  Mat next_action = agent_.target_actor.forward_batch(batch.x_next);
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < act_dim; ++c) {
      const double noise = std::clamp(noise_rng_.normal(0.0, cfg.policy_noise),
                                      -cfg.noise_clip, cfg.noise_clip);
      next_action(i, c) = std::clamp(next_action(i, c) + noise, -1.0, 1.0);
    }
  }

  const Mat next_input = hstack(batch.x_next, next_action);
  const Vec q1_target = agent_.target_critic1.forward_batch(next_input).col(0);
  const Vec q2_target = agent_.target_critic2.forward_batch(next_input).col(0);
  const Vec targets =
      batch.r.array() + cfg.gamma * (1.0 - batch.done.array()) *
                            q1_target.array().min(q2_target.array());

  const Mat critic_input = hstack(batch.x, batch.a);
  UpdateDiagnostics diag;
  auto critic_step = [&](fa::ParamMap& critic, fa::OptState& opt) {
    fa::ParamMap::Trace trace;
    const Vec q = critic.forward_batch(critic_input, trace).col(0);
    const Vec err = q - targets;
    const double loss = err.squaredNorm() / m;
    const Mat upstream = (2.0 / m) * err;
    Vec grad = Vec::Zero(critic.param_count());
    critic.backward(trace, upstream, grad);
    fa::opt_step(opt, critic.params(), grad);
    return loss;
  };
  diag.critic_loss = critic_step(agent_.critic1, opt_critic1_) +
                     critic_step(agent_.critic2, opt_critic2_);

  ++updates_;
  if (updates_ % cfg.policy_delay == 0) {
    fa::ParamMap::Trace pi_trace;
    const Mat pi = agent_.actor.forward_batch(batch.x, pi_trace);
    fa::ParamMap::Trace q_trace;
    const Mat q_input = hstack(batch.x, pi);
    const Vec q = agent_.critic1.forward_batch(q_input, q_trace).col(0);

    const double q_scale = q.array().abs().mean();
    const double q_weight = cfg.bc_alpha / (q_scale + 1e-8);
    const Mat bc_err = pi - batch.a;
    diag.mean_q = q.mean();
    diag.bc_term = bc_err.squaredNorm() / (m * act_dim);
    diag.actor_loss = -q_weight * diag.mean_q + diag.bc_term;
    diag.actor_updated = true;

    Mat q_upstream = Mat::Constant(m, 1, -q_weight / m);
    Vec critic_grad_scratch = Vec::Zero(agent_.critic1.param_count());
    const Mat d_q_input =
        agent_.critic1.backward(q_trace, q_upstream, critic_grad_scratch);
    const Mat d_pi = d_q_input.rightCols(act_dim) +
                     (2.0 / (m * act_dim)) * bc_err;
    Vec actor_grad = Vec::Zero(agent_.actor.param_count());
    agent_.actor.backward(pi_trace, d_pi, actor_grad);
    fa::opt_step(opt_actor_, agent_.actor.params(), actor_grad);

    polyak(agent_.actor, agent_.target_actor, cfg.target_rate);
    polyak(agent_.critic1, agent_.target_critic1, cfg.target_rate);
    polyak(agent_.critic2, agent_.target_critic2, cfg.target_rate);
  }

  if (!std::isfinite(diag.critic_loss) ||
      (diag.actor_updated && !std::isfinite(diag.actor_loss))) {
    std::ostringstream msg;
    msg << "agent update " << updates_ << ": non-finite loss (critic = "
        << diag.critic_loss << ", actor = " << diag.actor_loss
        << ", mean_q = " << diag.mean_q << ", bc = " << diag.bc_term << ")";
    throw NumericError(msg.str());
  }
  return diag;
}

TrainAgentResult train_agent(const data::Dataset& dataset,
                             const AgentConfig& cfg,
                             const fa::ParamMap* task_encoder) {
  std::optional<fa::ParamMap> encoder;
  if (cfg.mode == Conditioning::kSubtaskEmbedding) {
    if (task_encoder == nullptr)
      throw std::invalid_argument("train_agent: embedding mode needs encoder");
    encoder = *task_encoder;
  }

  const TransitionTable table =
      build_transition_table(dataset, cfg, task_encoder);
  Agent agent =
      Agent::make(cfg, dataset.obs_dim, dataset.act_dim, std::move(encoder));
  AgentTrainer trainer(std::move(agent));
  Rng batch_rng(derive_seed(cfg.seed, 0xba7c4));

  std::vector<AgentLogRow> log;
  for (int step = 0; step < cfg.steps; ++step) {
    const UpdateBatch batch = sample_update_batch(table, cfg.batch, batch_rng);
    const UpdateDiagnostics diag = trainer.update(batch);
    if (step % cfg.log_every == 0 || step == cfg.steps - 1)
      log.push_back({step, diag.critic_loss, diag.actor_loss, diag.mean_q,
                     diag.bc_term});
  }

  TrainAgentResult result{std::move(trainer).take(), std::move(log)};
  result.agent.trained = true;
  return result;
}

void write_agent_log(const std::vector<AgentLogRow>& log,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("agent log: cannot open " + path);
  out << "step,critic_loss,actor_loss,mean_q,bc_term\n";
  out.precision(17);
  for (const AgentLogRow& row : log)
    out << row.step << ',' << row.critic_loss << ',' << row.actor_loss << ','
        << row.mean_q << ',' << row.bc_term << '\n';
}

EvalResult evaluate(const Agent& agent, const std::vector<env::TaskSpec>& suite,
                    int episodes_per_task, std::uint64_t seed) {
  if (agent.cfg.mode == Conditioning::kSubtaskEmbedding &&
      !agent.task_encoder.has_value())
    throw std::invalid_argument("evaluate: embedding mode needs encoder");

  EvalResult result;
  double total_return = 0.0;
  double total_expert_return = 0.0;
  int total_successes = 0;
  const int n = agent.cfg.half_width;

  for (const env::TaskSpec& task : suite) {
    EvalResult::PerTask per_task;
    per_task.task_id = task.task_id;
    per_task.episodes = episodes_per_task;
    double task_return = 0.0;
    double expert_return = 0.0;

    for (int ep = 0; ep < episodes_per_task; ++ep) {
      const std::uint64_t env_seed =
          derive_seed(seed, static_cast<std::uint64_t>(task.task_id),
                      static_cast<std::uint64_t>(ep), 0xe7a1);

      // agent episode
      {
        env::EnvState state = env::reset(task, env_seed);
        HistoryBuffer history(n, agent.obs_dim, agent.act_dim);
        history.reset(env::observe(state));
        bool success = false;
        bool done = false;
        while (!done) {
          const Vec obs = env::observe(state);
          Vec context;
          if (agent.cfg.mode == Conditioning::kOneHot) {
            context = one_hot(task.task_id, agent.cfg.num_tasks);
          } else {
            const auto states = history.window_states();
            const auto actions = history.window_actions();
            const auto rewards = history.window_rewards();
            context = agent.task_encoder->forward(
                data::task_window_flat(states, actions, rewards));
          }
          const Vec action = agent.act(obs, context);
          const env::StepResult step_result =
              env::step(task, state, {action[0], action[1]});
          history.push(obs, action, step_result.reward);
          task_return += step_result.reward;
          success = success || step_result.success;
          done = step_result.done;
          state = step_result.next;
        }
        if (success) {
          ++per_task.successes;
          ++total_successes;
        }
      }

      // scripted expert on the same seed, as the online-performance proxy
      {
        env::EnvState state = env::reset(task, env_seed);
        Rng expert_rng(derive_seed(seed, task.task_id, ep, 0xbead));
        bool done = false;
        while (!done) {
          const Eigen::Vector2d action =
              env::scripted_policy(task, state, 1.0, expert_rng);
          const env::StepResult step_result = env::step(task, state, action);
          expert_return += step_result.reward;
          done = step_result.done;
          state = step_result.next;
        }
      }
    }

    per_task.mean_return = task_return / episodes_per_task;
    const double expert_mean = expert_return / episodes_per_task;
    per_task.normalized_return =
        expert_mean > 0.0 ? per_task.mean_return / expert_mean : 0.0;
    total_return += task_return;
    total_expert_return += expert_return;
    result.per_task.push_back(per_task);
  }

  const int total_episodes =
      episodes_per_task * static_cast<int>(suite.size());
  result.success_rate =
      static_cast<double>(total_successes) / std::max(1, total_episodes);
  result.mean_return = total_return / std::max(1, total_episodes);
  result.normalized_return =
      total_expert_return > 0.0 ? total_return / total_expert_return : 0.0;
  return result;
}

std::string eval_csv(const EvalResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "task_id,episodes,successes,mean_return,normalized_return\n";
  int episodes = 0;
  int successes = 0;
  for (const auto& row : result.per_task) {
    episodes += row.episodes;
    successes += row.successes;
    out << row.task_id << ',' << row.episodes << ',' << row.successes << ','
        << row.mean_return << ',' << row.normalized_return << '\n';
  }
  out << "all," << episodes << ',' << successes << ',' << result.mean_return
      << ',' << result.normalized_return << '\n';
  return out.str();
}

void write_eval_csv(const EvalResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("eval: cannot open " + path);
  out << eval_csv(result);
}

void save_agent(const Agent& agent, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  agent.actor.save_file(dir + "/actor.pm");
  agent.critic1.save_file(dir + "/critic1.pm");
  agent.critic2.save_file(dir + "/critic2.pm");
  agent.target_actor.save_file(dir + "/target_actor.pm");
  agent.target_critic1.save_file(dir + "/target_critic1.pm");
  agent.target_critic2.save_file(dir + "/target_critic2.pm");
  if (agent.task_encoder.has_value())
    agent.task_encoder->save_file(dir + "/task_encoder.pm");

  nlohmann::json manifest{
      {"mode", agent.cfg.mode == Conditioning::kOneHot ? "one-hot"
                                                       : "subtask-embedding"},
      {"alpha", agent.cfg.bc_alpha},
      {"gamma", agent.cfg.gamma},
      {"target_rate", agent.cfg.target_rate},
      {"policy_noise", agent.cfg.policy_noise},
      {"noise_clip", agent.cfg.noise_clip},
      {"policy_delay", agent.cfg.policy_delay},
      {"batch", agent.cfg.batch},
      {"steps", agent.cfg.steps},
      {"learning_rate", agent.cfg.learning_rate},
      {"hidden", agent.cfg.hidden},
      {"num_tasks", agent.cfg.num_tasks},
      {"dim_z", agent.cfg.dim_z},
      {"half_width", agent.cfg.half_width},
      {"seed", agent.cfg.seed},
      {"obs_dim", agent.obs_dim},
      {"act_dim", agent.act_dim},
      {"trained", agent.trained}};
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw FormatError("agent: cannot open manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

Agent load_agent(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw FormatError("agent: cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("agent: corrupted manifest: ") + e.what());
  }

  AgentConfig cfg;
  cfg.mode = manifest.value("mode", "subtask-embedding") ==
                     std::string("one-hot")
                 ? Conditioning::kOneHot
                 : Conditioning::kSubtaskEmbedding;
  cfg.bc_alpha = manifest.value("alpha", cfg.bc_alpha);
  cfg.gamma = manifest.value("gamma", cfg.gamma);
  cfg.target_rate = manifest.value("target_rate", cfg.target_rate);
  cfg.policy_noise = manifest.value("policy_noise", cfg.policy_noise);
  cfg.noise_clip = manifest.value("noise_clip", cfg.noise_clip);
  cfg.policy_delay = manifest.value("policy_delay", cfg.policy_delay);
  cfg.batch = manifest.value("batch", cfg.batch);
  cfg.steps = manifest.value("steps", cfg.steps);
  cfg.learning_rate = manifest.value("learning_rate", cfg.learning_rate);
  cfg.hidden = manifest.value("hidden", cfg.hidden);
  cfg.num_tasks = manifest.value("num_tasks", cfg.num_tasks);
  cfg.dim_z = manifest.value("dim_z", cfg.dim_z);
  cfg.half_width = manifest.value("half_width", cfg.half_width);
  cfg.seed = manifest.value("seed", static_cast<std::uint64_t>(0));

  std::optional<fa::ParamMap> encoder;
  if (cfg.mode == Conditioning::kSubtaskEmbedding)
    encoder = fa::ParamMap::load_file(dir + "/task_encoder.pm");

  Agent agent{cfg,
              manifest.value("obs_dim", env::kObsDim),
              manifest.value("act_dim", env::kActDim),
              fa::ParamMap::load_file(dir + "/actor.pm"),
              fa::ParamMap::load_file(dir + "/critic1.pm"),
              fa::ParamMap::load_file(dir + "/critic2.pm"),
              fa::ParamMap::load_file(dir + "/target_actor.pm"),
              fa::ParamMap::load_file(dir + "/target_critic1.pm"),
              fa::ParamMap::load_file(dir + "/target_critic2.pm"),
              std::move(encoder),
              manifest.value("trained", true)};
  return agent;
}

namespace {

class CriticObjective : public fa::DiffLoss {
 public:
  CriticObjective(fa::ParamMap critic, Mat x, Mat a, Vec targets)
      : critic_(std::move(critic)),
        input_(hstack(x, a)),
        targets_(std::move(targets)) {}

  double value(const Vec& params) const override {
    critic_.set_params(params);
    const Vec q = critic_.forward_batch(input_).col(0);
    return (q - targets_).squaredNorm() / static_cast<double>(targets_.size());
  }

  double value_and_grad(const Vec& params, Vec& grad) const override {
    critic_.set_params(params);
    const int m = static_cast<int>(targets_.size());
    fa::ParamMap::Trace trace;
    const Vec q = critic_.forward_batch(input_, trace).col(0);
    const Vec err = q - targets_;
    const Mat upstream = (2.0 / m) * err;
    grad = Vec::Zero(critic_.param_count());
    critic_.backward(trace, upstream, grad);
    return err.squaredNorm() / m;
  }

 private:
  mutable fa::ParamMap critic_;
  Mat input_;
  Vec targets_;
};

class ActorObjective : public fa::DiffLoss {
 public:
  ActorObjective(fa::ParamMap actor, fa::ParamMap critic, Mat x, Mat a,
                 double q_weight)
      : actor_(std::move(actor)),
        critic_(std::move(critic)),
        x_(std::move(x)),
        a_(std::move(a)),
        q_weight_(q_weight) {}

  double value(const Vec& params) const override {
    actor_.set_params(params);
    const Mat pi = actor_.forward_batch(x_);
    const Vec q = critic_.forward_batch(hstack(x_, pi)).col(0);
    const double bc =
        (pi - a_).squaredNorm() / static_cast<double>(pi.size());
    return -q_weight_ * q.mean() + bc;
  }

  double value_and_grad(const Vec& params, Vec& grad) const override {
    actor_.set_params(params);
    const int m = static_cast<int>(x_.rows());
    const int act_dim = static_cast<int>(a_.cols());
    fa::ParamMap::Trace pi_trace;
    const Mat pi = actor_.forward_batch(x_, pi_trace);
    fa::ParamMap::Trace q_trace;
    const Vec q = critic_.forward_batch(hstack(x_, pi), q_trace).col(0);

    const Mat bc_err = pi - a_;
    const double loss =
        -q_weight_ * q.mean() + bc_err.squaredNorm() / (m * act_dim);

    Mat q_upstream = Mat::Constant(m, 1, -q_weight_ / m);
    Vec scratch = Vec::Zero(critic_.param_count());
    const Mat d_q_input = critic_.backward(q_trace, q_upstream, scratch);
    const Mat d_pi =
        d_q_input.rightCols(act_dim) + (2.0 / (m * act_dim)) * bc_err;
    grad = Vec::Zero(actor_.param_count());
    actor_.backward(pi_trace, d_pi, grad);
    return loss;
  }

 private:
  mutable fa::ParamMap actor_;
  fa::ParamMap critic_;
  Mat x_;
  Mat a_;
  double q_weight_;
};

}  // namespace

std::unique_ptr<fa::DiffLoss> make_critic_objective(fa::ParamMap critic, Mat x,
                                                    Mat a, Vec targets) {
  return std::make_unique<CriticObjective>(std::move(critic), std::move(x),
                                           std::move(a), std::move(targets));
}

std::unique_ptr<fa::DiffLoss> make_actor_objective(fa::ParamMap actor,
                                                   fa::ParamMap critic, Mat x,
                                                   Mat a, double q_weight) {
  return std::make_unique<ActorObjective>(std::move(actor), std::move(critic),
                                          std::move(x), std::move(a),
                                          q_weight);
}

}  // namespace srtd::rl
