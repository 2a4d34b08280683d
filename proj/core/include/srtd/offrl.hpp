#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "srtd/common.hpp"
#include "srtd/datastore.hpp"
#include "srtd/envsuite.hpp"
#include "srtd/funcapprox.hpp"
#include "srtd/taskdecomp.hpp"

namespace srtd::rl {

enum class Conditioning : std::uint8_t { kOneHot = 0, kSubtaskEmbedding = 1 };

struct AgentConfig {
  Conditioning mode = Conditioning::kSubtaskEmbedding;
  double bc_alpha = 2.5;     // behavior-cloning trade-off
  double gamma = 0.99;
  double target_rate = 0.005;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  int policy_delay = 2;
  int batch = 256;
  int steps = 50000;
  double learning_rate = 3e-4;
  int hidden = 64;
  int num_tasks = 0;   // one-hot context width
  int dim_z = 8;       // embedding context width
  int half_width = 5;  // history length used to build embeddings
  std::uint64_t seed = 0;
  int log_every = 1000;
};

/// [s; context] concatenation fed to the actor and critics.
Vec build_state(const Vec& s, const Vec& context);

Vec one_hot(int index, int size);

/// Rolling window of the last n+1 observed (s, a, r) triples of the current
/// episode. Until n+1 real steps exist, missing leading entries repeat the
/// first observation with zero actions and rewards.
class HistoryBuffer {
 public:
  HistoryBuffer(int half_width, int obs_dim, int act_dim);

  void reset(const Vec& first_obs);
  void push(const Vec& s, const Vec& a, double r);

  std::vector<Vec> window_states() const;
  std::vector<Vec> window_actions() const;
  std::vector<double> window_rewards() const;

 private:
  int half_width_;
  int obs_dim_;
  int act_dim_;
  Vec first_obs_;
  std::deque<Vec> states_;
  std::deque<Vec> actions_;
  std::deque<double> rewards_;
};

/// TD3-style twin-critic actor-critic with a behavior-cloning term, driven
/// entirely by a static dataset. Context comes from a task one-hot or from
/// the (frozen) task encoder over recent history.
struct Agent {
  AgentConfig cfg;
  int obs_dim = env::kObsDim;
  int act_dim = env::kActDim;
  fa::ParamMap actor;
  fa::ParamMap critic1;
  fa::ParamMap critic2;
  fa::ParamMap target_actor;
  fa::ParamMap target_critic1;
  fa::ParamMap target_critic2;
  std::optional<fa::ParamMap> task_encoder;  // frozen, embedding mode only
  bool trained = false;

  static Agent make(const AgentConfig& cfg, int obs_dim, int act_dim,
                    std::optional<fa::ParamMap> task_encoder);

  int context_dim() const;
  /// Deterministic policy output for an augmented observation.
  Vec act(const Vec& obs, const Vec& context) const;
};

/// Dataset flattened to per-transition rows with contexts attached once at
/// construction: row t of an episode carries the embedding built from the
/// repeat-padded history ending just before step t (or the task one-hot).
struct TransitionTable {
  Mat x;       // [s; context]
  Mat a;
  Vec r;
  Mat x_next;  // [s'; next context]
  Vec done;    // 0/1
  int size() const { return static_cast<int>(r.size()); }
};

TransitionTable build_transition_table(const data::Dataset& dataset,
                                       const AgentConfig& cfg,
                                       const fa::ParamMap* task_encoder);

struct UpdateBatch {
  Mat x;
  Mat a;
  Vec r;
  Mat x_next;
  Vec done;
};

UpdateBatch sample_update_batch(const TransitionTable& table, int batch_size,
                                Rng& rng);

struct UpdateDiagnostics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double mean_q = 0.0;
  double bc_term = 0.0;
  bool actor_updated = false;
};

/// Owns the optimizer state of one agent across update calls.
class AgentTrainer {
 public:
  explicit AgentTrainer(Agent agent);

  /// One TD3+BC step: both critics every call, actor and targets every
  /// policy_delay-th call. Throws NumericError on non-finite losses.
  UpdateDiagnostics update(const UpdateBatch& batch);

  const Agent& agent() const { return agent_; }
  Agent take() &&;
  std::int64_t updates() const { return updates_; }

 private:
  Agent agent_;
  fa::OptState opt_actor_;
  fa::OptState opt_critic1_;
  fa::OptState opt_critic2_;
  Rng noise_rng_;
  std::int64_t updates_ = 0;
};

struct AgentLogRow {
  int step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double mean_q = 0.0;
  double bc_term = 0.0;
};

struct TrainAgentResult {
  Agent agent;
  std::vector<AgentLogRow> log;
};

TrainAgentResult train_agent(const data::Dataset& dataset,
                             const AgentConfig& cfg,
                             const fa::ParamMap* task_encoder);

void write_agent_log(const std::vector<AgentLogRow>& log,
                     const std::string& path);

struct EvalResult {
  double success_rate = 0.0;      // fraction of episodes reaching the goal
  double mean_return = 0.0;
  double normalized_return = 0.0;  // against the scripted expert on the
                                   // same seeds
  struct PerTask {
    int task_id = 0;
    int episodes = 0;
    int successes = 0;
    double mean_return = 0.0;
    double normalized_return = 0.0;
  };
  std::vector<PerTask> per_task;
};

EvalResult evaluate(const Agent& agent, const std::vector<env::TaskSpec>& suite,
                    int episodes_per_task, std::uint64_t seed);

std::string eval_csv(const EvalResult& result);
void write_eval_csv(const EvalResult& result, const std::string& path);

void save_agent(const Agent& agent, const std::string& dir);
Agent load_agent(const std::string& dir);

/// Frozen-coefficient pieces of the update, exposed for gradient checking.
std::unique_ptr<fa::DiffLoss> make_critic_objective(fa::ParamMap critic, Mat x,
                                                    Mat a, Vec targets);
std::unique_ptr<fa::DiffLoss> make_actor_objective(fa::ParamMap actor,
                                                   fa::ParamMap critic, Mat x,
                                                   Mat a, double q_weight);

}  // namespace srtd::rl
