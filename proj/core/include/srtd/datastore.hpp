#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "srtd/common.hpp"
#include "srtd/envsuite.hpp"

namespace srtd::data {

enum class Origin : std::uint8_t { kReal = 0, kImagined = 1, kGaussian = 2 };

std::string origin_name(Origin origin);

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;
};

struct Trajectory {
  int task_id = 0;
  Origin origin = Origin::kReal;
  double quality_weight = 0.0;  // per-task min-max normalized episodic return
  std::vector<Transition> transitions;

  double episodic_return() const;
  int length() const { return static_cast<int>(transitions.size()); }
};

enum class Tier : std::uint8_t { kMediumReplay = 0, kReplay = 1, kMediumExpert = 2 };

std::string tier_name(Tier tier);
Tier tier_from_name(const std::string& name);

/// Per-episode behavior quality is drawn from the tier's range:
/// MR ~ U(0, 0.5), RP ~ U(0, 1), ME ~ U(0.5, 1).
struct MixConfig {
  std::map<int, Tier> tiers;  // task_id -> tier
  std::uint64_t seed = 0;
  int episodes_mr = 150;
  int episodes_rp = 100;
  int episodes_me = 50;

  int episodes_for(Tier tier) const;
  /// Scales every tier count by factor (rounded, floor 1), preserving the
  /// 3:2:1 ratio of the defaults.
  void scale(double factor);
  std::string describe() const;  // e.g. "MR1-RP1-ME1"
};

std::string mix_to_json(const MixConfig& mix);
MixConfig mix_from_json(const std::string& json_text);
MixConfig load_mix(const std::string& path);
void save_mix(const MixConfig& mix, const std::string& path);

struct Dataset {
  int obs_dim = env::kObsDim;
  int act_dim = env::kActDim;
  int window_half_width = 5;
  std::uint64_t seed = 0;
  bool relabeled = false;
  std::vector<Trajectory> trajectories;

  std::size_t transition_count() const;
  std::size_t count_origin(Origin origin) const;
};

/// Rolls out the scripted policy for every (task, tier) pair of the mix.
/// Fully deterministic in mix.seed.
Dataset generate_dataset(const std::vector<env::TaskSpec>& suite,
                         const MixConfig& mix);

/// Sets quality weights: per task, min-max over the episodic returns of that
/// task's real trajectories (all weights 1 when max == min). Synthetic
/// trajectories are clamped into [0, 1] against the same real min/max and
/// never influence it.
void relabel_returns(Dataset& dataset);

/// Aligned window views at one anchor t: states s_{t-n..t+n}, actions
/// a_{t-n..t+n}, rewards r_{t-n..t} and next-states s_{t-n+1..t+1}. The skill
/// view uses the first 2n state-action pairs, the task view the first n+1
/// triples; next_states are the dynamics targets.
struct WindowSample {
  int task_id = 0;
  double quality = 0.0;
  int half_width = 0;
  std::vector<Vec> states;       // 2n+1
  std::vector<Vec> actions;      // 2n+1
  std::vector<double> rewards;   // n+1
  std::vector<Vec> next_states;  // n+1
};

struct WindowBatch {
  int half_width = 0;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<WindowSample> items;
  int size() const { return static_cast<int>(items.size()); }
};

Vec skill_window_flat(const WindowSample& w);  // length 2n*(obs+act)
Vec task_window_flat(const WindowSample& w);   // length (n+1)*(obs+act+1)
Vec task_window_flat(std::span<const Vec> states, std::span<const Vec> actions,
                     std::span<const double> rewards);

/// All valid anchors of a dataset for half-width n: every position
/// t in [n, L-n-1] of every episode with length L >= 2n+1.
struct AnchorIndex {
  struct Entry {
    int trajectory;
    int t;
  };
  int half_width = 0;
  std::vector<Entry> anchors;

  static AnchorIndex build(const Dataset& dataset, int half_width);
};

WindowSample extract_window(const Dataset& dataset, int trajectory, int t,
                            int half_width);

/// batch_size anchors drawn uniformly over all valid positions. Throws if no
/// episode is long enough, naming the minimum length.
WindowBatch sample_windows(const Dataset& dataset, int batch_size,
                           int half_width, Rng& rng);

/// Binary container: magic, JSON header (dims, half-width, counts, seed),
/// then one record per trajectory with a flat float64 payload.
void save(const Dataset& dataset, const std::string& path);
Dataset load(const std::string& path, int expected_obs_dim = env::kObsDim,
             int expected_act_dim = env::kActDim);

}  // namespace srtd::data
