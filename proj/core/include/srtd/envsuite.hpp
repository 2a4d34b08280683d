#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srtd/common.hpp"

namespace srtd::env {

inline constexpr int kObsDim = 4;  // position (2) + velocity (2)
inline constexpr int kActDim = 2;

inline constexpr double kDt = 0.05;
inline constexpr double kDrag = 0.1;
inline constexpr double kMaxSpeed = 0.1;
inline constexpr double kSuccessRadius = 0.05;
inline constexpr double kGainP = 4.0;
inline constexpr double kGainD = 2.0;
inline constexpr double kMaxDrift = 0.5;
/// Suites sample per-axis drift magnitudes from [kSuiteDriftMin,
/// kSuiteDriftMax] with random signs (inside the kMaxDrift bound). The lower
/// end keeps undirected policies pinned away from goals; the upper end keeps
/// partially drift-compensating behavior within the success radius.
inline constexpr double kSuiteDriftMin = 0.1;
inline constexpr double kSuiteDriftMax = 0.25;

/// One navigation task: reach `goal` under a constant drift that is never
/// part of any observation.
struct TaskSpec {
  int task_id = 0;
  Eigen::Vector2d goal{0.5, 0.5};
  Eigen::Vector2d drift{0.0, 0.0};
  int horizon = 100;
};

struct EnvState {
  Eigen::Vector2d position{0.0, 0.0};
  Eigen::Vector2d velocity{0.0, 0.0};
  int t = 0;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

/// Start position uniform in [0.05, 0.95]^2, at least 0.2 from the goal;
/// zero velocity. Deterministic in (task, seed).
EnvState reset(const TaskSpec& task, std::uint64_t seed);

/// Point-mass kinematics with drag and drift; action components are clipped
/// to [-1, 1]. Reward is 1 - |p' - goal| / sqrt(2), in [0, 1]. Increments the
/// per-thread step counter.
StepResult step(const TaskSpec& task, const EnvState& state,
                Eigen::Vector2d action);

/// Observation handed to everything downstream: (position, velocity) only.
Vec observe(const EnvState& state);

/// Behavior policy blending a drift-compensating PD controller with uniform
/// noise. quality = 1 gives the controller exactly, quality = 0 pure noise.
/// The controller reads the drift; it exists only to generate data.
Eigen::Vector2d scripted_policy(const TaskSpec& task, const EnvState& state,
                                double quality, Rng& rng);

/// num_tasks tasks with goals spaced at least 0.1 apart, sampled
/// deterministically from seed. Throws GenerationError if spacing cannot be
/// met within 10,000 proposals.
std::vector<TaskSpec> make_suite(int num_tasks, std::uint64_t seed);

std::string suite_to_json(const std::vector<TaskSpec>& suite);
std::vector<TaskSpec> suite_from_json(const std::string& json_text);
void save_suite(const std::vector<TaskSpec>& suite, const std::string& path);
std::vector<TaskSpec> load_suite(const std::string& path);

/// Number of env transitions taken by the current thread. Lets callers verify
/// that a code path never touched the environment.
std::uint64_t step_count();
void reset_step_count();

}  // namespace srtd::env
