#include "srtd/envsuite.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace srtd::env {
namespace {

thread_local std::uint64_t t_step_count = 0;

double clamp(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

Eigen::Vector2d clip_action(Eigen::Vector2d a) {
  return {clamp(a.x(), -1.0, 1.0), clamp(a.y(), -1.0, 1.0)};
}

}  // namespace

EnvState reset(const TaskSpec& task, std::uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(task.task_id), 0x7e5e7));
  EnvState state;
  do {
    state.position.x() = rng.uniform(0.05, 0.95);
    state.position.y() = rng.uniform(0.05, 0.95);
  } while ((state.position - task.goal).norm() < 0.2);
  state.velocity.setZero();
  state.t = 0;
  return state;
}

StepResult step(const TaskSpec& task, const EnvState& state,
                Eigen::Vector2d action) {
  ++t_step_count;
  action = clip_action(action);

  StepResult result;
  Eigen::Vector2d v = state.velocity + kDt * (action + task.drift) -
                      kDrag * state.velocity;
  v.x() = clamp(v.x(), -kMaxSpeed, kMaxSpeed);
  v.y() = clamp(v.y(), -kMaxSpeed, kMaxSpeed);

  Eigen::Vector2d p = state.position + v;
  p.x() = clamp(p.x(), 0.0, 1.0);
  p.y() = clamp(p.y(), 0.0, 1.0);

  result.next.position = p;
  result.next.velocity = v;
  result.next.t = state.t + 1;

  const double dist = (p - task.goal).norm();
  result.reward = 1.0 - dist / std::sqrt(2.0);
  result.success = dist < kSuccessRadius;
  result.done = result.success || result.next.t >= task.horizon;
  return result;
}

Vec observe(const EnvState& state) {
  Vec obs(kObsDim);
  obs << state.position.x(), state.position.y(), state.velocity.x(),
      state.velocity.y();
  return obs;
}

Eigen::Vector2d scripted_policy(const TaskSpec& task, const EnvState& state,
                                double quality, Rng& rng) {
  const Eigen::Vector2d expert =
      clip_action(kGainP * (task.goal - state.position) -
                  kGainD * state.velocity - task.drift);
  const Eigen::Vector2d noise{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  return clip_action(quality * expert + (1.0 - quality) * noise);
}

std::vector<TaskSpec> make_suite(int num_tasks, std::uint64_t seed) {
  if (num_tasks < 1)
    throw std::invalid_argument("make_suite: num_tasks must be >= 1");
  Rng rng(derive_seed(seed, 0x5017e));
  std::vector<TaskSpec> suite;
  suite.reserve(num_tasks);
  int proposals = 0;
  while (static_cast<int>(suite.size()) < num_tasks) {
    if (++proposals > 10000) {
      std::ostringstream msg;
      msg << "make_suite: could not place " << num_tasks
          << " goals at pairwise distance >= 0.1 within 10000 proposals";
      throw GenerationError(msg.str());
    }
    Eigen::Vector2d goal{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    bool ok = true;
    for (const TaskSpec& t : suite) {
      if ((t.goal - goal).norm() < 0.1) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    TaskSpec task;
    task.task_id = static_cast<int>(suite.size());
    task.goal = goal;
    auto drift_component = [&rng]() {
      const double magnitude = rng.uniform(kSuiteDriftMin, kSuiteDriftMax);
      return rng.uniform() < 0.5 ? -magnitude : magnitude;
    };
    task.drift = {drift_component(), drift_component()};
    task.horizon = 100;
    suite.push_back(task);
  }
  return suite;
}

std::string suite_to_json(const std::vector<TaskSpec>& suite) {
  nlohmann::json doc = nlohmann::json::array();
  for (const TaskSpec& t : suite) {
    doc.push_back({{"task_id", t.task_id},
                   {"goal", {t.goal.x(), t.goal.y()}},
                   {"drift", {t.drift.x(), t.drift.y()}},
                   {"horizon", t.horizon}});
  }
  return doc.dump(2);
}

std::vector<TaskSpec> suite_from_json(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("suite: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw FormatError("suite: expected a JSON array");
  std::vector<TaskSpec> suite;
  for (const auto& item : doc) {
    TaskSpec t;
    t.task_id = item.at("task_id").get<int>();
    t.goal = {item.at("goal").at(0).get<double>(),
              item.at("goal").at(1).get<double>()};
    t.drift = {item.at("drift").at(0).get<double>(),
               item.at("drift").at(1).get<double>()};
    t.horizon = item.at("horizon").get<int>();
    suite.push_back(t);
  }
  return suite;
}

void save_suite(const std::vector<TaskSpec>& suite, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("suite: cannot open " + path);
  out << suite_to_json(suite) << "\n";
}

std::vector<TaskSpec> load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("suite: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return suite_from_json(buffer.str());
}

std::uint64_t step_count() { return t_step_count; }
void reset_step_count() { t_step_count = 0; }

}  // namespace srtd::env
