#include "srtd/datastore.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace srtd::data {
namespace {

constexpr char kMagic[8] = {'S', 'R', 'T', 'D', 'D', 'S', '1', '\n'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("dataset: truncated payload");
  return v;
}

double tier_quality(Tier tier, Rng& rng) {
  switch (tier) {
    case Tier::kMediumReplay:
      return rng.uniform(0.0, 0.5);
    case Tier::kReplay:
      return rng.uniform(0.0, 1.0);
    case Tier::kMediumExpert:
      return rng.uniform(0.5, 1.0);
  }
  return 0.0;
}

}  // namespace

double Trajectory::episodic_return() const {
  double total = 0.0;
  for (const Transition& t : transitions) total += t.r;
  return total;
}

std::string origin_name(Origin origin) {
  switch (origin) {
    case Origin::kReal:
      return "real";
    case Origin::kImagined:
      return "imagined";
    case Origin::kGaussian:
      return "gaussian";
  }
  return "unknown";
}

std::string tier_name(Tier tier) {
  switch (tier) {
    case Tier::kMediumReplay:
      return "MR";
    case Tier::kReplay:
      return "RP";
    case Tier::kMediumExpert:
      return "ME";
  }
  return "?";
}

Tier tier_from_name(const std::string& name) {
  if (name == "MR") return Tier::kMediumReplay;
  if (name == "RP") return Tier::kReplay;
  if (name == "ME") return Tier::kMediumExpert;
  throw FormatError("mix: unknown tier name '" + name + "'");
}

int MixConfig::episodes_for(Tier tier) const {
  switch (tier) {
    case Tier::kMediumReplay:
      return episodes_mr;
    case Tier::kReplay:
      return episodes_rp;
    case Tier::kMediumExpert:
      return episodes_me;
  }
  return 0;
}

void MixConfig::scale(double factor) {
  if (factor <= 0.0) throw std::invalid_argument("mix: scale must be positive");
  auto apply = [factor](int count) {
    return std::max(1, static_cast<int>(std::lround(count * factor)));
  };
  episodes_mr = apply(episodes_mr);
  episodes_rp = apply(episodes_rp);
  episodes_me = apply(episodes_me);
}

std::string MixConfig::describe() const {
  int mr = 0, rp = 0, me = 0;
  for (const auto& [id, tier] : tiers) {
    (void)id;
    if (tier == Tier::kMediumReplay) ++mr;
    if (tier == Tier::kReplay) ++rp;
    if (tier == Tier::kMediumExpert) ++me;
  }
  std::ostringstream out;
  out << "MR" << mr << "-RP" << rp << "-ME" << me;
  return out.str();
}

std::string mix_to_json(const MixConfig& mix) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& [id, tier] : mix.tiers)
    tasks.push_back({{"id", id}, {"tier", tier_name(tier)}});
  nlohmann::json doc{{"tasks", tasks},
                     {"seed", mix.seed},
                     {"episodes", {{"MR", mix.episodes_mr},
                                   {"RP", mix.episodes_rp},
                                   {"ME", mix.episodes_me}}}};
  return doc.dump(2);
}

MixConfig mix_from_json(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("mix: invalid JSON: ") + e.what());
  }
  MixConfig mix;
  for (const auto& item : doc.at("tasks")) {
    const int id = item.at("id").get<int>();
    mix.tiers[id] = tier_from_name(item.at("tier").get<std::string>());
  }
  mix.seed = doc.value("seed", 0ULL);
  if (doc.contains("episodes")) {
    mix.episodes_mr = doc["episodes"].value("MR", mix.episodes_mr);
    mix.episodes_rp = doc["episodes"].value("RP", mix.episodes_rp);
    mix.episodes_me = doc["episodes"].value("ME", mix.episodes_me);
  }
  return mix;
}

MixConfig load_mix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("mix: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return mix_from_json(buffer.str());
}

void save_mix(const MixConfig& mix, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("mix: cannot open " + path);
  out << mix_to_json(mix) << "\n";
}

std::size_t Dataset::transition_count() const {
  std::size_t n = 0;
  for (const Trajectory& t : trajectories) n += t.transitions.size();
  return n;
}

std::size_t Dataset::count_origin(Origin origin) const {
  std::size_t n = 0;
  for (const Trajectory& t : trajectories)
    if (t.origin == origin) ++n;
  return n;
}

Dataset generate_dataset(const std::vector<env::TaskSpec>& suite,
                         const MixConfig& mix) {
  if (suite.size() != mix.tiers.size())
    throw std::invalid_argument("generate_dataset: suite/mix task sets differ");
  for (const env::TaskSpec& task : suite)
    if (!mix.tiers.contains(task.task_id))
      throw std::invalid_argument("generate_dataset: mix is missing task " +
                                  std::to_string(task.task_id));

  Dataset dataset;
  dataset.seed = mix.seed;
  for (const env::TaskSpec& task : suite) {
    const Tier tier = mix.tiers.at(task.task_id);
    const int episodes = mix.episodes_for(tier);
    for (int ep = 0; ep < episodes; ++ep) {
      const auto tid = static_cast<std::uint64_t>(task.task_id);
      const auto eid = static_cast<std::uint64_t>(ep);
      Rng quality_rng(derive_seed(mix.seed, tid, eid, 1));
      Rng policy_rng(derive_seed(mix.seed, tid, eid, 2));
      const double quality = tier_quality(tier, quality_rng);
      const std::uint64_t env_seed = derive_seed(mix.seed, tid, eid, 3);

      Trajectory traj;
      traj.task_id = task.task_id;
      traj.origin = Origin::kReal;
      env::EnvState state = env::reset(task, env_seed);
      bool done = false;
      while (!done) {
        const Eigen::Vector2d action =
            env::scripted_policy(task, state, quality, policy_rng);
        const env::StepResult result = env::step(task, state, action);
        Transition tr;
        tr.s = env::observe(state);
        tr.a = Vec(2);
        tr.a << action.x(), action.y();
        tr.r = result.reward;
        tr.s_next = env::observe(result.next);
        tr.done = result.done;
        traj.transitions.push_back(std::move(tr));
        state = result.next;
        done = result.done;
      }
      dataset.trajectories.push_back(std::move(traj));
    }
  }
  return dataset;
}

void relabel_returns(Dataset& dataset) {
  std::map<int, std::pair<double, double>> bounds;  // task -> (min, max)
  for (const Trajectory& traj : dataset.trajectories) {
    if (traj.origin != Origin::kReal) continue;
    const double g = traj.episodic_return();
    auto it = bounds.find(traj.task_id);
    if (it == bounds.end()) {
      bounds[traj.task_id] = {g, g};
    } else {
      it->second.first = std::min(it->second.first, g);
      it->second.second = std::max(it->second.second, g);
    }
  }
  if (bounds.empty())
    throw std::invalid_argument("relabel_returns: dataset has no real trajectories");
  for (const Trajectory& traj : dataset.trajectories) {
    if (!bounds.contains(traj.task_id))
      throw std::invalid_argument(
          "relabel_returns: task " + std::to_string(traj.task_id) +
          " has no real trajectories to normalize against");
  }

  for (Trajectory& traj : dataset.trajectories) {
    const auto [lo, hi] = bounds.at(traj.task_id);
    const double g = traj.episodic_return();
    double weight;
    if (hi == lo) {
      weight = 1.0;
    } else {
      weight = (g - lo) / (hi - lo);
    }
    if (traj.origin != Origin::kReal)
      weight = std::clamp(weight, 0.0, 1.0);
    traj.quality_weight = weight;
  }
  dataset.relabeled = true;
}

Vec skill_window_flat(const WindowSample& w) {
  const int n = w.half_width;
  const int obs = n > 0 ? static_cast<int>(w.states[0].size()) : 0;
  const int act = n > 0 ? static_cast<int>(w.actions[0].size()) : 0;
  Vec flat(2 * n * (obs + act));
  int pos = 0;
  for (int k = 0; k < 2 * n; ++k) {
    flat.segment(pos, obs) = w.states[k];
    pos += obs;
    flat.segment(pos, act) = w.actions[k];
    pos += act;
  }
  return flat;
}

Vec task_window_flat(std::span<const Vec> states, std::span<const Vec> actions,
                     std::span<const double> rewards) {
  const int count = static_cast<int>(states.size());
  if (static_cast<int>(actions.size()) != count ||
      static_cast<int>(rewards.size()) != count)
    throw DimensionError("task window: state/action/reward counts differ");
  const int obs = static_cast<int>(states[0].size());
  const int act = static_cast<int>(actions[0].size());
  Vec flat(count * (obs + act + 1));
  int pos = 0;
  for (int k = 0; k < count; ++k) {
    flat.segment(pos, obs) = states[k];
    pos += obs;
    flat.segment(pos, act) = actions[k];
    pos += act;
    flat[pos++] = rewards[k];
  }
  return flat;
}

Vec task_window_flat(const WindowSample& w) {
  const int n = w.half_width;
  return task_window_flat(std::span(w.states.data(), n + 1),
                          std::span(w.actions.data(), n + 1),
                          std::span(w.rewards.data(), n + 1));
}

AnchorIndex AnchorIndex::build(const Dataset& dataset, int half_width) {
  if (half_width < 0)
    throw std::invalid_argument("anchor index: negative half-width");
  AnchorIndex index;
  index.half_width = half_width;
  for (int i = 0; i < static_cast<int>(dataset.trajectories.size()); ++i) {
    const int len = dataset.trajectories[i].length();
    for (int t = half_width; t <= len - half_width - 1; ++t)
      index.anchors.push_back({i, t});
  }
  return index;
}

WindowSample extract_window(const Dataset& dataset, int trajectory, int t,
                            int half_width) {
  const Trajectory& traj = dataset.trajectories.at(trajectory);
  const int n = half_width;
  const int len = traj.length();
  if (t < n || t > len - n - 1)
    throw std::out_of_range("extract_window: anchor outside valid range");

  WindowSample w;
  w.task_id = traj.task_id;
  w.quality = traj.quality_weight;
  w.half_width = n;
  w.states.reserve(2 * n + 1);
  w.actions.reserve(2 * n + 1);
  w.rewards.reserve(n + 1);
  w.next_states.reserve(n + 1);
  for (int k = -n; k <= n; ++k) {
    const Transition& tr = traj.transitions[t + k];
    w.states.push_back(tr.s);
    w.actions.push_back(tr.a);
  }
  for (int k = -n; k <= 0; ++k) {
    w.rewards.push_back(traj.transitions[t + k].r);
    w.next_states.push_back(traj.transitions[t + k].s_next);
  }
  return w;
}

WindowBatch sample_windows(const Dataset& dataset, int batch_size,
                           int half_width, Rng& rng) {
  const AnchorIndex index = AnchorIndex::build(dataset, half_width);
  if (index.anchors.empty()) {
    std::ostringstream msg;
    msg << "sample_windows: no valid anchors; windows need episodes of length"
        << " >= " << (2 * half_width + 1);
    throw std::invalid_argument(msg.str());
  }
  WindowBatch batch;
  batch.half_width = half_width;
  batch.obs_dim = dataset.obs_dim;
  batch.act_dim = dataset.act_dim;
  batch.items.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const auto& entry = index.anchors[rng.integer(index.anchors.size())];
    batch.items.push_back(
        extract_window(dataset, entry.trajectory, entry.t, half_width));
  }
  return batch;
}

void save(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("dataset: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));

  nlohmann::json header{{"obs_dim", dataset.obs_dim},
                        {"act_dim", dataset.act_dim},
                        {"n", dataset.window_half_width},
                        {"seed", dataset.seed},
                        {"relabeled", dataset.relabeled},
                        {"dtype", "f64"},
                        {"counts",
                         {{"trajectories", dataset.trajectories.size()},
                          {"transitions", dataset.transition_count()}}}};
  const std::string header_text = header.dump();
  write_pod(out, static_cast<std::uint32_t>(header_text.size()));
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));

  for (const Trajectory& traj : dataset.trajectories) {
    write_pod(out, static_cast<std::int32_t>(traj.task_id));
    write_pod(out, static_cast<std::uint8_t>(traj.origin));
    write_pod(out, traj.quality_weight);
    write_pod(out, static_cast<std::uint32_t>(traj.transitions.size()));
    for (const Transition& tr : traj.transitions) {
      out.write(reinterpret_cast<const char*>(tr.s.data()),
                dataset.obs_dim * sizeof(double));
      out.write(reinterpret_cast<const char*>(tr.a.data()),
                dataset.act_dim * sizeof(double));
      write_pod(out, tr.r);
      out.write(reinterpret_cast<const char*>(tr.s_next.data()),
                dataset.obs_dim * sizeof(double));
      write_pod(out, static_cast<double>(tr.done ? 1.0 : 0.0));
    }
  }
  if (!out) throw FormatError("dataset: write failed for " + path);
}

Dataset load(const std::string& path, int expected_obs_dim,
             int expected_act_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("dataset: cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("dataset: bad header magic");

  const auto header_len = read_pod<std::uint32_t>(in);
  if (header_len == 0 || header_len > (1u << 20))
    throw FormatError("dataset: implausible header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), header_len);
  if (!in) throw FormatError("dataset: truncated header");

  nlohmann::json header;
  Dataset dataset;
  std::size_t traj_count = 0;
  std::size_t expected_transitions = 0;
  try {
    header = nlohmann::json::parse(header_text);
    dataset.obs_dim = header.at("obs_dim").get<int>();
    dataset.act_dim = header.at("act_dim").get<int>();
    dataset.window_half_width = header.at("n").get<int>();
    dataset.seed = header.at("seed").get<std::uint64_t>();
    dataset.relabeled = header.value("relabeled", false);
    if (header.value("dtype", "f64") != "f64")
      throw FormatError("dataset: unsupported dtype");
    traj_count = header.at("counts").at("trajectories").get<std::size_t>();
    expected_transitions =
        header.at("counts").at("transitions").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset: corrupted header: ") + e.what());
  }
  if (dataset.obs_dim != expected_obs_dim) {
    std::ostringstream msg;
    msg << "dataset: observation dimension " << dataset.obs_dim
        << " does not match expected " << expected_obs_dim;
    throw FormatError(msg.str());
  }
  if (dataset.act_dim != expected_act_dim) {
    std::ostringstream msg;
    msg << "dataset: action dimension " << dataset.act_dim
        << " does not match expected " << expected_act_dim;
    throw FormatError(msg.str());
  }

  dataset.trajectories.reserve(traj_count);
  for (std::size_t i = 0; i < traj_count; ++i) {
    Trajectory traj;
    traj.task_id = read_pod<std::int32_t>(in);
    traj.origin = static_cast<Origin>(read_pod<std::uint8_t>(in));
    traj.quality_weight = read_pod<double>(in);
    const auto len = read_pod<std::uint32_t>(in);
    traj.transitions.reserve(len);
    for (std::uint32_t k = 0; k < len; ++k) {
      Transition tr;
      tr.s = Vec(dataset.obs_dim);
      in.read(reinterpret_cast<char*>(tr.s.data()),
              dataset.obs_dim * sizeof(double));
      tr.a = Vec(dataset.act_dim);
      in.read(reinterpret_cast<char*>(tr.a.data()),
              dataset.act_dim * sizeof(double));
      tr.r = read_pod<double>(in);
      tr.s_next = Vec(dataset.obs_dim);
      in.read(reinterpret_cast<char*>(tr.s_next.data()),
              dataset.obs_dim * sizeof(double));
      tr.done = read_pod<double>(in) != 0.0;
      if (!in) throw FormatError("dataset: truncated transition payload");
      traj.transitions.push_back(std::move(tr));
    }
    dataset.trajectories.push_back(std::move(traj));
  }
  if (dataset.transition_count() != expected_transitions)
    throw FormatError("dataset: transition count disagrees with header");
  return dataset;
}

}  // namespace srtd::data
