#include "srtd/imagine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace srtd::imagine {
namespace {

bool finite(const Vec& v) { return v.allFinite(); }

/// Trajectory indices eligible as rollout seeds under the selection mode.
std::vector<int> seed_pool(const data::Dataset& dataset,
                           AugmentConfig::Source source, int half_width) {
  std::vector<int> pool;
  const int min_len = 2 * half_width + 1;

  if (source == AugmentConfig::Source::kUniform) {
    for (int i = 0; i < static_cast<int>(dataset.trajectories.size()); ++i) {
      const data::Trajectory& t = dataset.trajectories[i];
      if (t.origin == data::Origin::kReal && t.length() >= min_len)
        pool.push_back(i);
    }
    return pool;
  }

  // top-quality: within each task keep real trajectories at or above the
  // task's median quality weight
  std::map<int, std::vector<double>> weights;
  for (const data::Trajectory& t : dataset.trajectories)
    if (t.origin == data::Origin::kReal)
      weights[t.task_id].push_back(t.quality_weight);
  std::map<int, double> medians;
  for (auto& [task, w] : weights) {
    std::sort(w.begin(), w.end());
    medians[task] = w[w.size() / 2];
  }
  for (int i = 0; i < static_cast<int>(dataset.trajectories.size()); ++i) {
    const data::Trajectory& t = dataset.trajectories[i];
    if (t.origin == data::Origin::kReal && t.length() >= min_len &&
        t.quality_weight >= medians.at(t.task_id))
      pool.push_back(i);
  }
  return pool;
}

}  // namespace

data::Trajectory imagine_rollout(const task::JointModels& models,
                                 const data::WindowSample& seed_window,
                                 int horizon) {
  if (!models.trained)
    throw std::invalid_argument("imagine_rollout: models are not trained");
  if (horizon < 0)
    throw std::invalid_argument("imagine_rollout: negative horizon");

  data::Trajectory segment;
  segment.task_id = seed_window.task_id;
  segment.origin = data::Origin::kImagined;

  const Vec z = task::encode_task(models.task.encoder, seed_window);
  Vec s = seed_window.states[seed_window.half_width];  // anchor state
  for (int h = 0; h < horizon; ++h) {
    const Vec a = skill::decode_action(models.skill.decoder, s, z);
    const task::DynamicsPrediction pred =
        task::decode_dynamics(models.task.decoder, s, a, z);
    if (!finite(a) || !finite(pred.next_state) || !std::isfinite(pred.reward))
      break;
    data::Transition tr;
    tr.s = s;
    tr.a = a;
    tr.r = pred.reward;
    tr.s_next = pred.next_state;
    tr.done = false;
    segment.transitions.push_back(std::move(tr));
    s = pred.next_state;
  }
  return segment;
}

data::Trajectory gaussian_augment(const data::Trajectory& trajectory,
                                  double sigma, Rng& rng) {
  if (sigma < 0.0)
    throw std::invalid_argument("gaussian_augment: negative sigma");
  data::Trajectory noisy = trajectory;
  noisy.origin = data::Origin::kGaussian;
  if (noisy.transitions.empty()) return noisy;

  // one noise vector per underlying state, so s_next[k] stays equal to
  // s[k+1] after perturbation
  const int obs_dim = static_cast<int>(noisy.transitions[0].s.size());
  const int len = noisy.length();
  std::vector<Vec> noise(len + 1, Vec(obs_dim));
  for (Vec& e : noise)
    for (int c = 0; c < obs_dim; ++c) e[c] = sigma == 0.0 ? 0.0 : rng.normal(0.0, sigma);
  for (int k = 0; k < len; ++k) {
    noisy.transitions[k].s += noise[k];
    noisy.transitions[k].s_next += noise[k + 1];
  }
  return noisy;
}

data::Dataset augment_dataset(const data::Dataset& dataset,
                              const task::JointModels& models,
                              const AugmentConfig& cfg) {
  if (!models.trained)
    throw std::invalid_argument("augment_dataset: models are not trained");
  if (!dataset.relabeled)
    throw std::invalid_argument("augment_dataset: dataset must be relabeled");
  if (cfg.fraction <= 0.0 || cfg.fraction > 1.0)
    throw std::invalid_argument("augment_dataset: fraction must be in (0, 1]");

  const int n = models.task.half_width;
  const int horizon = cfg.horizon > 0 ? cfg.horizon : n + 1;
  const auto real_count = dataset.count_origin(data::Origin::kReal);
  const auto to_add = static_cast<std::size_t>(
      std::ceil(cfg.fraction * static_cast<double>(real_count)));

  data::Dataset augmented = dataset;
  if (to_add == 0) return augmented;

  const std::vector<int> pool = seed_pool(dataset, cfg.source, n);
  if (pool.empty())
    throw std::invalid_argument(
        "augment_dataset: no eligible seed trajectories");

  Rng rng(derive_seed(cfg.seed, 0xa06));
  for (std::size_t i = 0; i < to_add; ++i) {
    const int traj_idx = pool[rng.integer(pool.size())];
    const data::Trajectory& traj = dataset.trajectories[traj_idx];
    const int t = n + static_cast<int>(rng.integer(
                          static_cast<std::uint64_t>(traj.length() - 2 * n)));
    const data::WindowSample seed_window =
        data::extract_window(dataset, traj_idx, t, n);
    augmented.trajectories.push_back(
        imagine_rollout(models, seed_window, horizon));
  }
  data::relabel_returns(augmented);
  return augmented;
}

data::Dataset augment_dataset_gaussian(const data::Dataset& dataset,
                                       const AugmentConfig& cfg) {
  if (!dataset.relabeled)
    throw std::invalid_argument("augment_dataset: dataset must be relabeled");
  if (cfg.fraction <= 0.0 || cfg.fraction > 1.0)
    throw std::invalid_argument("augment_dataset: fraction must be in (0, 1]");

  const auto real_count = dataset.count_origin(data::Origin::kReal);
  const auto to_add = static_cast<std::size_t>(
      std::ceil(cfg.fraction * static_cast<double>(real_count)));

  data::Dataset augmented = dataset;
  if (to_add == 0) return augmented;

  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(dataset.trajectories.size()); ++i)
    if (dataset.trajectories[i].origin == data::Origin::kReal)
      pool.push_back(i);

  Rng rng(derive_seed(cfg.seed, 0xa07));
  for (std::size_t i = 0; i < to_add; ++i) {
    const int traj_idx = pool[rng.integer(pool.size())];
    augmented.trajectories.push_back(gaussian_augment(
        dataset.trajectories[traj_idx], cfg.noise_sigma, rng));
  }
  data::relabel_returns(augmented);
  return augmented;
}

std::vector<QualityRow> quality_report(const data::Dataset& dataset) {
  std::vector<QualityRow> rows;
  for (const data::Origin origin :
       {data::Origin::kReal, data::Origin::kImagined, data::Origin::kGaussian}) {
    QualityRow row;
    row.origin = origin;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (const data::Trajectory& traj : dataset.trajectories) {
      if (traj.origin != origin) continue;
      ++row.trajectories;
      for (const data::Transition& tr : traj.transitions) {
        ++row.steps;
        sum += tr.r;
        sum_sq += tr.r * tr.r;
      }
    }
    if (row.trajectories == 0) continue;
    if (row.steps > 0) {
      row.mean_reward = sum / static_cast<double>(row.steps);
      const double var =
          sum_sq / static_cast<double>(row.steps) - row.mean_reward * row.mean_reward;
      row.std_reward = std::sqrt(std::max(0.0, var));
    }
    rows.push_back(row);
  }
  return rows;
}

std::string quality_report_csv(const std::vector<QualityRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "origin,count,mean_reward,std\n";
  for (const QualityRow& row : rows) {
    out << data::origin_name(row.origin) << ',' << row.trajectories << ','
        << row.mean_reward << ',' << row.std_reward << '\n';
  }
  return out.str();
}

void write_quality_report(const std::vector<QualityRow>& rows,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("quality report: cannot open " + path);
  out << quality_report_csv(rows);
}

}  // namespace srtd::imagine
