#pragma once

#include <string>
#include <vector>

#include "srtd/common.hpp"
#include "srtd/datastore.hpp"
#include "srtd/taskdecomp.hpp"

namespace srtd::imagine {

struct AugmentConfig {
  /// Imagined rollout length; 0 means use half_width + 1.
  int horizon = 0;
  /// Synthetic trajectories added per real trajectory.
  double fraction = 0.5;
  enum class Source : std::uint8_t { kUniform = 0, kTopQuality = 1 };
  Source source = Source::kTopQuality;
  /// Per-component state noise stddev for the Gaussian baseline.
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
};

/// Rolls the skill decoder (as policy) and task decoder (as world model)
/// forward for `horizon` steps from the last state of the seed window. The
/// embedding is computed once from the seed window and held fixed. The
/// segment stops early at the first non-finite prediction.
data::Trajectory imagine_rollout(const task::JointModels& models,
                                 const data::WindowSample& seed_window,
                                 int horizon);

/// Copy of the trajectory with every state (and matching next-state)
/// perturbed once by iid N(0, sigma^2) noise; actions and rewards untouched.
data::Trajectory gaussian_augment(const data::Trajectory& trajectory,
                                  double sigma, Rng& rng);

/// Adds ceil(fraction * real count) imagined segments seeded from windows of
/// the dataset, then refreshes quality weights (real weights are preserved
/// exactly; synthetic weights are clamped against the real per-task min/max).
data::Dataset augment_dataset(const data::Dataset& dataset,
                              const task::JointModels& models,
                              const AugmentConfig& cfg);

/// Same bookkeeping with noisy copies of real trajectories instead of
/// imagined rollouts.
data::Dataset augment_dataset_gaussian(const data::Dataset& dataset,
                                       const AugmentConfig& cfg);

struct QualityRow {
  data::Origin origin;
  std::size_t trajectories = 0;
  std::size_t steps = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
};

/// Mean/std of per-step rewards grouped by trajectory origin, ordered
/// real, imagined, gaussian (absent origins omitted).
std::vector<QualityRow> quality_report(const data::Dataset& dataset);

std::string quality_report_csv(const std::vector<QualityRow>& rows);
void write_quality_report(const std::vector<QualityRow>& rows,
                          const std::string& path);

}  // namespace srtd::imagine
