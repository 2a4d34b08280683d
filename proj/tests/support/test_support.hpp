#pragma once

// Shared oracles and fixture builders. Everything here recomputes results
// through plain scalar loops, independent of the library's batched paths.

#include <cmath>
#include <functional>
#include <vector>

#include "srtd/common.hpp"
#include "srtd/datastore.hpp"

namespace test_support {

using srtd::Mat;
using srtd::Rng;
using srtd::Vec;

/// Central finite differences of a scalar function of a flat vector.
template <typename F>
Vec fd_grad(F&& f, Vec params, double h = 1e-5) {
  Vec grad(params.size());
  for (int i = 0; i < params.size(); ++i) {
    const double original = params[i];
    params[i] = original + h;
    const double above = f(params);
    params[i] = original - h;
    const double below = f(params);
    params[i] = original;
    grad[i] = (above - below) / (2.0 * h);
  }
  return grad;
}

/// Worst per-coordinate relative error; coordinates where both sides are
/// below atol count as exact.
inline double max_rel_error(const Vec& a, const Vec& b, double atol = 1e-8) {
  double worst = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double mag_a = std::abs(a[i]);
    const double mag_b = std::abs(b[i]);
    if (mag_a < atol && mag_b < atol) continue;
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, mag_a + mag_b));
  }
  return worst;
}

/// Independent feed-forward evaluation by explicit loops over the flat
/// parameter layout: per layer, weight (out x in, column-major) then bias.
/// acts: one of 't' (tanh) or 'r' (relu) per hidden layer; out_act: 'i'/'t'.
inline Vec naive_forward(const std::vector<int>& sizes, const std::string& acts,
                         char out_act, const Vec& params, const Vec& input) {
  Vec current = input;
  int offset = 0;
  const int layers = static_cast<int>(sizes.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    Vec next(out);
    for (int r = 0; r < out; ++r) {
      double acc = params[offset + in * out + r];  // bias
      for (int c = 0; c < in; ++c)
        acc += params[offset + c * out + r] * current[c];
      next[r] = acc;
    }
    offset += (in + 1) * out;
    if (l + 1 < layers) {
      const char act = acts[l];
      for (int r = 0; r < out; ++r)
        next[r] = act == 't' ? std::tanh(next[r]) : std::max(0.0, next[r]);
    } else if (out_act == 't') {
      for (int r = 0; r < out; ++r) next[r] = std::tanh(next[r]);
    }
    current = next;
  }
  return current;
}

/// O(m^2) double-sum discrepancy with caller-supplied kernel.
template <typename K>
double brute_mmd(const Mat& encoded, const Mat& prior, K&& kernel) {
  const int m = static_cast<int>(encoded.rows());
  double within_e = 0.0;
  double within_p = 0.0;
  double cross = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) {
        within_e += kernel(Vec(encoded.row(i)), Vec(encoded.row(j)));
        within_p += kernel(Vec(prior.row(i)), Vec(prior.row(j)));
      }
      cross += kernel(Vec(encoded.row(i)), Vec(prior.row(j)));
    }
  }
  const double mm1 = static_cast<double>(m) * (m - 1);
  return within_e / mm1 + within_p / mm1 - cross / (static_cast<double>(m) * m);
}

inline Vec random_vec(int n, Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.uniform(-1.0, 1.0);
  return v;
}

inline Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.uniform(-1.0, 1.0);
  return m;
}

/// Window batch with random contents, self-consistent next-state chaining.
inline srtd::data::WindowBatch random_window_batch(int m, int n, int obs_dim,
                                                   int act_dim, Rng& rng) {
  srtd::data::WindowBatch batch;
  batch.half_width = n;
  batch.obs_dim = obs_dim;
  batch.act_dim = act_dim;
  for (int i = 0; i < m; ++i) {
    srtd::data::WindowSample w;
    w.task_id = 0;
    w.quality = rng.uniform();
    w.half_width = n;
    for (int k = 0; k < 2 * n + 1; ++k) {
      w.states.push_back(random_vec(obs_dim, rng));
      w.actions.push_back(random_vec(act_dim, rng));
    }
    for (int k = 0; k <= n; ++k) {
      w.rewards.push_back(rng.uniform());
      // target chains to the stored successor where one exists
      if (k + 1 < 2 * n + 1)
        w.next_states.push_back(w.states[k + 1]);
      else
        w.next_states.push_back(random_vec(obs_dim, rng));
    }
    batch.items.push_back(std::move(w));
  }
  return batch;
}

/// Dataset of hand-set trajectories: one task, each trajectory a constant
/// reward stream of the given lengths.
inline srtd::data::Dataset synthetic_dataset(
    const std::vector<std::pair<int, double>>& lengths_and_rewards,
    int task_id = 0, int obs_dim = 4, int act_dim = 2) {
  srtd::data::Dataset dataset;
  dataset.obs_dim = obs_dim;
  dataset.act_dim = act_dim;
  Rng rng(99);
  for (const auto& [length, reward] : lengths_and_rewards) {
    srtd::data::Trajectory traj;
    traj.task_id = task_id;
    Vec state = random_vec(obs_dim, rng);
    for (int t = 0; t < length; ++t) {
      srtd::data::Transition tr;
      tr.s = state;
      tr.a = random_vec(act_dim, rng);
      tr.r = reward;
      state = random_vec(obs_dim, rng);
      tr.s_next = state;
      tr.done = t + 1 == length;
      traj.transitions.push_back(std::move(tr));
    }
    dataset.trajectories.push_back(std::move(traj));
  }
  return dataset;
}

}  // namespace test_support
