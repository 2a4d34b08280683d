#pragma once

#include <memory>

#include "srtd/common.hpp"
#include "srtd/datastore.hpp"
#include "srtd/funcapprox.hpp"

namespace srtd::skill {

/// Positive-definite kernel on the latent space, normalized so k(x, x) = 1.
struct KernelSpec {
  enum class Family : std::uint8_t { kInverseMultiquadratic = 0, kGaussianRbf = 1 };
  Family family = Family::kInverseMultiquadratic;
  /// C for the inverse multiquadratic, sigma^2 for the Gaussian RBF.
  double scale = 16.0;
};

double kernel(const KernelSpec& spec, const Vec& x, const Vec& y);

/// Discrepancy between an encoded batch and a prior batch of equal size m:
///   1/(m(m-1)) * sum_{i != j} k(b_i, b_j)
/// + 1/(m(m-1)) * sum_{i != j} k(p_i, p_j)
/// - 1/m^2     * sum_{i, j}   k(b_i, p_j)
/// Rows are samples. Requires m >= 2.
double mmd_penalty(const Mat& encoded, const Mat& prior,
                   const KernelSpec& spec);

/// Accumulates weight * d(mmd)/d(encoded rows) into grad_encoded.
void mmd_penalty_grad(const Mat& encoded, const Mat& prior,
                      const KernelSpec& spec, double weight, Mat& grad_encoded);

/// Draws an m x dim matrix of independent standard normals.
Mat sample_prior(int m, int dim, Rng& rng);

/// Encoder over flattened state-action windows plus an action decoder that
/// reconstructs each step's action from (state, embedding).
struct SkillModel {
  fa::ParamMap encoder;
  fa::ParamMap decoder;
  int dim_z = 8;
  int half_width = 5;
  KernelSpec kernel;

  static SkillModel make(int obs_dim, int act_dim, int half_width, int dim_z,
                         int hidden, Rng& rng);

  int param_count() const {
    return encoder.param_count() + decoder.param_count();
  }
  Vec flat_params() const;
  void set_flat_params(const Vec& params);
};

Vec encode_skill(const fa::ParamMap& encoder, const data::WindowSample& window);
Vec decode_action(const fa::ParamMap& decoder, const Vec& obs, const Vec& embedding);

struct SkillLossParts {
  double reconstruction = 0.0;
  double prior_penalty = 0.0;
  double total = 0.0;
};

/// Mean summed per-step action reconstruction norm plus lambda times the
/// prior penalty, with prior samples supplied explicitly.
SkillLossParts skill_loss(const SkillModel& model,
                          const data::WindowBatch& batch, double lambda,
                          const Mat& prior_samples);

/// Same, drawing the m x dim_z prior batch from prior_rng.
SkillLossParts skill_loss(const SkillModel& model,
                          const data::WindowBatch& batch, double lambda,
                          Rng& prior_rng);

/// Loss plus gradient with respect to [encoder params; decoder params].
/// grad must be zero-initialized to model.param_count().
SkillLossParts skill_loss_grad(const SkillModel& model,
                               const data::WindowBatch& batch, double lambda,
                               const Mat& prior_samples, Eigen::Ref<Vec> grad);

/// Loss-of-flat-params view used for optimizer-agnostic gradient access.
std::unique_ptr<fa::DiffLoss> make_skill_objective(SkillModel model,
                                                   data::WindowBatch batch,
                                                   double lambda,
                                                   Mat prior_samples);

}  // namespace srtd::skill
