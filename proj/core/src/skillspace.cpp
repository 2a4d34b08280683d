#include "srtd/skillspace.hpp"

#include <cmath>
#include <stdexcept>

namespace srtd::skill {
namespace {

double kernel_sq_dist(const KernelSpec& spec, double sq) {
  switch (spec.family) {
    case KernelSpec::Family::kInverseMultiquadratic:
      return spec.scale / (spec.scale + sq);
    case KernelSpec::Family::kGaussianRbf:
      return std::exp(-sq / (2.0 * spec.scale));
  }
  return 0.0;
}

// d k / d x = coeff(sq) * (x - y)
double kernel_grad_coeff(const KernelSpec& spec, double sq) {
  switch (spec.family) {
    case KernelSpec::Family::kInverseMultiquadratic: {
      const double denom = spec.scale + sq;
      return -2.0 * spec.scale / (denom * denom);
    }
    case KernelSpec::Family::kGaussianRbf:
      return -kernel_sq_dist(spec, sq) / spec.scale;
  }
  return 0.0;
}

void check_batch_sizes(const Mat& encoded, const Mat& prior) {
  if (encoded.rows() != prior.rows())
    throw DimensionError("mmd: batch sizes differ");
  if (encoded.cols() != prior.cols())
    throw DimensionError("mmd: latent dimensions differ");
  if (encoded.rows() < 2)
    throw std::invalid_argument("mmd: need batch size >= 2");
}

}  // namespace

double kernel(const KernelSpec& spec, const Vec& x, const Vec& y) {
  return kernel_sq_dist(spec, (x - y).squaredNorm());
}

double mmd_penalty(const Mat& encoded, const Mat& prior,
                   const KernelSpec& spec) {
  check_batch_sizes(encoded, prior);
  const int m = static_cast<int>(encoded.rows());
  const double within_coeff = 1.0 / (static_cast<double>(m) * (m - 1));
  const double cross_coeff = 1.0 / (static_cast<double>(m) * m);

  double within_encoded = 0.0;
  double within_prior = 0.0;
  double cross = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) {
        within_encoded += kernel_sq_dist(
            spec, (encoded.row(i) - encoded.row(j)).squaredNorm());
        within_prior +=
            kernel_sq_dist(spec, (prior.row(i) - prior.row(j)).squaredNorm());
      }
      cross +=
          kernel_sq_dist(spec, (encoded.row(i) - prior.row(j)).squaredNorm());
    }
  }
  return within_coeff * within_encoded + within_coeff * within_prior -
         cross_coeff * cross;
}

void mmd_penalty_grad(const Mat& encoded, const Mat& prior,
                      const KernelSpec& spec, double weight,
                      Mat& grad_encoded) {
  check_batch_sizes(encoded, prior);
  if (grad_encoded.rows() != encoded.rows() ||
      grad_encoded.cols() != encoded.cols())
    throw DimensionError("mmd: gradient buffer shape mismatch");
  const int m = static_cast<int>(encoded.rows());
  const double within_coeff = 1.0 / (static_cast<double>(m) * (m - 1));
  const double cross_coeff = 1.0 / (static_cast<double>(m) * m);

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) {
        // both (i, j) and (j, i) terms contribute to row i
        const auto diff = encoded.row(i) - encoded.row(j);
        const double c = kernel_grad_coeff(spec, diff.squaredNorm());
        grad_encoded.row(i) += weight * within_coeff * 2.0 * c * diff;
      }
      const auto cross_diff = encoded.row(i) - prior.row(j);
      const double c = kernel_grad_coeff(spec, cross_diff.squaredNorm());
      grad_encoded.row(i) -= weight * cross_coeff * c * cross_diff;
    }
  }
}

Mat sample_prior(int m, int dim, Rng& rng) {
  Mat samples(m, dim);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < dim; ++j) samples(i, j) = rng.normal();
  return samples;
}

SkillModel SkillModel::make(int obs_dim, int act_dim, int half_width, int dim_z,
                            int hidden, Rng& rng) {
  const int window_dim = 2 * half_width * (obs_dim + act_dim);
  SkillModel model{
      fa::ParamMap::glorot({window_dim, hidden, hidden, dim_z},
                           fa::Activation::kTanh,
                           fa::OutputActivation::kIdentity, rng),
      fa::ParamMap::glorot({obs_dim + dim_z, hidden, hidden, act_dim},
                           fa::Activation::kTanh, fa::OutputActivation::kTanh,
                           rng),
      dim_z, half_width,
      KernelSpec{KernelSpec::Family::kInverseMultiquadratic, 2.0 * dim_z}};
  return model;
}

Vec SkillModel::flat_params() const {
  Vec flat(param_count());
  flat.head(encoder.param_count()) = encoder.params();
  flat.tail(decoder.param_count()) = decoder.params();
  return flat;
}

void SkillModel::set_flat_params(const Vec& params) {
  if (params.size() != param_count())
    throw DimensionError("skill model: flat parameter length mismatch");
  encoder.set_params(params.head(encoder.param_count()));
  decoder.set_params(params.tail(decoder.param_count()));
}

Vec encode_skill(const fa::ParamMap& encoder, const data::WindowSample& window) {
  return encoder.forward(data::skill_window_flat(window));
}

Vec decode_action(const fa::ParamMap& decoder, const Vec& obs,
                  const Vec& embedding) {
  Vec input(obs.size() + embedding.size());
  input << obs, embedding;
  return decoder.forward(input);
}

namespace {

Mat stack_skill_inputs(const data::WindowBatch& batch) {
  const int m = batch.size();
  Mat inputs(m, 2 * batch.half_width * (batch.obs_dim + batch.act_dim));
  for (int i = 0; i < m; ++i)
    inputs.row(i) = data::skill_window_flat(batch.items[i]).transpose();
  return inputs;
}

struct SkillPass {
  SkillLossParts parts;
  Mat embeddings;
  fa::ParamMap::Trace encoder_trace;
};

// Shared forward (and optionally backward) pass. When grad is non-null it
// must be zero-initialized; decoder gradients are accumulated inside the
// per-step loop, encoder gradients at the end.
SkillPass run_skill_loss(const SkillModel& model,
                         const data::WindowBatch& batch, double lambda,
                         const Mat& prior_samples, Vec* grad) {
  const int m = batch.size();
  if (m < 2) throw std::invalid_argument("skill loss: need batch size >= 2");
  const int n = batch.half_width;
  const int dz = model.dim_z;
  if (prior_samples.rows() != m || prior_samples.cols() != dz)
    throw DimensionError("skill loss: prior batch shape mismatch");

  SkillPass pass;
  const Mat inputs = stack_skill_inputs(batch);
  pass.embeddings = model.encoder.forward_batch(inputs, pass.encoder_trace);

  Mat d_embeddings = Mat::Zero(m, dz);

  double recon = 0.0;
  Mat dec_input(m, batch.obs_dim + dz);
  Mat upstream(m, batch.act_dim);
  for (int j = 0; j < 2 * n; ++j) {
    for (int i = 0; i < m; ++i) {
      dec_input.row(i).head(batch.obs_dim) =
          batch.items[i].states[j].transpose();
      dec_input.row(i).tail(dz) = pass.embeddings.row(i);
    }
    fa::ParamMap::Trace dec_trace;
    const Mat predicted = model.decoder.forward_batch(dec_input, dec_trace);
    for (int i = 0; i < m; ++i) {
      const Vec error =
          batch.items[i].actions[j] - predicted.row(i).transpose();
      const double norm = error.norm();
      recon += norm;
      if (grad) {
        if (norm > 0.0)
          upstream.row(i) = (-1.0 / (m * norm)) * error.transpose();
        else
          upstream.row(i).setZero();
      }
    }
    if (grad) {
      const Mat d_input = model.decoder.backward(
          dec_trace, upstream, grad->tail(model.decoder.param_count()));
      d_embeddings += d_input.rightCols(dz);
    }
  }
  recon /= m;

  const double penalty = mmd_penalty(pass.embeddings, prior_samples, model.kernel);
  if (grad) {
    mmd_penalty_grad(pass.embeddings, prior_samples, model.kernel, lambda,
                     d_embeddings);
    model.encoder.backward(pass.encoder_trace, d_embeddings,
                           grad->head(model.encoder.param_count()));
  }

  pass.parts.reconstruction = recon;
  pass.parts.prior_penalty = penalty;
  pass.parts.total = recon + lambda * penalty;
  return pass;
}

}  // namespace

SkillLossParts skill_loss(const SkillModel& model,
                          const data::WindowBatch& batch, double lambda,
                          const Mat& prior_samples) {
  return run_skill_loss(model, batch, lambda, prior_samples, nullptr).parts;
}

SkillLossParts skill_loss(const SkillModel& model,
                          const data::WindowBatch& batch, double lambda,
                          Rng& prior_rng) {
  const Mat prior = sample_prior(batch.size(), model.dim_z, prior_rng);
  return skill_loss(model, batch, lambda, prior);
}

SkillLossParts skill_loss_grad(const SkillModel& model,
                               const data::WindowBatch& batch, double lambda,
                               const Mat& prior_samples, Eigen::Ref<Vec> grad) {
  if (grad.size() != model.param_count())
    throw DimensionError("skill loss: gradient buffer length mismatch");
  Vec buffer = Vec::Zero(model.param_count());
  const SkillPass pass =
      run_skill_loss(model, batch, lambda, prior_samples, &buffer);
  grad = buffer;
  return pass.parts;
}

namespace {

class SkillObjective : public fa::DiffLoss {
 public:
  SkillObjective(SkillModel model, data::WindowBatch batch, double lambda,
                 Mat prior)
      : model_(std::move(model)),
        batch_(std::move(batch)),
        lambda_(lambda),
        prior_(std::move(prior)) {}

  double value(const Vec& params) const override {
    model_.set_flat_params(params);
    return skill_loss(model_, batch_, lambda_, prior_).total;
  }

  double value_and_grad(const Vec& params, Vec& grad) const override {
    model_.set_flat_params(params);
    grad = Vec::Zero(model_.param_count());
    return skill_loss_grad(model_, batch_, lambda_, prior_, grad).total;
  }

 private:
  mutable SkillModel model_;
  data::WindowBatch batch_;
  double lambda_;
  Mat prior_;
};

}  // namespace

std::unique_ptr<fa::DiffLoss> make_skill_objective(SkillModel model,
                                                   data::WindowBatch batch,
                                                   double lambda,
                                                   Mat prior_samples) {
  return std::make_unique<SkillObjective>(std::move(model), std::move(batch),
                                          lambda, std::move(prior_samples));
}

}  // namespace srtd::skill
