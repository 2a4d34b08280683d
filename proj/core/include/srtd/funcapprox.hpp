#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "srtd/common.hpp"

namespace srtd::fa {

enum class Activation : std::uint8_t { kTanh = 0, kRelu = 1 };
enum class OutputActivation : std::uint8_t { kIdentity = 0, kTanh = 1 };

/// Fully-connected map with all weights and biases in one flat vector.
///
/// Layout per layer l: weight matrix W_l (out x in, column-major) followed by
/// bias b_l (out). Total parameter count is sum over layers of (in+1)*out.
/// Forward evaluation is a pure function of (params, input).
class ParamMap {
 public:
  ParamMap(std::vector<int> layer_sizes, std::vector<Activation> hidden_acts,
           OutputActivation out_act);

  /// Same hidden activation for every hidden layer.
  ParamMap(std::vector<int> layer_sizes, Activation hidden,
           OutputActivation out_act);

  /// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
  static ParamMap glorot(std::vector<int> layer_sizes, Activation hidden,
                         OutputActivation out_act, Rng& rng);

  int input_dim() const { return layer_sizes_.front(); }
  int output_dim() const { return layer_sizes_.back(); }
  int param_count() const { return static_cast<int>(params_.size()); }
  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  const std::vector<Activation>& hidden_activations() const {
    return hidden_acts_;
  }
  OutputActivation output_activation() const { return out_act_; }

  const Vec& params() const { return params_; }
  Vec& params() { return params_; }
  void set_params(const Vec& p);

  Vec forward(const Vec& input) const;

  /// Batched forward; inputs and result have one sample per row.
  Mat forward_batch(const Mat& inputs) const;

  /// Cached intermediate values of one batched forward pass.
  struct Trace {
    Mat input;
    std::vector<Mat> pre;   // pre-activation per layer
    std::vector<Mat> post;  // post-activation per layer; back() is the output
  };

  Mat forward_batch(const Mat& inputs, Trace& trace) const;

  /// Backpropagates upstream = dL/d(output) through the traced pass.
  /// Accumulates dL/d(params) into param_grad (must be param_count long,
  /// pre-initialized) and returns dL/d(input).
  Mat backward(const Trace& trace, const Mat& upstream,
               Eigen::Ref<Vec> param_grad) const;

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static ParamMap load(std::istream& in);
  static ParamMap load_file(const std::string& path);

 private:
  std::vector<int> layer_sizes_;
  std::vector<Activation> hidden_acts_;
  OutputActivation out_act_;
  std::vector<int> offsets_;  // flat offset of each layer's weight block
  Vec params_;

  int layer_count() const { return static_cast<int>(layer_sizes_.size()) - 1; }
  Eigen::Map<const Mat> weight(int layer) const;
  Eigen::Map<const Vec> bias(int layer) const;
};

/// Scalar loss of a flat parameter vector with an analytic gradient.
class DiffLoss {
 public:
  virtual ~DiffLoss() = default;
  virtual double value(const Vec& params) const = 0;
  /// Returns the loss and writes dL/dparams into grad (resized as needed).
  virtual double value_and_grad(const Vec& params, Vec& grad) const = 0;
};

/// Analytic gradient of a loss at params. Throws NumericError if the loss is
/// not finite there.
Vec grad(const DiffLoss& loss, const Vec& params);

/// Adam moment estimates. Moment vectors are zero while step_count == 0.
struct OptState {
  std::int64_t step_count = 0;
  Vec first_moment;
  Vec second_moment;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit OptState(int param_count, double lr = 3e-4)
      : first_moment(Vec::Zero(param_count)),
        second_moment(Vec::Zero(param_count)),
        learning_rate(lr) {}
};

/// One descent step; params move opposite the bias-corrected first moment.
void opt_step(OptState& state, Eigen::Ref<Vec> params, const Vec& grads);

}  // namespace srtd::fa
