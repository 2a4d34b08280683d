#include "srtd/funcapprox.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace srtd::fa {
namespace {

constexpr char kMagic[8] = {'S', 'R', 'T', 'D', 'P', 'M', '1', '\n'};
constexpr std::uint8_t kDtypeF64 = 0;

void apply_hidden(Activation act, const Mat& pre, Mat& post) {
  switch (act) {
    case Activation::kTanh:
      post = pre.array().tanh();
      break;
    case Activation::kRelu:
      post = pre.array().max(0.0);
      break;
  }
}

// Derivative expressed through cached values; relu uses pre, tanh uses post.
Mat hidden_derivative(Activation act, const Mat& pre, const Mat& post) {
  switch (act) {
    case Activation::kTanh:
      return 1.0 - post.array().square();
    case Activation::kRelu:
      return (pre.array() > 0.0).cast<double>();
  }
  return Mat();
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("param map: truncated stream");
  return v;
}

}  // namespace

ParamMap::ParamMap(std::vector<int> layer_sizes,
                   std::vector<Activation> hidden_acts, OutputActivation out_act)
    : layer_sizes_(std::move(layer_sizes)),
      hidden_acts_(std::move(hidden_acts)),
      out_act_(out_act) {
  if (layer_sizes_.size() < 2)
    throw DimensionError("param map: need at least input and output layer");
  for (int s : layer_sizes_)
    if (s <= 0) throw DimensionError("param map: layer sizes must be positive");
  if (hidden_acts_.size() != layer_sizes_.size() - 2)
    throw DimensionError("param map: one activation per hidden layer expected");

  int total = 0;
  offsets_.resize(layer_count());
  for (int l = 0; l < layer_count(); ++l) {
    offsets_[l] = total;
    total += (layer_sizes_[l] + 1) * layer_sizes_[l + 1];
  }
  params_ = Vec::Zero(total);
}

ParamMap::ParamMap(std::vector<int> layer_sizes, Activation hidden,
                   OutputActivation out_act)
    : ParamMap(layer_sizes,
               std::vector<Activation>(
                   layer_sizes.size() >= 2 ? layer_sizes.size() - 2 : 0, hidden),
               out_act) {}

ParamMap ParamMap::glorot(std::vector<int> layer_sizes, Activation hidden,
                          OutputActivation out_act, Rng& rng) {
  ParamMap map(std::move(layer_sizes), hidden, out_act);
  for (int l = 0; l < map.layer_count(); ++l) {
    const int in = map.layer_sizes_[l];
    const int out = map.layer_sizes_[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    double* w = map.params_.data() + map.offsets_[l];
    for (int i = 0; i < in * out; ++i) w[i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return map;
}

void ParamMap::set_params(const Vec& p) {
  if (p.size() != params_.size())
    throw DimensionError("param map: parameter vector length mismatch");
  params_ = p;
}

Eigen::Map<const Mat> ParamMap::weight(int layer) const {
  return Eigen::Map<const Mat>(params_.data() + offsets_[layer],
                               layer_sizes_[layer + 1], layer_sizes_[layer]);
}

Eigen::Map<const Vec> ParamMap::bias(int layer) const {
  const int in = layer_sizes_[layer];
  const int out = layer_sizes_[layer + 1];
  return Eigen::Map<const Vec>(params_.data() + offsets_[layer] + in * out, out);
}

Vec ParamMap::forward(const Vec& input) const {
  if (input.size() != input_dim()) {
    std::ostringstream msg;
    msg << "param map: input length " << input.size() << ", expected "
        << input_dim();
    throw DimensionError(msg.str());
  }
  Mat row = input.transpose();
  return forward_batch(row).row(0).transpose();
}

Mat ParamMap::forward_batch(const Mat& inputs) const {
  Trace trace;
  return forward_batch(inputs, trace);
}

Mat ParamMap::forward_batch(const Mat& inputs, Trace& trace) const {
  if (inputs.cols() != input_dim()) {
    std::ostringstream msg;
    msg << "param map: input width " << inputs.cols() << ", expected "
        << input_dim();
    throw DimensionError(msg.str());
  }
  const int depth = layer_count();
  trace.input = inputs;
  trace.pre.assign(depth, Mat());
  trace.post.assign(depth, Mat());

  const Mat* current = &trace.input;
  for (int l = 0; l < depth; ++l) {
    trace.pre[l].noalias() = *current * weight(l).transpose();
    trace.pre[l].rowwise() += bias(l).transpose();
    if (l + 1 < depth) {
      apply_hidden(hidden_acts_[l], trace.pre[l], trace.post[l]);
    } else {
      switch (out_act_) {
        case OutputActivation::kIdentity:
          trace.post[l] = trace.pre[l];
          break;
        case OutputActivation::kTanh:
          trace.post[l] = trace.pre[l].array().tanh();
          break;
      }
    }
    current = &trace.post[l];
  }
  return trace.post.back();
}

Mat ParamMap::backward(const Trace& trace, const Mat& upstream,
                       Eigen::Ref<Vec> param_grad) const {
  const int depth = layer_count();
  if (param_grad.size() != params_.size())
    throw DimensionError("param map: gradient buffer length mismatch");

  Mat delta;  // dL/d(pre-activation) of the current layer
  switch (out_act_) {
    case OutputActivation::kIdentity:
      delta = upstream;
      break;
    case OutputActivation::kTanh:
      delta = upstream.array() * (1.0 - trace.post[depth - 1].array().square());
      break;
  }

  for (int l = depth - 1; l >= 0; --l) {
    const Mat& layer_in = (l == 0) ? trace.input : trace.post[l - 1];
    const int in = layer_sizes_[l];
    const int out = layer_sizes_[l + 1];
    Eigen::Map<Mat> dw(param_grad.data() + offsets_[l], out, in);
    Eigen::Map<Vec> db(param_grad.data() + offsets_[l] + in * out, out);
    dw.noalias() += delta.transpose() * layer_in;
    db.noalias() += delta.colwise().sum().transpose();

    Mat dinput = delta * weight(l);
    if (l == 0) return dinput;
    delta = dinput.array() *
            hidden_derivative(hidden_acts_[l - 1], trace.pre[l - 1],
                              trace.post[l - 1])
                .array();
  }
  return Mat();  // unreachable
}

void ParamMap::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, static_cast<std::uint32_t>(layer_sizes_.size()));
  for (int s : layer_sizes_) write_pod(out, static_cast<std::int32_t>(s));
  write_pod(out, static_cast<std::uint32_t>(hidden_acts_.size()));
  for (Activation a : hidden_acts_)
    write_pod(out, static_cast<std::uint8_t>(a));
  write_pod(out, static_cast<std::uint8_t>(out_act_));
  write_pod(out, kDtypeF64);
  write_pod(out, static_cast<std::uint64_t>(params_.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
}

void ParamMap::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("param map: cannot open " + path);
  save(out);
}

ParamMap ParamMap::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("param map: bad header magic");
  const auto n_sizes = read_pod<std::uint32_t>(in);
  if (n_sizes < 2 || n_sizes > 64)
    throw FormatError("param map: implausible layer count");
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) s = read_pod<std::int32_t>(in);
  const auto n_acts = read_pod<std::uint32_t>(in);
  if (n_acts != n_sizes - 2)
    throw FormatError("param map: activation count mismatch");
  std::vector<Activation> acts(n_acts);
  for (auto& a : acts) a = static_cast<Activation>(read_pod<std::uint8_t>(in));
  const auto out_act = static_cast<OutputActivation>(read_pod<std::uint8_t>(in));
  const auto dtype = read_pod<std::uint8_t>(in);
  if (dtype != kDtypeF64) throw FormatError("param map: unsupported dtype tag");

  ParamMap map(std::move(sizes), std::move(acts), out_act);
  const auto count = read_pod<std::uint64_t>(in);
  if (count != static_cast<std::uint64_t>(map.param_count()))
    throw FormatError("param map: parameter count disagrees with layer sizes");
  in.read(reinterpret_cast<char*>(map.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw FormatError("param map: truncated parameter payload");
  return map;
}

ParamMap ParamMap::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("param map: cannot open " + path);
  return load(in);
}

Vec grad(const DiffLoss& loss, const Vec& params) {
  Vec g;
  const double value = loss.value_and_grad(params, g);
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "grad: loss is not finite (value = " << value << ")";
    throw NumericError(msg.str());
  }
  return g;
}

void opt_step(OptState& state, Eigen::Ref<Vec> params, const Vec& grads) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size())
    throw DimensionError("opt_step: length mismatch");
  state.step_count += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  state.first_moment = b1 * state.first_moment + (1.0 - b1) * grads;
  state.second_moment =
      (b2 * state.second_moment.array() + (1.0 - b2) * grads.array().square())
          .matrix();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

}  // namespace srtd::fa
