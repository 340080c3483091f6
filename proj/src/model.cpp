#include "uwer/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uwer::model {

ParamLayout::ParamLayout(const ModelDims& dims) {
  if (dims.n_layers < 1 || dims.hidden < 1 || dims.in_dim < 1 || dims.out_dim < 1)
    throw std::invalid_argument("ModelDims: every dimension must be >= 1");
  const auto h = static_cast<std::size_t>(dims.hidden);
  std::size_t offset = 0;
  for (int l = 0; l < dims.n_layers; ++l) {
    layer_w_.push_back(offset);
    offset += 4 * h * (h + static_cast<std::size_t>(dims.layer_input(l)));
    layer_b_.push_back(offset);
    offset += 4 * h;
  }
  head_w_ = offset;
  offset += static_cast<std::size_t>(dims.out_dim) * h;
  head_b_ = offset;
  offset += static_cast<std::size_t>(dims.out_dim);
  total_ = offset;
}

LstmPredictor::LstmPredictor(const ModelDims& dims, double dropout_rate)
    : dims_(dims), layout_(dims), dropout_rate_(0.0), params_(layout_.size(), 0.0) {
  set_dropout_rate(dropout_rate);
}

void LstmPredictor::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout_rate must be in [0, 1)");
  dropout_rate_ = rate;
}

LstmPredictor LstmPredictor::init_params(math::Rng& rng, const ModelDims& dims, double dropout_rate) {
  LstmPredictor model(dims, dropout_rate);
  const int h = dims.hidden;
  for (int l = 0; l < dims.n_layers; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(h + dims.layer_input(l)));
    auto w = model.gate_weights(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    double* b = model.params_.data() + model.layout_.biases(l);
    for (int j = 0; j < h; ++j) b[static_cast<int>(Gate::Forget) * h + j] = 1.0;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  double* wy = model.params_.data() + model.layout_.head_weights();
  for (std::size_t i = 0; i < static_cast<std::size_t>(dims.out_dim) * h; ++i) wy[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return model;
}

RowMajorMap LstmPredictor::gate_weights(int layer) {
  return {params_.data() + layout_.weights(layer), 4 * dims_.hidden, dims_.hidden + dims_.layer_input(layer)};
}

ConstRowMajorMap LstmPredictor::gate_weights(int layer) const {
  return {params_.data() + layout_.weights(layer), 4 * dims_.hidden, dims_.hidden + dims_.layer_input(layer)};
}

ConstRowMajorMap LstmPredictor::gate_weight(int layer, Gate gate) const {
  const int cols = dims_.hidden + dims_.layer_input(layer);
  return {params_.data() + layout_.weights(layer) + static_cast<std::size_t>(gate) * dims_.hidden * cols,
          dims_.hidden, cols};
}

ConstVectorMap LstmPredictor::gate_bias(int layer, Gate gate) const {
  return {params_.data() + layout_.biases(layer) + static_cast<std::size_t>(gate) * dims_.hidden, dims_.hidden};
}

ConstRowMajorMap LstmPredictor::head_weights() const {
  return {params_.data() + layout_.head_weights(), dims_.out_dim, dims_.hidden};
}

ConstVectorMap LstmPredictor::head_bias() const {
  return {params_.data() + layout_.head_bias(), dims_.out_dim};
}

std::uint64_t LstmPredictor::checksum() const {
  return math::fnv1a64(std::as_bytes(std::span(params_)));
}

// ---------------------------------------------------------------------------

DropoutMasks draw_masks(const ModelDims& dims, int steps, int columns, double rate, math::Rng& rng) {
  DropoutMasks masks;
  if (rate <= 0.0) return masks;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto fill = [&](Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  };
  for (int l = 0; l + 1 < dims.n_layers; ++l) {
    masks.inter.emplace_back(dims.hidden, static_cast<Eigen::Index>(steps) * columns);
    fill(masks.inter.back());
  }
  masks.head.resize(dims.hidden, columns);
  fill(masks.head);
  return masks;
}

Matrix pack_windows(std::span<const std::span<const float>> windows, int steps, int in_dim, int repeats) {
  Matrix out;
  pack_windows_into(windows, steps, in_dim, repeats, out);
  return out;
}

void pack_windows_into(std::span<const std::span<const float>> windows, int steps, int in_dim, int repeats, Matrix& out) {
  if (repeats < 1) throw std::invalid_argument("pack_windows: repeats must be >= 1");
  const auto n = static_cast<Eigen::Index>(windows.size());
  const Eigen::Index cols = n * repeats;
  out.resize(in_dim, static_cast<Eigen::Index>(steps) * cols);
  for (Eigen::Index w = 0; w < n; ++w) {
    const auto& win = windows[static_cast<std::size_t>(w)];
    if (win.size() != static_cast<std::size_t>(steps) * static_cast<std::size_t>(in_dim))
      throw std::invalid_argument("pack_windows: window has " + std::to_string(win.size()) + " values, expected " +
                                  std::to_string(steps * in_dim));
    for (int t = 0; t < steps; ++t) {
      const float* src = win.data() + static_cast<std::size_t>(t) * in_dim;
      for (int r = 0; r < repeats; ++r) {
        double* dst = out.col(t * cols + w * repeats + r).data();
        for (int i = 0; i < in_dim; ++i) dst[i] = src[i];
      }
    }
  }
}

namespace {

std::size_t clamp_preactivations(Eigen::Ref<Matrix> z) {
  const auto count = static_cast<std::size_t>((z.array().abs() > kPreActivationClamp).count());
  if (count > 0) z = z.cwiseMin(kPreActivationClamp).cwiseMax(-kPreActivationClamp);
  return count;
}

// tanh(x) = 1 - 2 / (1 + e^{2x}); Eigen's exp is vectorized for double while
// its tanh is not. Saturates to +-1 when the exponential over/underflows.
template <typename Derived>
auto tanh_via_exp(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / (1.0 + (2.0 * x).exp());
}

}  // namespace

ForwardResult forward(const LstmPredictor& model, const Matrix& inputs, int steps, DropoutMasks masks) {
  ForwardResult result;
  forward_into(model, inputs, steps, std::move(masks), result);
  return result;
}

void forward_into(const LstmPredictor& model, const Matrix& inputs, int steps, DropoutMasks masks, ForwardResult& result) {
  const ModelDims& d = model.dims();
  const int h = d.hidden;
  if (steps < 1 || inputs.cols() % steps != 0) throw std::invalid_argument("forward: input columns not a multiple of steps");
  if (inputs.rows() != d.in_dim)
    throw std::invalid_argument("forward: input dim " + std::to_string(inputs.rows()) + " != model in_dim " +
                                std::to_string(d.in_dim));
  const Eigen::Index b = inputs.cols() / steps;
  const Eigen::Index tb = inputs.cols();
  if (masks.active()) {
    if (masks.head.rows() != h || masks.head.cols() != b || static_cast<int>(masks.inter.size()) != d.n_layers - 1)
      throw std::invalid_argument("forward: dropout masks do not match model/batch");
    for (const auto& m : masks.inter)
      if (m.rows() != h || m.cols() != tb) throw std::invalid_argument("forward: dropout masks do not match model/batch");
  }

  ForwardTape& tape = result.tape;
  tape.steps = steps;
  tape.clamp_count = 0;
  tape.columns = static_cast<int>(b);
  tape.layers.resize(static_cast<std::size_t>(d.n_layers));

  for (int l = 0; l < d.n_layers; ++l) {
    LayerTape& lt = tape.layers[static_cast<std::size_t>(l)];
    if (l == 0) {
      lt.input = inputs;
    } else {
      const LayerTape& below = tape.layers[static_cast<std::size_t>(l - 1)];
      lt.input = below.h.rightCols(tb);
      if (masks.active()) lt.input.array() *= masks.inter[static_cast<std::size_t>(l - 1)].array();
    }
    const auto w = model.gate_weights(l);
    const auto w_h = w.leftCols(h);
    const auto w_x = w.rightCols(d.layer_input(l));
    const ConstVectorMap bias(model.params().data() + model.layout().biases(l), 4 * h);

    lt.gates.resize(4 * h, tb);
    lt.gates.noalias() = w_x * lt.input;
    lt.gates.colwise() += bias;
    lt.h.setZero(h, tb + b);
    lt.c.setZero(h, tb + b);
    lt.tanh_c.resize(h, tb);

    for (int t = 0; t < steps; ++t) {
      auto z = lt.gates.middleCols(t * b, b);
      z.noalias() += w_h * lt.h.middleCols(t * b, b);
      tape.clamp_count += clamp_preactivations(z);
      z.topRows(3 * h).array() = (1.0 + (-z.topRows(3 * h).array()).exp()).inverse();
      z.bottomRows(h).array() = tanh_via_exp(z.bottomRows(h).array());

      auto c_prev = lt.c.middleCols(t * b, b);
      auto c_next = lt.c.middleCols((t + 1) * b, b);
      c_next = z.middleRows(h, h).cwiseProduct(c_prev) + z.topRows(h).cwiseProduct(z.bottomRows(h));
      auto tc = lt.tanh_c.middleCols(t * b, b);
      tc.array() = tanh_via_exp(c_next.array());
      lt.h.middleCols((t + 1) * b, b) = z.middleRows(2 * h, h).cwiseProduct(tc);
    }
  }

  tape.head_input = tape.layers.back().h.rightCols(b);
  if (masks.active()) tape.head_input.array() *= masks.head.array();
  result.output.resize(d.out_dim, b);
  result.output.noalias() = model.head_weights() * tape.head_input;
  result.output.colwise() += model.head_bias();
  tape.masks = std::move(masks);
}

ForwardResult forward(const LstmPredictor& model, std::span<const float> x_window, int steps, math::Rng* dropout_rng) {
  const std::span<const float> windows[] = {x_window};
  Matrix inputs = pack_windows(windows, steps, model.dims().in_dim);
  DropoutMasks masks;
  if (dropout_rng) masks = draw_masks(model.dims(), steps, 1, model.dropout_rate(), *dropout_rng);
  return forward(model, inputs, steps, std::move(masks));
}

ParamVector backward(const LstmPredictor& model, const ForwardTape& tape, const Matrix& d_output) {
  ParamVector grads;
  BackwardWorkspace ws;
  backward_into(model, tape, d_output, grads, ws);
  return grads;
}

void backward_into(const LstmPredictor& model, const ForwardTape& tape, const Matrix& d_output, ParamVector& grads,
                   BackwardWorkspace& ws) {
  const ModelDims& d = model.dims();
  const int h = d.hidden;
  const Eigen::Index b = tape.columns;
  const Eigen::Index tb = static_cast<Eigen::Index>(tape.steps) * b;
  if (static_cast<int>(tape.layers.size()) != d.n_layers || d_output.rows() != d.out_dim || d_output.cols() != b ||
      tape.head_input.rows() != h)
    throw std::invalid_argument("backward: tape does not match model or output gradient");

  grads.assign(model.layout().size(), 0.0);
  RowMajorMap d_wy(grads.data() + model.layout().head_weights(), d.out_dim, h);
  VectorMap d_by(grads.data() + model.layout().head_bias(), d.out_dim);
  d_wy.noalias() = d_output * tape.head_input.transpose();
  d_by = d_output.rowwise().sum();

  Matrix& d_above = ws.d_above;
  d_above.setZero(h, tb);
  {
    auto last = d_above.rightCols(b);
    last.noalias() = model.head_weights().transpose() * d_output;
    if (tape.masks.active()) last.array() *= tape.masks.head.array();
  }

  Matrix& dz = ws.dz;
  Matrix& dh_next = ws.dh_next;
  Matrix& dc_next = ws.dc_next;
  Matrix& dh = ws.dh;
  Matrix& dc = ws.dc;
  dz.resize(4 * h, tb);
  dh_next.resize(h, b);
  dc_next.resize(h, b);
  dh.resize(h, b);
  dc.resize(h, b);
  for (int l = d.n_layers - 1; l >= 0; --l) {
    const LayerTape& lt = tape.layers[static_cast<std::size_t>(l)];
    const auto w = model.gate_weights(l);
    const auto w_h = w.leftCols(h);
    dh_next.setZero();
    dc_next.setZero();
    for (int t = tape.steps - 1; t >= 0; --t) {
      const auto g = lt.gates.middleCols(t * b, b);
      const auto gi = g.topRows(h).array();
      const auto gf = g.middleRows(h, h).array();
      const auto go = g.middleRows(2 * h, h).array();
      const auto gc = g.bottomRows(h).array();
      const auto tc = lt.tanh_c.middleCols(t * b, b).array();
      const auto c_prev = lt.c.middleCols(t * b, b).array();

      dh = d_above.middleCols(t * b, b) + dh_next;
      dc.array() = dh.array() * go * (1.0 - tc.square()) + dc_next.array();

      auto z = dz.middleCols(t * b, b);
      z.topRows(h).array() = dc.array() * gc * gi * (1.0 - gi);
      z.middleRows(h, h).array() = dc.array() * c_prev * gf * (1.0 - gf);
      z.middleRows(2 * h, h).array() = dh.array() * tc * go * (1.0 - go);
      z.bottomRows(h).array() = dc.array() * gi * (1.0 - gc.square());

      dc_next.array() = dc.array() * gf;
      dh_next.noalias() = w_h.transpose() * z;
    }
    RowMajorMap d_w(grads.data() + model.layout().weights(l), 4 * h, h + d.layer_input(l));
    VectorMap d_b(grads.data() + model.layout().biases(l), 4 * h);
    d_w.leftCols(h).noalias() = dz * lt.h.leftCols(tb).transpose();
    d_w.rightCols(d.layer_input(l)).noalias() = dz * lt.input.transpose();
    d_b = dz.rowwise().sum();

    if (l > 0) {
      d_above.noalias() = w.rightCols(d.layer_input(l)).transpose() * dz;
      if (tape.masks.active()) d_above.array() *= tape.masks.inter[static_cast<std::size_t>(l - 1)].array();
    }
  }
}

// ---------------------------------------------------------------------------

void pass_statistics(const Matrix& outputs, Eigen::Index first, Eigen::Index k, Eigen::Ref<Eigen::VectorXd> mean,
                     Eigen::Ref<Eigen::VectorXd> variance) {
  const auto passes = outputs.middleCols(first, k);
  const auto base = passes.col(0);
  mean = base + (passes.colwise() - base).rowwise().sum() / static_cast<double>(k);
  variance = (passes.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(k);
}

UncertaintyEstimate mc_predict(const LstmPredictor& model, std::span<const float> x_window, int steps, math::Rng& rng,
                               int k_passes) {
  if (k_passes < 1) throw std::invalid_argument("mc_predict: k_passes must be >= 1");
  const std::span<const float> windows[] = {x_window};
  Matrix inputs = pack_windows(windows, steps, model.dims().in_dim, k_passes);
  DropoutMasks masks = draw_masks(model.dims(), steps, k_passes, model.dropout_rate(), rng);
  ForwardResult fwd = forward(model, inputs, steps, std::move(masks));

  UncertaintyEstimate est;
  Eigen::VectorXd mean(model.dims().out_dim);
  Eigen::VectorXd var(model.dims().out_dim);
  pass_statistics(fwd.output, 0, k_passes, mean, var);
  est.mean.assign(mean.data(), mean.data() + mean.size());
  est.variance.assign(var.data(), var.data() + var.size());
  est.score = var.mean();
  est.passes = std::move(fwd.output);
  return est;
}

// ---------------------------------------------------------------------------

void adam_step(LstmPredictor& model, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  auto params = model.params();
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: gradient/state size does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i])) throw std::domain_error("adam_step: non-finite gradient at index " + std::to_string(i));

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace uwer::model
