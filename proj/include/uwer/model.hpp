#pragma once

// Stacked LSTM predictor with a linear output head, exact BPTT, inverted
// dropout and Monte-Carlo dropout inference.
//
// Batches are column-major: every column is one (sample, dropout pass)
// pair, and a sequence of T steps over B columns is stored as T consecutive
// blocks of B columns (column t*B + b).

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uwer/mathcore.hpp"

namespace uwer::model {

using Matrix = Eigen::MatrixXd;
using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

enum class Gate { Input = 0, Forget = 1, Output = 2, Cell = 3 };

/// Pre-activations are clamped to this range before sigmoid/tanh.
inline constexpr double kPreActivationClamp = 60.0;

struct ModelDims {
  int n_layers = 3;
  int hidden = 64;
  int in_dim = 576;
  int out_dim = 576;

  int layer_input(int layer) const { return layer == 0 ? in_dim : hidden; }
  bool operator==(const ModelDims&) const = default;
};

/// Offsets into the flat parameter vector. Declared order, per layer:
/// W_i, W_f, W_o, W_c (each hidden x (hidden + layer_input), row-major over
/// the concatenation [h_{t-1}, x_t]), then b_i, b_f, b_o, b_c; finally the
/// head W_y (out x hidden, row-major) and b_y. The four gate matrices are
/// contiguous, so they also read as one stacked 4H x (H + in) matrix.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelDims& dims);

  std::size_t weights(int layer) const { return layer_w_[layer]; }
  std::size_t biases(int layer) const { return layer_b_[layer]; }
  std::size_t head_weights() const { return head_w_; }
  std::size_t head_bias() const { return head_b_; }
  std::size_t size() const { return total_; }

 private:
  std::vector<std::size_t> layer_w_;
  std::vector<std::size_t> layer_b_;
  std::size_t head_w_ = 0;
  std::size_t head_b_ = 0;
  std::size_t total_ = 0;
};

// Aligned so vectorized products see the same data alignment on every run;
// with plain malloc the peeling and hence the rounding can differ.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

class LstmPredictor {
 public:
  LstmPredictor(const ModelDims& dims, double dropout_rate);

  /// Gate weights uniform in +-1/sqrt(hidden + layer_input), head weights in
  /// +-1/sqrt(hidden); forget-gate biases +1, all other biases 0.
  static LstmPredictor init_params(math::Rng& rng, const ModelDims& dims, double dropout_rate);

  const ModelDims& dims() const { return dims_; }
  const ParamLayout& layout() const { return layout_; }
  double dropout_rate() const { return dropout_rate_; }
  void set_dropout_rate(double rate);

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// Stacked gate weights of a layer, 4H x (H + in).
  RowMajorMap gate_weights(int layer);
  ConstRowMajorMap gate_weights(int layer) const;
  /// One gate's H x (H + in) block.
  ConstRowMajorMap gate_weight(int layer, Gate gate) const;
  ConstVectorMap gate_bias(int layer, Gate gate) const;
  ConstRowMajorMap head_weights() const;
  ConstVectorMap head_bias() const;

  std::uint64_t checksum() const;

 private:
  ModelDims dims_;
  ParamLayout layout_;
  double dropout_rate_;
  ParamVector params_;
};

/// Inverted-dropout masks (entries 0 or 1/(1-p)). inter[l] covers the output
/// of layer l fed to layer l+1 (H x T*B); head covers h_T of the top layer
/// (H x B). Empty when dropout is inactive.
struct DropoutMasks {
  std::vector<Matrix> inter;
  Matrix head;
  bool active() const { return head.size() != 0; }
};

/// Draws masks in storage order: layer, then column, then unit.
DropoutMasks draw_masks(const ModelDims& dims, int steps, int columns, double rate, math::Rng& rng);

struct LayerTape {
  Matrix input;   // layer_input x T*B, after dropout
  Matrix h;       // H x (T+1)*B, block 0 is h_0 = 0
  Matrix c;       // H x (T+1)*B, block 0 is c_0 = 0
  Matrix gates;   // 4H x T*B post-activation (i, f, o, c~)
  Matrix tanh_c;  // H x T*B
};

struct ForwardTape {
  int steps = 0;
  int columns = 0;
  std::vector<LayerTape> layers;
  DropoutMasks masks;
  Matrix head_input;  // H x B, h_T after dropout
  std::size_t clamp_count = 0;
};

struct ForwardResult {
  Matrix output;  // out_dim x B
  ForwardTape tape;
};

/// Packs windows ([T, in_dim] row-major each) into an in_dim x T*B input,
/// repeating every window `repeats` times (column b = window * repeats + r).
Matrix pack_windows(std::span<const std::span<const float>> windows, int steps, int in_dim, int repeats = 1);
void pack_windows_into(std::span<const std::span<const float>> windows, int steps, int in_dim, int repeats, Matrix& out);

/// Forward pass with explicit masks (empty masks = no dropout).
ForwardResult forward(const LstmPredictor& model, const Matrix& inputs, int steps, DropoutMasks masks);

/// Same, reusing the storage already held by `out` (avoids re-faulting the
/// tape pages on every call inside training loops).
void forward_into(const LstmPredictor& model, const Matrix& inputs, int steps, DropoutMasks masks, ForwardResult& out);

/// Forward pass on one window. With an rng, fresh masks are drawn; with none,
/// dropout is off.
ForwardResult forward(const LstmPredictor& model, std::span<const float> x_window, int steps, math::Rng* dropout_rng);

/// Scratch matrices for backward(); reuse across calls of the same shape.
struct BackwardWorkspace {
  Matrix dz;
  Matrix d_above;
  Matrix dh_next;
  Matrix dc_next;
  Matrix dh;
  Matrix dc;
};

/// Exact BPTT. d_output is out_dim x B; the returned gradient is summed over
/// the B columns.
ParamVector backward(const LstmPredictor& model, const ForwardTape& tape, const Matrix& d_output);
void backward_into(const LstmPredictor& model, const ForwardTape& tape, const Matrix& d_output, ParamVector& grads,
                   BackwardWorkspace& ws);

struct UncertaintyEstimate {
  std::vector<double> mean;
  std::vector<double> variance;  // population variance over passes
  double score = 0.0;            // mean of variance
  Matrix passes;                 // out_dim x K, one column per pass
};

/// Mean and population variance of each row over columns [first, first + k).
/// The mean is accumulated as x_0 + sum(x_j - x_0)/k so identical passes give
/// exactly zero variance.
void pass_statistics(const Matrix& outputs, Eigen::Index first, Eigen::Index k, Eigen::Ref<Eigen::VectorXd> mean,
                     Eigen::Ref<Eigen::VectorXd> variance);

UncertaintyEstimate mc_predict(const LstmPredictor& model, std::span<const float> x_window, int steps, math::Rng& rng,
                               int k_passes);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamVector m;
  ParamVector v;
  std::uint64_t step = 0;

  static AdamState zeros(std::size_t n) { return {ParamVector(n, 0.0), ParamVector(n, 0.0), 0}; }
};

/// Bias-corrected Adam. Throws std::domain_error (leaving model and state
/// untouched) if any gradient entry is non-finite.
void adam_step(LstmPredictor& model, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

// Checkpoint "UWERCK01": magic, u32 n_layers/hidden/in_dim/out_dim, f64
// dropout, u64 Adam step, then parameters, Adam m and Adam v as real32 in
// declared order.
void write_checkpoint(const std::filesystem::path& path, const LstmPredictor& model, const AdamState& adam);

struct Checkpoint {
  LstmPredictor model;
  AdamState adam;
};
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace uwer::model
