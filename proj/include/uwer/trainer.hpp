#pragma once

// Streaming continual training over the environment sequence: per-arrival
// MC-dropout scoring, replay buffer maintenance, convex mixing of current and
// replay gradients, and checkpointed evaluation after every environment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uwer/channel.hpp"
#include "uwer/metrics.hpp"
#include "uwer/model.hpp"
#include "uwer/replay.hpp"

namespace uwer::train {

enum class Policy { Uwer, UniformEr, LarsOnly, NoReplay };
std::string to_string(Policy policy);
/// Throws channel::ConfigError("policy", ...) on unknown names.
Policy parse_policy(std::string_view name);

/// Which MC passes carry gradient in an update.
enum class GradPasses { All, First };

struct TrainConfig {
  double lambda = 0.5;
  double alpha = 3.0;
  double gamma = 10.0;
  double beta = 1.0;
  int capacity = 3000;
  int k_passes = 8;
  int batch = 64;
  double lr = 1e-3;
  int epochs_per_task = 10;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  Policy policy = Policy::Uwer;

  int n_layers = 3;
  int hidden = 64;
  double dropout = 0.2;
  GradPasses grad_passes = GradPasses::All;
  int refresh_every_n_updates = 0;  // re-score buffer entries every n updates, 0 = never
  double val_fraction = 0.1;

  /// Throws channel::ConfigError naming the offending field.
  void validate() const;
};

/// (lambda, alpha, gamma) after the policy overrides.
struct MixingParams {
  double lambda = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
};
MixingParams effective_params(const TrainConfig& cfg);

model::ModelDims model_dims(const TrainConfig& cfg, const channel::CsiDataset& dataset);

// Loss ----------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  std::vector<double> d_mu;
};

/// mean_e [ 0.5 exp(-beta s_e) (y_e - mu_e)^2 + 0.5 beta s_e ] with s = sigma2
/// held constant; d_mu_e = exp(-beta s_e) (mu_e - y_e) / E.
LossResult uw_loss(std::span<const double> mu, std::span<const double> sigma2, std::span<const double> y, double beta);

// Scoring and gradients -----------------------------------------------------

model::UncertaintyEstimate score_sample(const model::LstmPredictor& model, std::span<const float> x_window, int steps,
                                        math::Rng& rng, int k_passes);

/// K stochastic passes over a set of windows in one batched forward. Column
/// w*K + k of every matrix belongs to window w, pass k.
struct BatchScores {
  std::vector<std::size_t> windows;
  int passes = 0;
  model::Matrix inputs;
  model::ForwardResult forward;
  model::Matrix mean;      // out_dim x n
  model::Matrix variance;  // out_dim x n
  std::vector<double> scores;
};

/// Masks come from `rng` in one draw covering all n*K columns.
void score_batch(const model::LstmPredictor& model, const channel::CsiDataset& dataset,
                 std::span<const std::size_t> windows, int k_passes, math::Rng& rng, BatchScores& out);

struct BatchGradient {
  model::ParamVector grad;          // batch-mean gradient
  std::vector<double> sample_loss;  // per window
  double loss = 0.0;                // batch mean
  double grad_norm = 0.0;
};

struct GradientWorkspace {
  model::Matrix d_output;
  model::BackwardWorkspace backward;
  std::vector<double> d_mu;
};

/// Gradient of the batch-mean uncertainty-weighted loss through the MC mean.
/// With GradPasses::All every pass receives dL/dmu / K.
void batch_gradient(const model::LstmPredictor& model, const channel::CsiDataset& dataset, const BatchScores& scored,
                    double beta, GradPasses passes, BatchGradient& out, GradientWorkspace& ws);

struct StepMetrics {
  double loss_current = 0.0;
  double loss_replay = 0.0;
  double grad_norm_current = 0.0;
  double grad_norm_replay = 0.0;
  double grad_norm_total = 0.0;
  bool used_replay = false;
  bool skipped = false;
  std::string incident;
};

/// total = (1 - lambda) g_cur + lambda g_rep (g_cur alone when `replay` is
/// null), then one Adam step. A non-finite loss or gradient skips the step
/// and is reported through StepMetrics::incident.
StepMetrics mixed_update(model::LstmPredictor& model, model::AdamState& adam, const BatchGradient& current,
                         const BatchGradient* replay, double lambda, const model::AdamConfig& adam_cfg,
                         model::ParamVector& total);

// Evaluation ----------------------------------------------------------------

struct Evaluation {
  std::vector<std::size_t> windows;
  model::Matrix mean;  // out_dim x n, MC mean
  std::vector<double> uncertainty;
  std::vector<double> nmse;
  double nmse_pooled = 0.0;
  double nmse_mean = 0.0;
};

/// MC-mean predictions. Window w draws its masks from
/// Rng(derive(eval_seed, "window", w)), so results do not depend on chunking.
Evaluation evaluate_windows(const model::LstmPredictor& model, const channel::CsiDataset& dataset,
                            std::span<const std::size_t> windows, int k_passes, std::uint64_t eval_seed);

/// Persistence baseline: the prediction is the last input frame, with zero
/// uncertainty.
Evaluation evaluate_persistence(const channel::CsiDataset& dataset, std::span<const std::size_t> windows);

/// Pooled NMSE over several evaluations (sum of error energy over sum of
/// target energy).
double pooled_nmse(std::span<const Evaluation> evals, const channel::CsiDataset& dataset);

struct EnvSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
/// Time-ordered split: the last val_fraction of every environment's windows.
std::vector<EnvSplit> split_environments(const channel::CsiDataset& dataset, double val_fraction);

// Stream --------------------------------------------------------------------

/// A[k][s] = 1 - pooled NMSE on environment s after training on k.
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(int envs = 0) : n_(envs), a_(static_cast<std::size_t>(envs) * envs, 0.0) {}
  int size() const { return n_; }
  double& at(int k, int s) { return a_.at(static_cast<std::size_t>(k) * n_ + s); }
  double at(int k, int s) const { return a_.at(static_cast<std::size_t>(k) * n_ + s); }
  /// Entries above the diagonal evaluate environments not yet trained on.
  static bool is_forward(int k, int s) { return k < s; }

 private:
  int n_;
  std::vector<double> a_;
};

enum class ForgettingVariant { AsWritten, Standard };

/// as_written: mean over s < S-1 of max_{k<=s} A[k][s] - A[s][s].
/// standard:   mean over s < S-1 of max_k A[k][s] - A[S-1][s].
double forgetting(const AccuracyMatrix& a, ForgettingVariant variant);

struct EpochStat {
  int env = 0;
  int epoch = 0;
  double mean_loss = 0.0;  // mean per-arrival loss
  std::size_t updates = 0;
};

struct Incident {
  std::int64_t update = 0;
  int env = 0;
  std::string what;
};

struct RunHooks {
  std::function<void(int env, const model::LstmPredictor&, const model::AdamState&)> on_env_end;
  std::function<void(std::int64_t update, const model::LstmPredictor&)> on_update;
};

struct RunReport {
  std::uint64_t seed = 0;
  MixingParams mixing;
  AccuracyMatrix accuracy;
  std::vector<metrics::SampleRecord> records;
  std::vector<EpochStat> epochs;
  std::vector<Incident> incidents;
  std::size_t updates = 0;
  std::size_t skipped_updates = 0;
  std::size_t clamp_events = 0;
  std::vector<std::uint64_t> env_checksums;  // parameter checksum after each environment
  std::vector<Evaluation> final_eval;        // per environment, after the last one
  std::optional<model::LstmPredictor> final_model;
  model::AdamState final_adam;
  replay::BufferStats buffer;
};

/// Derived sub-seeds used by run_stream for master seed `seed`.
struct RunSeeds {
  std::uint64_t init, dropout_current, dropout_replay, buffer, replay, eval, refresh;
  static RunSeeds from(std::uint64_t seed);
};

RunReport run_stream(const channel::CsiDataset& dataset, const TrainConfig& cfg, std::uint64_t seed,
                     const RunHooks& hooks = {});

/// Headline numbers of one run, over the validation windows of every
/// environment after the last one.
struct RunSummary {
  double nmse_pooled = 0.0;
  double nmse_mean = 0.0;
  double nmse_db_pooled = 0.0;
  double nmse_db_median = 0.0;
  double persistence_nmse_pooled = 0.0;
  double forgetting_standard = 0.0;
  double forgetting_as_written = 0.0;
  std::optional<double> pearson_r;  // empty when undefined
};
RunSummary summarize(const RunReport& report, const channel::CsiDataset& dataset);

/// accuracy_matrix.csv, per_sample.csv and incidents.log inside `dir`.
void write_run_report(const std::filesystem::path& dir, const RunReport& report);

}  // namespace uwer::train
