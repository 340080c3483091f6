#include "uwer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace uwer::train {

using channel::ConfigError;
using model::Matrix;

std::string to_string(Policy policy) {
  switch (policy) {
    case Policy::Uwer: return "uwer";
    case Policy::UniformEr: return "uniform_er";
    case Policy::LarsOnly: return "lars_only";
    case Policy::NoReplay: return "no_replay";
  }
  return "?";
}

Policy parse_policy(std::string_view name) {
  if (name == "uwer") return Policy::Uwer;
  if (name == "uniform_er") return Policy::UniformEr;
  if (name == "lars_only") return Policy::LarsOnly;
  if (name == "no_replay") return Policy::NoReplay;
  throw ConfigError("policy", "unknown policy '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda", "must lie in [0, 1]");
  if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("alpha", "must be finite and >= 0");
  if (!std::isfinite(gamma)) throw ConfigError("gamma", "must be finite");
  if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta", "must be finite and >= 0");
  if (capacity < 1) throw ConfigError("capacity", "must be >= 1");
  if (k_passes < 1) throw ConfigError("k_passes", "must be >= 1");
  if (batch < 1) throw ConfigError("batch", "must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be > 0");
  if (epochs_per_task < 1) throw ConfigError("epochs_per_task", "must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds", "must not be empty");
  if (n_layers < 1) throw ConfigError("n_layers", "must be >= 1");
  if (hidden < 1) throw ConfigError("hidden", "must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
  if (refresh_every_n_updates < 0) throw ConfigError("refresh_every_n_updates", "must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction", "must lie in (0, 1)");
}

MixingParams effective_params(const TrainConfig& cfg) {
  MixingParams p{cfg.lambda, cfg.alpha, cfg.gamma};
  switch (cfg.policy) {
    case Policy::Uwer: break;
    case Policy::UniformEr: p.alpha = 0.0; p.gamma = 0.0; break;
    case Policy::LarsOnly: p.alpha = 0.0; break;
    case Policy::NoReplay: p.lambda = 0.0; break;
  }
  return p;
}

model::ModelDims model_dims(const TrainConfig& cfg, const channel::CsiDataset& dataset) {
  const int f = static_cast<int>(dataset.frame_size());
  return {cfg.n_layers, cfg.hidden, f, f};
}

// Loss ----------------------------------------------------------------------

namespace {

template <typename Y>
double uw_loss_into(const double* mu, const double* sigma2, const Y* y, std::size_t n, double beta, double* d_mu) {
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t e = 0; e < n; ++e) {
    const double w = std::exp(-beta * sigma2[e]);
    const double r = mu[e] - static_cast<double>(y[e]);
    loss += 0.5 * w * r * r + 0.5 * beta * sigma2[e];
    d_mu[e] = w * r * inv_n;
  }
  return loss * inv_n;
}

}  // namespace

LossResult uw_loss(std::span<const double> mu, std::span<const double> sigma2, std::span<const double> y, double beta) {
  if (mu.size() != sigma2.size() || mu.size() != y.size()) throw std::invalid_argument("uw_loss: shape mismatch");
  if (mu.empty()) throw std::invalid_argument("uw_loss: empty input");
  for (double s : sigma2)
    if (!(s >= 0.0)) throw std::invalid_argument("uw_loss: negative sigma2");
  LossResult out;
  out.d_mu.resize(mu.size());
  out.loss = uw_loss_into(mu.data(), sigma2.data(), y.data(), mu.size(), beta, out.d_mu.data());
  return out;
}

// Scoring and gradients -----------------------------------------------------

model::UncertaintyEstimate score_sample(const model::LstmPredictor& model, std::span<const float> x_window, int steps,
                                        math::Rng& rng, int k_passes) {
  return model::mc_predict(model, x_window, steps, rng, k_passes);
}

namespace {

void pack(const channel::CsiDataset& dataset, std::span<const std::size_t> windows, int in_dim, int repeats,
          Matrix& out) {
  std::vector<std::span<const float>> views;
  views.reserve(windows.size());
  for (std::size_t w : windows) views.push_back(dataset.x(w));
  model::pack_windows_into(views, static_cast<int>(dataset.lookback()), in_dim, repeats, out);
}

void finish_scores(BatchScores& out) {
  const Eigen::Index n = static_cast<Eigen::Index>(out.windows.size());
  const Eigen::Index rows = out.forward.output.rows();
  out.mean.resize(rows, n);
  out.variance.resize(rows, n);
  out.scores.resize(out.windows.size());
  for (Eigen::Index w = 0; w < n; ++w) {
    model::pass_statistics(out.forward.output, w * out.passes, out.passes, out.mean.col(w), out.variance.col(w));
    out.scores[static_cast<std::size_t>(w)] = out.variance.col(w).mean();
  }
}

}  // namespace

void score_batch(const model::LstmPredictor& model, const channel::CsiDataset& dataset,
                 std::span<const std::size_t> windows, int k_passes, math::Rng& rng, BatchScores& out) {
  if (k_passes < 1) throw std::invalid_argument("score_batch: k_passes must be >= 1");
  if (windows.empty()) throw std::invalid_argument("score_batch: no windows");
  const int steps = static_cast<int>(dataset.lookback());
  out.windows.assign(windows.begin(), windows.end());
  out.passes = k_passes;
  pack(dataset, windows, model.dims().in_dim, k_passes, out.inputs);
  const int columns = static_cast<int>(windows.size()) * k_passes;
  model::forward_into(model, out.inputs, steps,
                      model::draw_masks(model.dims(), steps, columns, model.dropout_rate(), rng), out.forward);
  finish_scores(out);
}

void batch_gradient(const model::LstmPredictor& model, const channel::CsiDataset& dataset, const BatchScores& scored,
                    double beta, GradPasses passes, BatchGradient& out, GradientWorkspace& ws) {
  const auto n = scored.windows.size();
  const int k = scored.passes;
  const Eigen::Index rows = scored.mean.rows();
  ws.d_output.setZero(rows, static_cast<Eigen::Index>(n) * k);
  ws.d_mu.resize(static_cast<std::size_t>(rows));
  out.sample_loss.resize(n);

  const double inv_n = 1.0 / static_cast<double>(n);
  const double pass_scale = passes == GradPasses::All ? inv_n / k : inv_n;
  const int grad_passes = passes == GradPasses::All ? k : 1;
  double total = 0.0;
  for (std::size_t w = 0; w < n; ++w) {
    const auto col = static_cast<Eigen::Index>(w);
    const std::span<const float> y = dataset.y(scored.windows[w]);
    const double loss = uw_loss_into(scored.mean.col(col).data(), scored.variance.col(col).data(), y.data(),
                                     static_cast<std::size_t>(rows), beta, ws.d_mu.data());
    out.sample_loss[w] = loss;
    total += loss;
    const model::ConstVectorMap d_mu(ws.d_mu.data(), rows);
    for (int p = 0; p < grad_passes; ++p) ws.d_output.col(col * k + p) = d_mu * pass_scale;
  }
  out.loss = total * inv_n;
  model::backward_into(model, scored.forward.tape, ws.d_output, out.grad, ws.backward);
  double sq = 0.0;
  for (double g : out.grad) sq += g * g;
  out.grad_norm = std::sqrt(sq);
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

StepMetrics mixed_update(model::LstmPredictor& model, model::AdamState& adam, const BatchGradient& current,
                         const BatchGradient* replay, double lambda, const model::AdamConfig& adam_cfg,
                         model::ParamVector& total) {
  StepMetrics m;
  m.loss_current = current.loss;
  m.grad_norm_current = current.grad_norm;
  m.used_replay = replay != nullptr && lambda > 0.0;
  if (m.used_replay) {
    m.loss_replay = replay->loss;
    m.grad_norm_replay = replay->grad_norm;
  }

  if (!std::isfinite(m.loss_current) || (m.used_replay && !std::isfinite(m.loss_replay))) {
    m.skipped = true;
    m.incident = "non-finite loss (current " + std::to_string(m.loss_current) + ", replay " +
                 std::to_string(m.loss_replay) + ")";
    return m;
  }

  total.resize(current.grad.size());
  if (m.used_replay) {
    if (replay->grad.size() != current.grad.size()) throw std::invalid_argument("mixed_update: gradient size mismatch");
    const double w_cur = 1.0 - lambda;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] = w_cur * current.grad[i] + lambda * replay->grad[i];
  } else {
    std::copy(current.grad.begin(), current.grad.end(), total.begin());
  }
  double sq = 0.0;
  for (double g : total) sq += g * g;
  m.grad_norm_total = std::sqrt(sq);

  if (!all_finite(total)) {
    m.skipped = true;
    m.incident = "non-finite gradient";
    return m;
  }
  model::adam_step(model, total, adam, adam_cfg);
  return m;
}

// Evaluation ----------------------------------------------------------------

std::vector<EnvSplit> split_environments(const channel::CsiDataset& dataset, double val_fraction) {
  std::vector<EnvSplit> out;
  for (int s = 0; s < dataset.env_count(); ++s) {
    std::vector<std::size_t> windows = dataset.env_windows(s);
    const auto n = windows.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - val_fraction)));
    if (n_train == 0 || n_train == n)
      throw std::runtime_error("environment " + std::to_string(s) + " has " + std::to_string(n) +
                               " windows, too few for a train/validation split");
    EnvSplit split;
    split.train.assign(windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(windows.begin() + static_cast<std::ptrdiff_t>(n_train), windows.end());
    out.push_back(std::move(split));
  }
  return out;
}

namespace {

constexpr std::size_t kEvalChunk = 64;

/// Masks for a chunk of windows, each window drawing from its own stream.
model::DropoutMasks per_window_masks(const model::LstmPredictor& model, std::span<const std::size_t> windows,
                                     int steps, int k, std::uint64_t eval_seed) {
  model::DropoutMasks masks;
  const double rate = model.dropout_rate();
  if (rate <= 0.0) return masks;
  const auto& dims = model.dims();
  const Eigen::Index b = static_cast<Eigen::Index>(windows.size()) * k;
  for (int l = 0; l + 1 < dims.n_layers; ++l) masks.inter.emplace_back(dims.hidden, steps * b);
  masks.head.resize(dims.hidden, b);
  for (std::size_t j = 0; j < windows.size(); ++j) {
    math::Rng rng = math::Rng::derive(eval_seed, "window", windows[j]);
    const model::DropoutMasks sub = model::draw_masks(dims, steps, k, rate, rng);
    const Eigen::Index c0 = static_cast<Eigen::Index>(j) * k;
    for (std::size_t l = 0; l < masks.inter.size(); ++l)
      for (int t = 0; t < steps; ++t) masks.inter[l].middleCols(t * b + c0, k) = sub.inter[l].middleCols(t * k, k);
    masks.head.middleCols(c0, k) = sub.head;
  }
  return masks;
}

}  // namespace

Evaluation evaluate_windows(const model::LstmPredictor& model, const channel::CsiDataset& dataset,
                            std::span<const std::size_t> windows, int k_passes, std::uint64_t eval_seed) {
  if (windows.empty()) throw std::invalid_argument("evaluate_windows: no windows");
  if (k_passes < 1) throw std::invalid_argument("evaluate_windows: k_passes must be >= 1");
  const int steps = static_cast<int>(dataset.lookback());
  Evaluation ev;
  ev.windows.assign(windows.begin(), windows.end());
  ev.mean.resize(model.dims().out_dim, static_cast<Eigen::Index>(windows.size()));
  ev.uncertainty.resize(windows.size());
  ev.nmse.resize(windows.size());

  BatchScores chunk;
  double err = 0.0;
  double energy = 0.0;
  for (std::size_t start = 0; start < windows.size(); start += kEvalChunk) {
    const auto part = windows.subspan(start, std::min(kEvalChunk, windows.size() - start));
    chunk.windows.assign(part.begin(), part.end());
    chunk.passes = k_passes;
    pack(dataset, part, model.dims().in_dim, k_passes, chunk.inputs);
    model::forward_into(model, chunk.inputs, steps, per_window_masks(model, part, steps, k_passes, eval_seed),
                        chunk.forward);
    finish_scores(chunk);
    for (std::size_t j = 0; j < part.size(); ++j) {
      const auto i = start + j;
      const auto col = static_cast<Eigen::Index>(j);
      ev.mean.col(static_cast<Eigen::Index>(i)) = chunk.mean.col(col);
      ev.uncertainty[i] = chunk.scores[j];
      const std::span<const double> mu(chunk.mean.col(col).data(), static_cast<std::size_t>(chunk.mean.rows()));
      const std::span<const float> y = dataset.y(part[j]);
      ev.nmse[i] = metrics::nmse(mu, y);
      for (std::size_t e = 0; e < y.size(); ++e) {
        const double d = mu[e] - y[e];
        err += d * d;
        energy += static_cast<double>(y[e]) * y[e];
      }
    }
  }
  ev.nmse_pooled = err / energy;
  double sum = 0.0;
  for (double v : ev.nmse) sum += v;
  ev.nmse_mean = sum / static_cast<double>(ev.nmse.size());
  return ev;
}

Evaluation evaluate_persistence(const channel::CsiDataset& dataset, std::span<const std::size_t> windows) {
  if (windows.empty()) throw std::invalid_argument("evaluate_persistence: no windows");
  const auto f = dataset.frame_size();
  const auto last = (dataset.lookback() - 1) * f;
  Evaluation ev;
  ev.windows.assign(windows.begin(), windows.end());
  ev.mean.resize(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(windows.size()));
  ev.uncertainty.assign(windows.size(), 0.0);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const std::span<const float> x = dataset.x(windows[i]);
    for (std::size_t e = 0; e < f; ++e) ev.mean(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(i)) = x[last + e];
    const std::span<const double> mu(ev.mean.col(static_cast<Eigen::Index>(i)).data(), f);
    ev.nmse.push_back(metrics::nmse(mu, dataset.y(windows[i])));
  }
  const Evaluation* one = &ev;
  ev.nmse_pooled = pooled_nmse(std::span(one, 1), dataset);
  double sum = 0.0;
  for (double v : ev.nmse) sum += v;
  ev.nmse_mean = sum / static_cast<double>(ev.nmse.size());
  return ev;
}

double pooled_nmse(std::span<const Evaluation> evals, const channel::CsiDataset& dataset) {
  double err = 0.0;
  double energy = 0.0;
  for (const auto& ev : evals) {
    for (std::size_t i = 0; i < ev.windows.size(); ++i) {
      const std::span<const float> y = dataset.y(ev.windows[i]);
      for (std::size_t e = 0; e < y.size(); ++e) {
        const double d = ev.mean(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(i)) - y[e];
        err += d * d;
        energy += static_cast<double>(y[e]) * y[e];
      }
    }
  }
  if (!(energy > 0.0)) throw std::domain_error("pooled_nmse: zero-norm targets");
  return err / energy;
}

// Stream --------------------------------------------------------------------

double forgetting(const AccuracyMatrix& a, ForgettingVariant variant) {
  const int n = a.size();
  if (n < 2) throw std::invalid_argument("forgetting: needs at least two environments");
  double sum = 0.0;
  for (int s = 0; s + 1 < n; ++s) {
    const int last_k = variant == ForgettingVariant::AsWritten ? s : n - 1;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= last_k; ++k) best = std::max(best, a.at(k, s));
    const double now = variant == ForgettingVariant::AsWritten ? a.at(s, s) : a.at(n - 1, s);
    sum += best - now;
  }
  return sum / (n - 1);
}

RunSeeds RunSeeds::from(std::uint64_t seed) {
  using math::Rng;
  return {Rng::derive_seed(seed, "init"),   Rng::derive_seed(seed, "dropout/current"),
          Rng::derive_seed(seed, "dropout/replay"), Rng::derive_seed(seed, "buffer"),
          Rng::derive_seed(seed, "replay"), Rng::derive_seed(seed, "eval"),
          Rng::derive_seed(seed, "refresh")};
}

namespace {

constexpr std::int64_t kPenaltyUpdates = 100;

class StreamRunner {
 public:
  StreamRunner(const channel::CsiDataset& dataset, const TrainConfig& cfg, std::uint64_t seed, const RunHooks& hooks)
      : ds_(dataset),
        cfg_(cfg),
        hooks_(hooks),
        seeds_(RunSeeds::from(seed)),
        mix_(effective_params(cfg)),
        model_(init_model()),
        adam_(model::AdamState::zeros(model_.params().size())),
        buffer_(static_cast<std::size_t>(cfg.capacity), mix_.gamma),
        rng_cur_(seeds_.dropout_current),
        rng_rep_(seeds_.dropout_replay),
        rng_buffer_(seeds_.buffer),
        rng_replay_(seeds_.replay),
        rng_refresh_(seeds_.refresh) {
    report_.seed = seed;
    report_.mixing = mix_;
  }

  RunReport run() {
    const auto splits = split_environments(ds_, cfg_.val_fraction);
    const int envs = ds_.env_count();
    report_.accuracy = AccuracyMatrix(envs);
    for (int s = 0; s < envs; ++s) {
      for (int epoch = 0; epoch < cfg_.epochs_per_task; ++epoch) train_epoch(s, epoch, splits[static_cast<std::size_t>(s)].train);
      evaluate_all(s, splits);
      report_.env_checksums.push_back(model_.checksum());
      if (hooks_.on_env_end) hooks_.on_env_end(s, model_, adam_);
    }
    report_.buffer = buffer_.stats();
    report_.final_model = model_;
    report_.final_adam = adam_;
    return std::move(report_);
  }

 private:
  model::LstmPredictor init_model() const {
    math::Rng rng(seeds_.init);
    return model::LstmPredictor::init_params(rng, model_dims(cfg_, ds_), cfg_.dropout);
  }

  void train_epoch(int env, int epoch, const std::vector<std::size_t>& train) {
    const auto batch = static_cast<std::size_t>(cfg_.batch);
    EpochStat stat{env, epoch, 0.0, 0};
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::span<const std::size_t> arrivals(train.data() + start, std::min(batch, train.size() - start));
      // Parameters are fixed between updates, so the arrivals of one
      // mini-batch are scored together; inserts still happen in arrival order.
      score_batch(model_, ds_, arrivals, cfg_.k_passes, rng_cur_, current_);
      report_.clamp_events += current_.forward.tape.clamp_count;
      batch_gradient(model_, ds_, current_, cfg_.beta, cfg_.grad_passes, grad_cur_, ws_);
      for (std::size_t j = 0; j < arrivals.size(); ++j) {
        const std::size_t w = arrivals[j];
        const double u = current_.scores[j];
        const std::span<const double> mu(current_.mean.col(static_cast<Eigen::Index>(j)).data(),
                                         static_cast<std::size_t>(current_.mean.rows()));
        report_.records.push_back({step_, env, metrics::Split::Train, metrics::nmse(mu, ds_.y(w)), u});
        loss_sum += grad_cur_.sample_loss[j];
        buffer_.insert({w, u, env, step_}, rng_buffer_);
        ++step_;
      }
      if (arrivals.size() == batch) {
        update(env);
        ++stat.updates;
      }
    }
    stat.mean_loss = loss_sum / static_cast<double>(train.size());
    report_.epochs.push_back(stat);
  }

  void update(int env) {
    const BatchGradient* replay = nullptr;
    if (mix_.lambda > 0.0 && !buffer_.empty()) {
      const auto sampled = buffer_.sample_prioritized(static_cast<std::size_t>(cfg_.batch), mix_.alpha, rng_replay_);
      replay_windows_.clear();
      for (const auto& e : sampled) replay_windows_.push_back(e.window);
      score_batch(model_, ds_, replay_windows_, cfg_.k_passes, rng_rep_, replayed_);
      report_.clamp_events += replayed_.forward.tape.clamp_count;
      batch_gradient(model_, ds_, replayed_, cfg_.beta, cfg_.grad_passes, grad_rep_, ws_);
      replay = &grad_rep_;
    }

    model::AdamConfig adam_cfg;
    adam_cfg.lr = cfg_.lr;
    if (update_index_ < penalty_until_) adam_cfg.lr *= 0.5;
    const StepMetrics m = mixed_update(model_, adam_, grad_cur_, replay, mix_.lambda, adam_cfg, total_);
    if (m.skipped) {
      report_.incidents.push_back({update_index_, env, m.incident});
      ++report_.skipped_updates;
      penalty_until_ = update_index_ + 1 + kPenaltyUpdates;
    }
    ++update_index_;
    ++report_.updates;
    if (hooks_.on_update) hooks_.on_update(update_index_, model_);
    if (cfg_.refresh_every_n_updates > 0 && update_index_ % cfg_.refresh_every_n_updates == 0) refresh_buffer();
  }

  void refresh_buffer() {
    const auto& entries = buffer_.entries();
    for (std::size_t start = 0; start < entries.size(); start += kEvalChunk) {
      const std::size_t n = std::min(kEvalChunk, entries.size() - start);
      replay_windows_.clear();
      for (std::size_t i = 0; i < n; ++i) replay_windows_.push_back(entries[start + i].window);
      score_batch(model_, ds_, replay_windows_, cfg_.k_passes, rng_refresh_, replayed_);
      for (std::size_t i = 0; i < n; ++i) buffer_.set_uncertainty(start + i, replayed_.scores[i]);
    }
  }

  void evaluate_all(int k, const std::vector<EnvSplit>& splits) {
    const bool last = k + 1 == ds_.env_count();
    for (int s = 0; s < ds_.env_count(); ++s) {
      Evaluation ev = evaluate_windows(model_, ds_, splits[static_cast<std::size_t>(s)].val, cfg_.k_passes, seeds_.eval);
      report_.accuracy.at(k, s) = 1.0 - ev.nmse_pooled;
      for (std::size_t i = 0; i < ev.windows.size(); ++i)
        report_.records.push_back({step_, s, metrics::Split::Val, ev.nmse[i], ev.uncertainty[i]});
      if (last) report_.final_eval.push_back(std::move(ev));
    }
  }

  const channel::CsiDataset& ds_;
  const TrainConfig& cfg_;
  const RunHooks& hooks_;
  RunSeeds seeds_;
  MixingParams mix_;
  model::LstmPredictor model_;
  model::AdamState adam_;
  replay::ReplayBuffer buffer_;
  math::Rng rng_cur_;
  math::Rng rng_rep_;
  math::Rng rng_buffer_;
  math::Rng rng_replay_;
  math::Rng rng_refresh_;

  RunReport report_;
  std::int64_t step_ = 0;
  std::int64_t update_index_ = 0;
  std::int64_t penalty_until_ = 0;

  BatchScores current_;
  BatchScores replayed_;
  BatchGradient grad_cur_;
  BatchGradient grad_rep_;
  GradientWorkspace ws_;
  model::ParamVector total_;
  std::vector<std::size_t> replay_windows_;
};

}  // namespace

RunReport run_stream(const channel::CsiDataset& dataset, const TrainConfig& cfg, std::uint64_t seed,
                     const RunHooks& hooks) {
  cfg.validate();
  if (dataset.env_count() < 1) throw std::invalid_argument("run_stream: dataset has no environments");
  return StreamRunner(dataset, cfg, seed, hooks).run();
}

RunSummary summarize(const RunReport& report, const channel::CsiDataset& dataset) {
  if (report.final_eval.empty()) throw std::invalid_argument("summarize: report has no final evaluation");
  RunSummary out;
  out.nmse_pooled = pooled_nmse(report.final_eval, dataset);
  out.nmse_db_pooled = metrics::nmse_db(out.nmse_pooled).db;

  std::vector<double> nmse;
  std::vector<double> unc;
  std::vector<Evaluation> persistence;
  for (const auto& ev : report.final_eval) {
    nmse.insert(nmse.end(), ev.nmse.begin(), ev.nmse.end());
    unc.insert(unc.end(), ev.uncertainty.begin(), ev.uncertainty.end());
    persistence.push_back(evaluate_persistence(dataset, ev.windows));
  }
  double sum = 0.0;
  for (double v : nmse) sum += v;
  out.nmse_mean = sum / static_cast<double>(nmse.size());
  std::vector<double> sorted = nmse;
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  out.nmse_db_median = metrics::nmse_db(median).db;
  out.persistence_nmse_pooled = pooled_nmse(persistence, dataset);

  if (report.accuracy.size() >= 2) {
    out.forgetting_standard = forgetting(report.accuracy, ForgettingVariant::Standard);
    out.forgetting_as_written = forgetting(report.accuracy, ForgettingVariant::AsWritten);
  }
  try {
    out.pearson_r = math::pearson_r(unc, nmse);
  } catch (const std::exception&) {
    out.pearson_r.reset();
  }
  return out;
}

void write_run_report(const std::filesystem::path& dir, const RunReport& report) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot open " + (dir / name).string());
    out.precision(17);
    return out;
  };

  {
    auto out = open("accuracy_matrix.csv");
    const int n = report.accuracy.size();
    out << "after_env";
    for (int s = 0; s < n; ++s) out << ",env_" << s;
    out << '\n';
    for (int k = 0; k < n; ++k) {
      out << k;
      for (int s = 0; s < n; ++s) out << ',' << report.accuracy.at(k, s);
      out << '\n';
    }
  }
  {
    auto out = open("per_sample.csv");
    out << "step,env,nmse,uncertainty,split\n";
    for (const auto& r : report.records)
      out << r.step << ',' << r.env_id << ',' << r.nmse << ',' << r.uncertainty << ',' << metrics::to_string(r.split)
          << '\n';
  }
  {
    auto out = open("incidents.log");
    for (const auto& i : report.incidents) out << "update " << i.update << " env " << i.env << ": " << i.what << '\n';
  }
}

}  // namespace uwer::train
