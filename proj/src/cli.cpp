#include "uwer/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "uwer/metrics.hpp"

namespace uwer::cli {

namespace fs = std::filesystem;
using channel::ConfigError;
using config::Json;

const char* const kVersion = "0.1.0";

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Json nullable(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json mixing_json(const train::MixingParams& m) {
  Json j;
  j["lambda"] = m.lambda;
  j["alpha"] = m.alpha;
  j["gamma"] = m.gamma;
  return j;
}

void collect_files(const fs::path& root, std::vector<fs::path>& out) {
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      out.push_back(fs::relative(entry.path(), root));
  std::sort(out.begin(), out.end());
}

}  // namespace

// Manifest ------------------------------------------------------------------

Json make_manifest(const std::string& command, const Json& effective_config, const std::string& dataset_hash,
                   std::span<const std::uint64_t> seeds, const fs::path& out_dir, std::span<const fs::path> artifacts,
                   double wall_clock_s) {
  Json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config"] = effective_config;
  m["config_hash"] = config::hex64(config::json_hash(effective_config));
  m["dataset_hash"] = dataset_hash;
  m["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  Json files = Json::array();
  for (const auto& rel : artifacts) {
    Json a;
    a["path"] = rel.generic_string();
    a["fnv1a64"] = config::hex64(channel::file_checksum(out_dir / rel));
    files.push_back(a);
  }
  m["artifacts"] = files;
  m["wall_clock_s"] = wall_clock_s;
  return m;
}

void write_manifest(const fs::path& out_dir, const Json& manifest) { config::write_json(out_dir / "manifest.json", manifest); }

ManifestCheck verify_manifest(const fs::path& out_dir) {
  ManifestCheck check;
  auto fail = [&](std::string what) {
    check.ok = false;
    check.problems.push_back(std::move(what));
  };
  const fs::path path = out_dir / "manifest.json";
  if (!fs::exists(path)) {
    fail("missing manifest.json");
    return check;
  }
  const Json m = config::read_json(path);
  for (const char* key : {"command", "version", "config", "config_hash", "dataset_hash", "seeds", "artifacts"})
    if (!m.contains(key)) fail(std::string("missing field ") + key);
  if (!check.ok) return check;
  if (config::hex64(config::json_hash(m["config"])) != m["config_hash"].get<std::string>()) fail("config hash mismatch");
  for (const auto& a : m["artifacts"]) {
    const fs::path file = out_dir / a["path"].get<std::string>();
    if (!fs::exists(file)) {
      fail("missing artifact " + a["path"].get<std::string>());
      continue;
    }
    if (config::hex64(channel::file_checksum(file)) != a["fnv1a64"].get<std::string>())
      fail("hash mismatch for " + a["path"].get<std::string>());
  }
  return check;
}

// Datasets ------------------------------------------------------------------

GenResult cmd_gen(const channel::ChannelConfig& cfg, const fs::path& out_dir) {
  const auto t0 = Clock::now();
  cfg.validate();
  fs::create_directories(out_dir);
  const channel::CsiDataset ds = channel::generate_dataset(cfg);

  GenResult r;
  r.dataset = out_dir / "dataset.uwer";
  r.sidecar = out_dir / "dataset.uwer.json";
  r.checksum = channel::write_dataset(ds, r.dataset);
  r.windows = ds.window_count();

  Json side;
  side["format"] = "UWERDS01";
  side["checksum"] = config::hex64(r.checksum);
  side["windows"] = ds.window_count();
  side["lookback"] = ds.lookback();
  side["frame_size"] = ds.frame_size();
  side["env_count"] = ds.env_count();
  side["norm_scale"] = ds.norm_scale();
  side["config"] = config::to_json(cfg);
  config::write_json(r.sidecar, side);

  const fs::path artifacts[] = {"dataset.uwer", "dataset.uwer.json"};
  const std::uint64_t seeds[] = {cfg.seed};
  write_manifest(out_dir, make_manifest("gen", config::to_json(cfg), config::hex64(r.checksum), seeds, out_dir,
                                        artifacts, seconds_since(t0)));
  return r;
}

channel::CsiDataset load_dataset(const fs::path& dataset_file) {
  if (!fs::exists(dataset_file)) throw UsageError("dataset not found: " + dataset_file.string());
  fs::path sidecar = dataset_file;
  sidecar += ".json";
  if (!fs::exists(sidecar)) throw UsageError("dataset sidecar not found: " + sidecar.string());
  const Json side = config::read_json(sidecar);
  if (!side.contains("config") || !side.contains("checksum"))
    throw std::runtime_error("dataset sidecar lacks config/checksum: " + sidecar.string());
  const channel::ChannelConfig cfg = config::channel_from_json(side["config"], {}, "config.");
  cfg.validate();
  const std::string expected = side["checksum"].get<std::string>();
  const std::string actual = config::hex64(channel::file_checksum(dataset_file));
  if (expected != actual)
    throw std::runtime_error("dataset checksum mismatch for " + dataset_file.string() + ": sidecar " + expected +
                             ", file " + actual);
  return channel::read_dataset(dataset_file, cfg);
}

// Training ------------------------------------------------------------------

namespace {

Json summary_json(const train::RunSummary& s) {
  Json j;
  j["nmse_pooled"] = s.nmse_pooled;
  j["nmse_mean"] = s.nmse_mean;
  j["nmse_db_pooled"] = s.nmse_db_pooled;
  j["nmse_db_median"] = s.nmse_db_median;
  j["persistence_nmse_db_pooled"] = metrics::nmse_db(s.persistence_nmse_pooled).db;
  j["forgetting_standard"] = s.forgetting_standard;
  j["forgetting_as_written"] = s.forgetting_as_written;
  j["pearson_r"] = nullable(s.pearson_r);
  return j;
}

}  // namespace

TrainOutcome cmd_train(const fs::path& dataset_file, const train::TrainConfig& cfg, const fs::path& out_dir,
                       std::ostream* log) {
  const auto t0 = Clock::now();
  cfg.validate();
  const channel::CsiDataset ds = load_dataset(dataset_file);
  fs::create_directories(out_dir);

  TrainOutcome outcome;
  const train::MixingParams mix = train::effective_params(cfg);
  Json per_seed = Json::array();
  const int envs = ds.env_count();
  std::vector<double> acc_sum(static_cast<std::size_t>(envs) * envs, 0.0);
  double sum_db = 0.0, sum_fs = 0.0, sum_fw = 0.0;

  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    train::RunHooks hooks;
    hooks.on_env_end = [&](int env, const model::LstmPredictor& m, const model::AdamState& adam) {
      const fs::path ck = dir / ("checkpoint_env_" + std::to_string(env) + ".uwerck");
      model::write_checkpoint(ck, m, adam);
      Json side;
      side["format"] = "UWERCK01";
      side["env"] = env;
      side["seed"] = seed;
      side["n_layers"] = m.dims().n_layers;
      side["hidden"] = m.dims().hidden;
      side["in_dim"] = m.dims().in_dim;
      side["out_dim"] = m.dims().out_dim;
      side["dropout"] = m.dropout_rate();
      side["adam_step"] = adam.step;
      side["param_checksum"] = config::hex64(m.checksum());
      side["train"] = config::to_json(cfg);
      fs::path side_path = ck;
      side_path += ".json";
      config::write_json(side_path, side);
    };
    const train::RunReport report = train::run_stream(ds, cfg, seed, hooks);
    train::write_run_report(dir, report);

    Json run_cfg = config::to_json(cfg);
    run_cfg["seed"] = seed;
    run_cfg["effective"] = mixing_json(mix);
    config::write_json(dir / "config.json", run_cfg);

    const train::RunSummary s = train::summarize(report, ds);
    Json js = summary_json(s);
    js["seed"] = seed;
    js["updates"] = report.updates;
    js["skipped_updates"] = report.skipped_updates;
    js["clamp_events"] = report.clamp_events;
    per_seed.push_back(js);

    for (int k = 0; k < envs; ++k)
      for (int e = 0; e < envs; ++e) acc_sum[static_cast<std::size_t>(k) * envs + e] += report.accuracy.at(k, e);
    sum_db += s.nmse_db_pooled;
    sum_fs += s.forgetting_standard;
    sum_fw += s.forgetting_as_written;
    outcome.updates += report.updates;
    outcome.skipped_updates += report.skipped_updates;
    if (log)
      *log << "seed " << seed << ": val NMSE " << s.nmse_db_pooled << " dB (persistence "
           << metrics::nmse_db(s.persistence_nmse_pooled).db << " dB), F " << s.forgetting_standard << ", "
           << report.updates << " updates, " << report.skipped_updates << " skipped\n";
  }

  const double n = static_cast<double>(cfg.seeds.size());
  Json acc = Json::array();
  for (int k = 0; k < envs; ++k) {
    Json row = Json::array();
    for (int e = 0; e < envs; ++e) row.push_back(acc_sum[static_cast<std::size_t>(k) * envs + e] / n);
    acc.push_back(row);
  }
  Json summary;
  summary["policy"] = train::to_string(cfg.policy);
  summary["effective"] = mixing_json(mix);
  summary["seeds"] = per_seed;
  summary["mean_nmse_db_pooled"] = sum_db / n;
  summary["mean_forgetting_standard"] = sum_fs / n;
  summary["mean_forgetting_as_written"] = sum_fw / n;
  summary["mean_accuracy_matrix"] = acc;
  config::write_json(out_dir / "summary.json", summary);
  outcome.summary = summary;
  outcome.incident_cascade =
      outcome.updates > 0 && static_cast<double>(outcome.skipped_updates) > 0.05 * static_cast<double>(outcome.updates);

  Json eff;
  eff["train"] = config::to_json(cfg);
  eff["effective"] = mixing_json(mix);
  std::vector<fs::path> files;
  collect_files(out_dir, files);
  write_manifest(out_dir, make_manifest("train", eff, config::hex64(channel::file_checksum(dataset_file)), cfg.seeds,
                                        out_dir, files, seconds_since(t0)));
  return outcome;
}

// Evaluation ----------------------------------------------------------------

Predictor checkpoint_predictor(model::LstmPredictor model, int k_passes, std::uint64_t eval_seed) {
  return [model = std::move(model), k_passes, eval_seed](const channel::CsiDataset& ds,
                                                          std::span<const std::size_t> windows) {
    return train::evaluate_windows(model, ds, windows, k_passes, eval_seed);
  };
}

Predictor persistence_predictor() {
  return [](const channel::CsiDataset& ds, std::span<const std::size_t> windows) {
    return train::evaluate_persistence(ds, windows);
  };
}

void check_dimensions(const model::LstmPredictor& model, const channel::CsiDataset& dataset) {
  const auto& d = model.dims();
  const auto f = static_cast<int>(dataset.frame_size());
  if (d.in_dim != f || d.out_dim != f) {
    const auto& c = dataset.config();
    throw UsageError("dimension mismatch: checkpoint in_dim " + std::to_string(d.in_dim) + ", out_dim " +
                     std::to_string(d.out_dim) + "; dataset frame [2 x " + std::to_string(c.n_tx) + " x " +
                     std::to_string(c.n_rb) + " x " + std::to_string(c.n_rx) + "] = " + std::to_string(f));
  }
}

Json cmd_eval(const channel::CsiDataset& ds, const Predictor& predictor, const EvalOptions& opts,
              const fs::path& out_dir) {
  const auto t0 = Clock::now();
  fs::create_directories(out_dir);
  const auto splits = train::split_environments(ds, opts.val_fraction);
  const auto& cc = ds.config();
  const metrics::FrameLayout layout{cc.n_tx, cc.n_rb, cc.n_rx};

  std::vector<train::Evaluation> evals;
  std::vector<double> nmse, unc, nmse_db;
  std::vector<metrics::PredictionPair> pairs;
  std::size_t clamped = 0;
  Json per_env = Json::array();
  for (const auto& split : splits) {
    train::Evaluation ev = predictor(ds, split.val);
    if (ev.windows.size() != split.val.size() || ev.nmse.size() != split.val.size())
      throw std::runtime_error("predictor returned the wrong number of windows");
    for (std::size_t i = 0; i < ev.windows.size(); ++i) {
      nmse.push_back(ev.nmse[i]);
      unc.push_back(ev.uncertainty[i]);
      const metrics::DbValue db = metrics::nmse_db(ev.nmse[i]);
      nmse_db.push_back(db.db);
      clamped += db.clamped;
      const auto col = ev.mean.col(static_cast<Eigen::Index>(i));
      const std::span<const float> y = ds.y(ev.windows[i]);
      pairs.push_back({std::vector<double>(col.data(), col.data() + col.size()), std::vector<double>(y.begin(), y.end())});
    }
    Json e;
    e["nmse_pooled"] = ev.nmse_pooled;
    e["nmse_mean"] = ev.nmse_mean;
    per_env.push_back(e);
    evals.push_back(std::move(ev));
  }

  const metrics::Distribution dist = metrics::distribution_export(nmse_db, opts.histogram_bins);
  metrics::write_cdf_csv(out_dir / "cdf.csv", dist.cdf);
  metrics::write_hist_csv(out_dir / "hist.csv", dist.histogram);
  const metrics::PerRbNmse per_rb = metrics::per_rb_nmse(pairs, layout);
  metrics::write_per_rb_csv(out_dir / "per_rb.csv", per_rb);
  const metrics::CalibrationCurve curve = metrics::calibration_curve(unc, nmse, opts.calibration_bins);
  metrics::write_calibration_csv(out_dir / "calibration.csv", curve);
  const std::size_t mag_window = splits.front().val.front();
  metrics::write_magnitude_csv(out_dir / "magnitude.csv",
                               metrics::magnitude_map(ds.y(mag_window), layout, opts.tx, opts.rx));

  const double pooled = train::pooled_nmse(evals, ds);
  double mean = 0.0;
  for (double v : nmse) mean += v;
  mean /= static_cast<double>(nmse.size());
  Json s;
  s["windows"] = nmse.size();
  s["nmse_pooled"] = pooled;
  s["nmse_mean"] = mean;
  s["nmse_db_pooled"] = metrics::nmse_db(pooled).db;
  s["nmse_db_mean"] = metrics::nmse_db(mean).db;
  s["clamped_samples"] = clamped;
  s["pearson_r"] = nullable(curve.pearson_r);
  if (!curve.pearson_r) s["pearson_error"] = curve.pearson_error;
  s["per_rb_spread_db"] = *std::max_element(per_rb.db.begin(), per_rb.db.end()) -
                          *std::min_element(per_rb.db.begin(), per_rb.db.end());
  s["magnitude_window"] = mag_window;
  s["per_env"] = per_env;
  config::write_json(out_dir / "summary.json", s);

  Json eff;
  eff["val_fraction"] = opts.val_fraction;
  eff["calibration_bins"] = opts.calibration_bins;
  eff["histogram_bins"] = opts.histogram_bins;
  eff["tx"] = opts.tx;
  eff["rx"] = opts.rx;
  const fs::path files[] = {"cdf.csv", "hist.csv", "per_rb.csv", "calibration.csv", "magnitude.csv", "summary.json"};
  write_manifest(out_dir, make_manifest("eval", eff, "", {}, out_dir, files, seconds_since(t0)));
  return s;
}

// Ablation ------------------------------------------------------------------

GridConfig grid_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  GridConfig g;
  for (const auto& [key, value] : j.items())
    if (key != "policies" && key != "buffers" && key != "betas" && key != "train")
      throw ConfigError(key, "unknown field");
  if (j.contains("train")) g.base = config::train_from_json(j["train"], {}, "train.");
  if (j.contains("policies")) {
    if (!j["policies"].is_array()) throw ConfigError("policies", "expected an array of policy names");
    g.policies.clear();
    for (const auto& p : j["policies"]) {
      if (!p.is_string()) throw ConfigError("policies", "expected an array of policy names");
      try {
        g.policies.push_back(train::parse_policy(p.get<std::string>()));
      } catch (const ConfigError&) {
        throw ConfigError("policies", "unknown policy '" + p.get<std::string>() + "'");
      }
    }
  }
  if (j.contains("buffers")) {
    if (!j["buffers"].is_array()) throw ConfigError("buffers", "expected an array of integers");
    g.buffers.clear();
    for (const auto& b : j["buffers"]) {
      if (!b.is_number_integer() || b.get<std::int64_t>() < 1) throw ConfigError("buffers", "expected integers >= 1");
      g.buffers.push_back(b.get<int>());
    }
  }
  if (j.contains("betas")) {
    if (!j["betas"].is_array()) throw ConfigError("betas", "expected an array of numbers");
    g.betas.clear();
    for (const auto& b : j["betas"]) {
      if (!b.is_number()) throw ConfigError("betas", "expected an array of numbers");
      g.betas.push_back(b.get<double>());
    }
  }
  if (g.policies.empty()) throw ConfigError("policies", "must not be empty");
  if (g.buffers.empty()) throw ConfigError("buffers", "must not be empty");
  if (g.betas.empty()) throw ConfigError("betas", "must not be empty");
  return g;
}

Json to_json(const GridConfig& g) {
  Json j;
  Json p = Json::array();
  for (auto policy : g.policies) p.push_back(train::to_string(policy));
  j["policies"] = p;
  j["buffers"] = g.buffers;
  j["betas"] = g.betas;
  j["train"] = config::to_json(g.base);
  return j;
}

std::vector<AblationRow> cmd_ablate(const fs::path& dataset_file, const GridConfig& grid, const fs::path& out_dir,
                                    std::ostream* log) {
  const auto t0 = Clock::now();
  grid.base.validate();
  const channel::CsiDataset ds = load_dataset(dataset_file);
  fs::create_directories(out_dir);

  std::vector<AblationRow> rows;
  for (auto policy : grid.policies)
    for (int buffer : grid.buffers)
      for (double beta : grid.betas)
        for (std::uint64_t seed : grid.base.seeds) {
          AblationRow row;
          row.policy = train::to_string(policy);
          row.buffer = buffer;
          row.beta = beta;
          row.seed = seed;
          try {
            train::TrainConfig cfg = grid.base;
            cfg.policy = policy;
            cfg.capacity = buffer;
            cfg.beta = beta;
            const train::RunReport report = train::run_stream(ds, cfg, seed);
            const train::RunSummary s = train::summarize(report, ds);
            row.val_nmse_db_pooled = s.nmse_db_pooled;
            row.forgetting_std = s.forgetting_standard;
            row.forgetting_as_written = s.forgetting_as_written;
            row.pearson_r = s.pearson_r.value_or(std::numeric_limits<double>::quiet_NaN());
          } catch (const std::exception& e) {
            row.error = e.what();
            row.val_nmse_db_pooled = row.forgetting_std = row.forgetting_as_written = row.pearson_r =
                std::numeric_limits<double>::quiet_NaN();
          }
          if (log)
            *log << row.policy << " C=" << buffer << " beta=" << beta << " seed=" << seed << ": "
                 << (row.error.empty() ? std::to_string(row.val_nmse_db_pooled) + " dB" : "FAILED " + row.error)
                 << '\n';
          rows.push_back(std::move(row));
        }

  {
    std::ofstream out(out_dir / "ablation.csv");
    if (!out) throw std::runtime_error("cannot open " + (out_dir / "ablation.csv").string());
    out.precision(10);
    out << "policy,buffer,beta,seed,val_nmse_db_pooled,forgetting_std,forgetting_as_written,pearson_r\n";
    for (const auto& r : rows)
      out << r.policy << ',' << r.buffer << ',' << r.beta << ',' << r.seed << ',' << r.val_nmse_db_pooled << ','
          << r.forgetting_std << ',' << r.forgetting_as_written << ',' << r.pearson_r << '\n';
  }
  std::vector<fs::path> files{"ablation.csv"};
  bool failed = false;
  {
    std::ofstream out(out_dir / "failures.log");
    for (const auto& r : rows)
      if (!r.error.empty()) {
        failed = true;
        out << r.policy << ",C=" << r.buffer << ",beta=" << r.beta << ",seed=" << r.seed << ": " << r.error << '\n';
      }
  }
  files.push_back("failures.log");
  Json m = make_manifest("ablate", to_json(grid), config::hex64(channel::file_checksum(dataset_file)),
                         grid.base.seeds, out_dir, files, seconds_since(t0));
  m["failed_arms"] = failed;
  write_manifest(out_dir, m);
  return rows;
}

// Command line --------------------------------------------------------------

namespace {

template <typename T>
void overlay(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

struct GenFlags {
  std::string config, out;
  bool emit = false;
  std::optional<int> n_samples, lookback, n_tx, n_rx, n_rb, n_paths;
  std::optional<double> carrier_hz, bandwidth_hz, sample_interval_s, tap_spacing_s, rms_delay_spread_s, spacing;
  std::optional<std::uint64_t> seed;
  std::vector<double> speeds;
};

struct TrainFlags {
  std::string dataset, config, out, policy, grad_passes;
  bool emit = false;
  std::optional<int> buffer, k, batch, epochs, layers, hidden, refresh_every_n_updates;
  std::optional<double> lambda, alpha, gamma, beta, lr, dropout, val_fraction;
  std::vector<std::uint64_t> seeds;
};

struct EvalFlags {
  std::string checkpoint, dataset, out, predictor = "model";
  int k = 8;
  std::uint64_t seed = 0;
  EvalOptions opts;
};

struct AblateFlags {
  std::string dataset, grid, out;
  bool emit = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--dataset", f.dataset, "Dataset file written by `gen`");
  cmd->add_option("--config", f.config, "TrainConfig JSON");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_flag("--emit-default-config", f.emit, "Print the default TrainConfig and exit");
  cmd->add_option("--policy", f.policy, "uwer | uniform_er | lars_only | no_replay");
  cmd->add_option("--buffer", f.buffer, "Replay capacity C");
  cmd->add_option("--lambda", f.lambda, "Replay mixing weight");
  cmd->add_option("--alpha", f.alpha, "Prioritization exponent");
  cmd->add_option("--gamma", f.gamma, "LARS replacement slope");
  cmd->add_option("--beta", f.beta, "Uncertainty weight in the loss");
  cmd->add_option("--k", f.k, "MC-dropout passes");
  cmd->add_option("--batch", f.batch, "Mini-batch size");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--epochs", f.epochs, "Epochs per environment");
  cmd->add_option("--seeds", f.seeds, "Comma-separated seeds")->delimiter(',');
  cmd->add_option("--layers", f.layers, "LSTM layers");
  cmd->add_option("--hidden", f.hidden, "LSTM hidden size");
  cmd->add_option("--dropout", f.dropout, "Dropout rate");
  cmd->add_option("--grad-passes", f.grad_passes, "K or 1");
  cmd->add_option("--refresh-every-n-updates", f.refresh_every_n_updates, "Re-score the buffer every n updates (0 = never)");
  cmd->add_option("--val-fraction", f.val_fraction, "Validation fraction per environment");
}

train::TrainConfig resolve_train(const TrainFlags& f) {
  train::TrainConfig c;
  if (!f.config.empty()) c = config::train_from_json(config::read_json(f.config));
  if (!f.policy.empty()) c.policy = train::parse_policy(f.policy);
  overlay(f.buffer, c.capacity);
  overlay(f.lambda, c.lambda);
  overlay(f.alpha, c.alpha);
  overlay(f.gamma, c.gamma);
  overlay(f.beta, c.beta);
  overlay(f.k, c.k_passes);
  overlay(f.batch, c.batch);
  overlay(f.lr, c.lr);
  overlay(f.epochs, c.epochs_per_task);
  if (!f.seeds.empty()) c.seeds = f.seeds;
  overlay(f.layers, c.n_layers);
  overlay(f.hidden, c.hidden);
  overlay(f.dropout, c.dropout);
  if (!f.grad_passes.empty()) {
    if (f.grad_passes == "K")
      c.grad_passes = train::GradPasses::All;
    else if (f.grad_passes == "1")
      c.grad_passes = train::GradPasses::First;
    else
      throw ConfigError("grad_passes", "expected K or 1");
  }
  overlay(f.refresh_every_n_updates, c.refresh_every_n_updates);
  overlay(f.val_fraction, c.val_fraction);
  c.validate();
  return c;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-weighted experience replay for continual MIMO channel prediction", "uwer"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenFlags gf;
  auto* gen = app.add_subcommand("gen", "Generate a CSI dataset");
  gen->add_option("--config", gf.config, "ChannelConfig JSON");
  gen->add_option("--out", gf.out, "Output directory");
  gen->add_flag("--emit-default-config", gf.emit, "Print the default ChannelConfig and exit");
  gen->add_option("--n-samples", gf.n_samples, "Snapshots N");
  gen->add_option("--lookback", gf.lookback, "Look-back T");
  gen->add_option("--n-tx", gf.n_tx, "Transmit antennas");
  gen->add_option("--n-rx", gf.n_rx, "Receive antennas");
  gen->add_option("--n-rb", gf.n_rb, "Resource blocks");
  gen->add_option("--n-paths", gf.n_paths, "Multipath taps");
  gen->add_option("--carrier-hz", gf.carrier_hz, "Carrier frequency");
  gen->add_option("--bandwidth-hz", gf.bandwidth_hz, "Bandwidth");
  gen->add_option("--sample-interval-s", gf.sample_interval_s, "Snapshot interval");
  gen->add_option("--tap-spacing-s", gf.tap_spacing_s, "Tap spacing");
  gen->add_option("--rms-delay-spread-s", gf.rms_delay_spread_s, "RMS delay spread");
  gen->add_option("--antenna-spacing", gf.spacing, "ULA spacing in wavelengths");
  gen->add_option("--speeds", gf.speeds, "Comma-separated environment speeds (km/h)")->delimiter(',');
  gen->add_option("--seed", gf.seed, "Dataset seed");

  TrainFlags tf;
  auto* trn = app.add_subcommand("train", "Run the continual training stream");
  add_train_flags(trn, tf);

  EvalFlags ef;
  auto* evl = app.add_subcommand("eval", "Emit metric CSVs for a checkpoint");
  evl->add_option("--checkpoint", ef.checkpoint, "Checkpoint file (.uwerck)");
  evl->add_option("--dataset", ef.dataset, "Dataset file");
  evl->add_option("--out", ef.out, "Output directory");
  evl->add_option("--predictor", ef.predictor, "model | persistence")->check(CLI::IsMember({"model", "persistence"}));
  evl->add_option("--k", ef.k, "MC-dropout passes");
  evl->add_option("--seed", ef.seed, "Evaluation seed");
  evl->add_option("--val-fraction", ef.opts.val_fraction, "Validation fraction per environment");
  evl->add_option("--bins", ef.opts.calibration_bins, "Calibration bins");
  evl->add_option("--hist-bins", ef.opts.histogram_bins, "Histogram bins");
  evl->add_option("--tx", ef.opts.tx, "Transmit antenna for magnitude.csv");
  evl->add_option("--rx", ef.opts.rx, "Receive antenna for magnitude.csv");

  AblateFlags af;
  auto* abl = app.add_subcommand("ablate", "Policy x buffer x beta sweep");
  abl->add_option("--dataset", af.dataset, "Dataset file");
  abl->add_option("--grid", af.grid, "Grid JSON");
  abl->add_option("--out", af.out, "Output directory");
  abl->add_flag("--emit-default-config", af.emit, "Print the default grid and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      if (gf.emit) {
        std::cout << config::to_json(channel::ChannelConfig{}).dump(2) << '\n';
        return kExitOk;
      }
      require(gf.out, "--out");
      channel::ChannelConfig c;
      if (!gf.config.empty()) c = config::channel_from_json(config::read_json(gf.config));
      overlay(gf.n_samples, c.n_samples);
      overlay(gf.lookback, c.lookback);
      overlay(gf.n_tx, c.n_tx);
      overlay(gf.n_rx, c.n_rx);
      overlay(gf.n_rb, c.n_rb);
      overlay(gf.n_paths, c.n_paths);
      overlay(gf.carrier_hz, c.carrier_hz);
      overlay(gf.bandwidth_hz, c.bandwidth_hz);
      overlay(gf.sample_interval_s, c.sample_interval_s);
      overlay(gf.tap_spacing_s, c.tap_spacing_s);
      overlay(gf.rms_delay_spread_s, c.rms_delay_spread_s);
      overlay(gf.spacing, c.antenna_spacing_wavelengths);
      overlay(gf.seed, c.seed);
      if (!gf.speeds.empty()) c.env_speeds_kmh = gf.speeds;
      const GenResult r = cmd_gen(c, gf.out);
      std::cout << "dataset " << r.dataset.string() << ": N_w=" << r.windows << " T=" << c.lookback << " frame=[2 x "
                << c.n_tx << " x " << c.n_rb << " x " << c.n_rx << "] envs=" << c.env_count()
                << " checksum=" << config::hex64(r.checksum) << '\n';
      return kExitOk;
    }
    if (*trn) {
      if (tf.emit) {
        std::cout << config::to_json(train::TrainConfig{}).dump(2) << '\n';
        return kExitOk;
      }
      require(tf.dataset, "--dataset");
      require(tf.out, "--out");
      const train::TrainConfig c = resolve_train(tf);
      const TrainOutcome o = cmd_train(tf.dataset, c, tf.out, &std::cout);
      if (o.incident_cascade) {
        std::cerr << "error: " << o.skipped_updates << " of " << o.updates << " updates skipped (more than 5%)\n";
        return kExitRuntime;
      }
      return kExitOk;
    }
    if (*evl) {
      require(ef.dataset, "--dataset");
      require(ef.out, "--out");
      const channel::CsiDataset ds = load_dataset(ef.dataset);
      Predictor p;
      if (ef.predictor == "persistence") {
        p = persistence_predictor();
      } else {
        require(ef.checkpoint, "--checkpoint");
        if (!fs::exists(ef.checkpoint)) throw UsageError("checkpoint not found: " + ef.checkpoint);
        model::Checkpoint ck = model::read_checkpoint(ef.checkpoint);
        check_dimensions(ck.model, ds);
        p = checkpoint_predictor(std::move(ck.model), ef.k, math::Rng::derive_seed(ef.seed, "eval"));
      }
      const Json s = cmd_eval(ds, p, ef.opts, ef.out);
      std::cout << "validation NMSE " << s["nmse_db_pooled"].get<double>() << " dB pooled over " << s["windows"]
                << " windows\n";
      return kExitOk;
    }
    if (*abl) {
      if (af.emit) {
        std::cout << to_json(GridConfig{}).dump(2) << '\n';
        return kExitOk;
      }
      require(af.dataset, "--dataset");
      require(af.out, "--out");
      GridConfig g;
      if (!af.grid.empty()) g = grid_from_json(config::read_json(af.grid));
      const auto rows = cmd_ablate(af.dataset, g, af.out, &std::cout);
      const bool failed = std::any_of(rows.begin(), rows.end(), [](const AblationRow& r) { return !r.error.empty(); });
      return failed ? kExitRuntime : kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace uwer::cli
