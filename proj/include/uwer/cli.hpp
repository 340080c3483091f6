#pragma once

// The `uwer` command surface: gen, train, eval and ablate. Each command is
// also callable as a function so tests and the Python module can drive it
// without a subprocess.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uwer/channel.hpp"
#include "uwer/config_io.hpp"
#include "uwer/trainer.hpp"

namespace uwer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

extern const char* const kVersion;

/// Raised for missing inputs; maps to exit code 2 like a config error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Manifest ------------------------------------------------------------------

/// manifest.json: command, version, effective config and its hash, dataset
/// hash, seeds, artifacts with per-file hashes, wall-clock seconds. The
/// wall-clock field is excluded from every hash.
config::Json make_manifest(const std::string& command, const config::Json& effective_config,
                           const std::string& dataset_hash, std::span<const std::uint64_t> seeds,
                           const std::filesystem::path& out_dir, std::span<const std::filesystem::path> artifacts,
                           double wall_clock_s);
void write_manifest(const std::filesystem::path& out_dir, const config::Json& manifest);

struct ManifestCheck {
  bool ok = true;
  std::vector<std::string> problems;
};
/// Re-hashes the config and every listed artifact of `out_dir/manifest.json`.
ManifestCheck verify_manifest(const std::filesystem::path& out_dir);

// Datasets ------------------------------------------------------------------

struct GenResult {
  std::filesystem::path dataset;
  std::filesystem::path sidecar;
  std::uint64_t checksum = 0;
  std::size_t windows = 0;
};

/// Writes out_dir/dataset.uwer, its sidecar dataset.uwer.json (config and
/// checksum) and the manifest.
GenResult cmd_gen(const channel::ChannelConfig& cfg, const std::filesystem::path& out_dir);

/// Reads a dataset through its sidecar, verifying the file checksum.
channel::CsiDataset load_dataset(const std::filesystem::path& dataset_file);

// Training ------------------------------------------------------------------

struct TrainOutcome {
  config::Json summary;
  std::size_t updates = 0;
  std::size_t skipped_updates = 0;
  bool incident_cascade = false;  // more than 5% of updates skipped
};

/// One run_stream per seed into out_dir/seed_<s>/ plus summary.json.
TrainOutcome cmd_train(const std::filesystem::path& dataset_file, const train::TrainConfig& cfg,
                       const std::filesystem::path& out_dir, std::ostream* log = nullptr);

// Evaluation ----------------------------------------------------------------

/// Produces MC-mean predictions and uncertainties for a set of windows.
using Predictor = std::function<train::Evaluation(const channel::CsiDataset&, std::span<const std::size_t>)>;

Predictor checkpoint_predictor(model::LstmPredictor model, int k_passes, std::uint64_t eval_seed);
Predictor persistence_predictor();

struct EvalOptions {
  double val_fraction = 0.1;
  int calibration_bins = 10;
  int histogram_bins = 20;
  int tx = 0;
  int rx = 0;
};

/// Writes cdf.csv, hist.csv, per_rb.csv, calibration.csv, magnitude.csv and
/// summary.json for the validation windows; returns the summary.
config::Json cmd_eval(const channel::CsiDataset& dataset, const Predictor& predictor, const EvalOptions& opts,
                      const std::filesystem::path& out_dir);

/// Checks that a checkpoint fits the dataset; the message names both shapes.
void check_dimensions(const model::LstmPredictor& model, const channel::CsiDataset& dataset);

// Ablation ------------------------------------------------------------------

struct GridConfig {
  std::vector<train::Policy> policies{train::Policy::Uwer, train::Policy::UniformEr, train::Policy::LarsOnly,
                                      train::Policy::NoReplay};
  std::vector<int> buffers{1000, 3000, 8000};
  std::vector<double> betas{0.5, 1.0, 2.0};
  train::TrainConfig base;  // seeds come from here
};
GridConfig grid_from_json(const config::Json& j);
config::Json to_json(const GridConfig& grid);

struct AblationRow {
  std::string policy;
  int buffer = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double val_nmse_db_pooled = 0.0;
  double forgetting_std = 0.0;
  double forgetting_as_written = 0.0;
  double pearson_r = 0.0;  // NaN when undefined
  std::string error;       // non-empty when the arm failed
};

/// Runs every policy x buffer x beta x seed arm and writes ablation.csv.
std::vector<AblationRow> cmd_ablate(const std::filesystem::path& dataset_file, const GridConfig& grid,
                                    const std::filesystem::path& out_dir, std::ostream* log = nullptr);

/// Full command line with the stable exit-code contract.
int main(int argc, char** argv);

}  // namespace uwer::cli
