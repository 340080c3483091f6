#pragma once

// Evaluation quantities and the CSV data behind the result figures.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uwer::metrics {

enum class Split { Train, Val };
const char* to_string(Split split);

struct SampleRecord {
  std::int64_t step = 0;
  int env_id = 0;
  Split split = Split::Train;
  double nmse = 0.0;
  double uncertainty = 0.0;
};

/// ||h_hat - h||^2 / ||h||^2 over all real elements. Throws on shape mismatch
/// or an all-zero target.
template <typename P, typename T>
double nmse(std::span<const P> h_hat, std::span<const T> h) {
  if (h_hat.size() != h.size()) throw std::invalid_argument("nmse: shape mismatch");
  double err = 0.0;
  double energy = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double t = static_cast<double>(h[i]);
    const double d = static_cast<double>(h_hat[i]) - t;
    err += d * d;
    energy += t * t;
  }
  if (!(energy > 0.0)) throw std::domain_error("nmse: zero-norm target");
  return err / energy;
}

inline constexpr double kDbFloor = -120.0;

struct DbValue {
  double db = 0.0;
  bool clamped = false;  // exact zero mapped to kDbFloor
};

/// 10 log10(x); x == 0 clamps to kDbFloor with the flag set.
DbValue nmse_db(double nmse_lin);

/// Geometry of one stacked frame [2, N_t, N_rb, N_r].
struct FrameLayout {
  int n_tx = 0;
  int n_rb = 0;
  int n_rx = 0;
  std::size_t size() const { return 2 * static_cast<std::size_t>(n_tx) * n_rb * n_rx; }
  int rb_of(std::size_t index) const { return static_cast<int>((index / static_cast<std::size_t>(n_rx)) % n_rb); }
};

struct PredictionPair {
  std::vector<double> predicted;
  std::vector<double> target;
};

struct PerRbNmse {
  std::vector<double> linear;
  std::vector<double> db;
  std::vector<bool> clamped;
  std::vector<double> energy;  // target energy per RB
  std::vector<double> error;   // error energy per RB
};

/// NMSE per RB index, pooled over every sample and antenna pair.
PerRbNmse per_rb_nmse(std::span<const PredictionPair> pairs, const FrameLayout& layout);

struct CalibrationCurve {
  std::vector<double> bin_centers;  // mean uncertainty inside each bin
  std::vector<double> bin_mean_nmse;
  std::vector<std::size_t> counts;
  std::optional<double> pearson_r;  // empty when undefined
  std::string pearson_error;
};

/// Equal-count (quantile) bins over uncertainty. With a constant uncertainty
/// the correlation is undefined and a single bin is returned.
CalibrationCurve calibration_curve(std::span<const double> uncertainty, std::span<const double> nmse, int n_bins);

struct HistogramRow {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct CdfRow {
  double value = 0.0;
  double cdf = 0.0;
};

struct Distribution {
  std::vector<HistogramRow> histogram;
  std::vector<CdfRow> cdf;
};

/// Equal-width histogram over [min, max] (max lands in the last bin) and the
/// empirical CDF at the sorted values.
Distribution distribution_export(std::span<const double> values, int n_bins);

/// |H_k| per RB for one antenna pair, from a stacked real frame.
std::vector<double> magnitude_map(std::span<const float> frame, const FrameLayout& layout, int tx, int rx);
std::vector<double> magnitude_map(std::span<const double> frame, const FrameLayout& layout, int tx, int rx);

// CSV writers (exact headers).
void write_cdf_csv(const std::filesystem::path& path, std::span<const CdfRow> rows);
void write_hist_csv(const std::filesystem::path& path, std::span<const HistogramRow> rows);
void write_per_rb_csv(const std::filesystem::path& path, const PerRbNmse& per_rb);
void write_calibration_csv(const std::filesystem::path& path, const CalibrationCurve& curve);
void write_magnitude_csv(const std::filesystem::path& path, std::span<const double> magnitudes);

}  // namespace uwer::metrics
