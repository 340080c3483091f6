#pragma once

// Non-stationary MIMO CSI stream generator and the windowed learning-task
// dataset built from it.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uwer/mathcore.hpp"

namespace uwer::channel {

inline constexpr double kSpeedOfLight = 299792458.0;

/// Raised for invalid configuration values; field() names the offender.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ChannelConfig {
  double carrier_hz = 5e9;
  double bandwidth_hz = 100e6;
  int n_tx = 8;
  int n_rx = 2;
  int n_rb = 18;
  double subcarrier_spacing_hz = 30e3;  // informational only
  double sample_interval_s = 1e-3;
  int n_paths = 12;
  double tap_spacing_s = 30e-9;
  double rms_delay_spread_s = 100e-9;
  double antenna_spacing_wavelengths = 0.5;
  int lookback = 32;
  int n_samples = 8000;
  std::vector<double> env_speeds_kmh{30.0, 60.0, 90.0, 120.0};
  std::uint64_t seed = 0;

  void validate() const;
  double doppler_hz(double speed_kmh) const;
  int env_count() const { return static_cast<int>(env_speeds_kmh.size()); }
  /// Real values per snapshot: 2 * n_tx * n_rb * n_rx.
  std::size_t frame_size() const;
  /// First snapshot of environment s (floor(s * N / S)); index S gives N.
  int env_start(int s) const;
};

/// rho = J0(2 pi f_D dt).
double jakes_rho(double f_doppler_hz, double dt_s);

struct PowerDelayProfile {
  std::vector<double> powers;  // sums to 1
  std::vector<double> delays;  // seconds
};

/// Exponential profile on a uniform tap grid: tau_l = l * spacing,
/// p_l proportional to exp(-tau_l / tau_rms), normalized.
PowerDelayProfile exp_pdp(int n_paths, double tap_spacing_s, double tau_rms_s);

struct SpatialRoots {
  math::CMat rx_half;
  math::CMat tx_half;
};

/// Toeplitz correlation R(i,j) = J0(2 pi d |i-j|) per array (Clarke model for a
/// ULA with spacing d wavelengths), returned as PSD square roots.
math::CMat ula_correlation(int n_antennas, double spacing_wavelengths);
SpatialRoots spatial_roots(const ChannelConfig& config);

/// Per-path white N_r x N_t gain matrices evolving as independent AR(1)
/// processes with a common coefficient rho.
struct MultipathState {
  std::vector<double> powers;
  std::vector<double> delays;
  std::vector<math::CMat> gains;
  double rho = 1.0;

  /// Draws every gain entry from CN(0, p_l).
  static MultipathState initial(const PowerDelayProfile& pdp, int n_rx, int n_tx, double rho, math::Rng& rng);
};

/// g <- rho g + sqrt(1 - rho^2) w, w ~ CN(0, p_l), for every entry of every path.
void ar1_step(MultipathState& state, math::Rng& rng);

/// Band-centred RB tone offsets f_k = (k - (N_rb - 1)/2) * bandwidth / N_rb.
std::vector<double> tone_offsets(const ChannelConfig& config);

/// H_k = R_rx^{1/2} (sum_l G_l e^{-j 2 pi f_k tau_l}) R_tx^{1/2} for every tone.
std::vector<math::CMat> freq_response(const MultipathState& state, const math::CMat& rx_half,
                                      const math::CMat& tx_half, std::span<const double> tone_offsets_hz);

/// Index of (part, tx, rb, rx) inside one stacked real frame [2, N_t, N_rb, N_r].
inline std::size_t frame_index(int part, int tx, int rb, int rx, int n_tx, int n_rb, int n_rx) {
  return ((static_cast<std::size_t>(part) * n_tx + tx) * n_rb + rb) * n_rx + rx;
}

/// Windowed one-step-ahead dataset. Snapshots are stored once as stacked real
/// frames; window i covers frames [i, i + T) and its target is frame i + T, so
/// the [N_w, T, ...] input tensor is a set of overlapping views.
class CsiDataset {
 public:
  CsiDataset() = default;
  CsiDataset(ChannelConfig config, std::vector<float> frames, std::vector<std::uint16_t> env_ids, double norm_scale);

  std::size_t window_count() const { return env_ids_.size(); }
  std::size_t lookback() const { return static_cast<std::size_t>(config_.lookback); }
  std::size_t frame_size() const { return frame_size_; }
  std::size_t frame_count() const { return frames_.size() / frame_size_; }
  int env_count() const { return config_.env_count(); }

  /// [T, frame_size] row-major input of window i.
  std::span<const float> x(std::size_t window) const;
  /// [frame_size] target of window i.
  std::span<const float> y(std::size_t window) const;
  std::span<const float> frame(std::size_t t) const;
  int env_id(std::size_t window) const { return env_ids_.at(window); }
  std::span<const std::uint16_t> env_ids() const { return env_ids_; }
  std::span<const float> frames() const { return frames_; }

  double norm_scale() const { return norm_scale_; }
  const ChannelConfig& config() const { return config_; }

  /// Window indices of one environment in time order.
  std::vector<std::size_t> env_windows(int env) const;

 private:
  ChannelConfig config_;
  std::size_t frame_size_ = 1;
  std::vector<float> frames_;
  std::vector<std::uint16_t> env_ids_;
  double norm_scale_ = 1.0;
};

/// Unnormalized complex responses as produced by the simulator, kept for
/// inspection (snapshot-major, then tone). Only filled on request.
struct RawResponses {
  std::vector<std::vector<math::CMat>> snapshots;
};

CsiDataset generate_dataset(const ChannelConfig& config, RawResponses* raw = nullptr);

// UWER1 binary file ---------------------------------------------------------

/// Writes the dataset (UWERDS01 layout) and returns the FNV-1a 64 checksum of
/// the written bytes.
std::uint64_t write_dataset(const CsiDataset& dataset, const std::filesystem::path& path);

/// Reads a UWERDS01 file. The channel parameters that the binary header does
/// not carry come from `config`; header dims must agree with it. Throws
/// std::runtime_error on malformed or non-sliding content.
CsiDataset read_dataset(const std::filesystem::path& path, const ChannelConfig& config);

std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace uwer::channel
