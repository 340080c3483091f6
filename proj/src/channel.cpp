#include "uwer/channel.hpp"

#include <cmath>
#include <numbers>

namespace uwer::channel {

using math::CMat;
using math::Cplx;

void ChannelConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(carrier_hz)) throw ConfigError("carrier_hz", "must be > 0");
  if (!positive(bandwidth_hz)) throw ConfigError("bandwidth_hz", "must be > 0");
  if (n_tx < 1 || n_tx > 16) throw ConfigError("n_tx", "must be in [1, 16]");
  if (n_rx < 1 || n_rx > 16) throw ConfigError("n_rx", "must be in [1, 16]");
  if (n_rb < 1) throw ConfigError("n_rb", "must be >= 1");
  if (!positive(sample_interval_s)) throw ConfigError("sample_interval_s", "must be > 0");
  if (n_paths < 1) throw ConfigError("n_paths", "must be >= 1");
  if (!positive(tap_spacing_s)) throw ConfigError("tap_spacing_s", "must be > 0");
  if (!positive(rms_delay_spread_s)) throw ConfigError("rms_delay_spread_s", "must be > 0");
  if (!positive(antenna_spacing_wavelengths)) throw ConfigError("antenna_spacing_wavelengths", "must be > 0");
  if (lookback < 1) throw ConfigError("lookback", "must be >= 1");
  if (n_samples <= lookback) throw ConfigError("n_samples", "must exceed lookback");
  if (env_speeds_kmh.empty()) throw ConfigError("env_speeds_kmh", "needs at least one environment");
  if (env_speeds_kmh.size() > 65535) throw ConfigError("env_speeds_kmh", "too many environments");
  for (double v : env_speeds_kmh)
    if (!positive(v)) throw ConfigError("env_speeds_kmh", "every speed must be > 0");
  if (static_cast<std::size_t>(n_samples) < env_speeds_kmh.size())
    throw ConfigError("n_samples", "fewer snapshots than environments");
}

double ChannelConfig::doppler_hz(double speed_kmh) const {
  return (speed_kmh / 3.6) * carrier_hz / kSpeedOfLight;
}

std::size_t ChannelConfig::frame_size() const {
  return 2 * static_cast<std::size_t>(n_tx) * static_cast<std::size_t>(n_rb) * static_cast<std::size_t>(n_rx);
}

int ChannelConfig::env_start(int s) const {
  const auto envs = static_cast<long long>(env_speeds_kmh.size());
  return static_cast<int>(static_cast<long long>(s) * n_samples / envs);
}

double jakes_rho(double f_doppler_hz, double dt_s) {
  if (!(f_doppler_hz >= 0.0)) throw std::invalid_argument("jakes_rho: negative Doppler");
  if (!(dt_s > 0.0)) throw std::invalid_argument("jakes_rho: sample interval must be > 0");
  return math::bessel_j0(2.0 * std::numbers::pi * f_doppler_hz * dt_s);
}

namespace {

void normalize_powers(std::vector<double>& powers) {
  double total = 0.0;
  for (double p : powers) total += p;
  for (double& p : powers) p /= total;
}

}  // namespace

PowerDelayProfile exp_pdp(int n_paths, double tap_spacing_s, double tau_rms_s) {
  if (n_paths < 1) throw std::invalid_argument("exp_pdp: n_paths must be >= 1");
  if (!(tap_spacing_s > 0.0) || !(tau_rms_s > 0.0)) throw std::invalid_argument("exp_pdp: spacing and tau_rms must be > 0");
  PowerDelayProfile pdp;
  pdp.delays.resize(n_paths);
  pdp.powers.resize(n_paths);
  for (int l = 0; l < n_paths; ++l) {
    pdp.delays[l] = l * tap_spacing_s;
    pdp.powers[l] = std::exp(-pdp.delays[l] / tau_rms_s);
  }
  normalize_powers(pdp.powers);
  return pdp;
}

CMat ula_correlation(int n_antennas, double spacing_wavelengths) {
  CMat r(n_antennas, n_antennas);
  for (int i = 0; i < n_antennas; ++i)
    for (int j = 0; j < n_antennas; ++j)
      r(i, j) = math::bessel_j0(2.0 * std::numbers::pi * spacing_wavelengths * std::abs(i - j));
  return r;
}

SpatialRoots spatial_roots(const ChannelConfig& config) {
  try {
    return {math::mat_sqrt_psd(ula_correlation(config.n_rx, config.antenna_spacing_wavelengths)),
            math::mat_sqrt_psd(ula_correlation(config.n_tx, config.antenna_spacing_wavelengths))};
  } catch (const std::domain_error& e) {
    throw std::logic_error(std::string("spatial_roots: Toeplitz J0 correlation not PSD: ") + e.what());
  }
}

MultipathState MultipathState::initial(const PowerDelayProfile& pdp, int n_rx, int n_tx, double rho, math::Rng& rng) {
  MultipathState state;
  state.powers = pdp.powers;
  state.delays = pdp.delays;
  state.rho = rho;
  state.gains.reserve(pdp.powers.size());
  for (double p : pdp.powers) {
    CMat g(n_rx, n_tx);
    for (auto& v : g.data()) v = math::gaussian_complex(rng, p);
    state.gains.push_back(std::move(g));
  }
  return state;
}

void ar1_step(MultipathState& state, math::Rng& rng) {
  const double rho = state.rho;
  const double innovation = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (std::size_t l = 0; l < state.gains.size(); ++l) {
    for (auto& g : state.gains[l].data()) {
      const Cplx w = math::gaussian_complex(rng, state.powers[l]);
      g = rho * g + innovation * w;
    }
  }
}

std::vector<double> tone_offsets(const ChannelConfig& config) {
  std::vector<double> out(config.n_rb);
  const double spacing = config.bandwidth_hz / config.n_rb;
  for (int k = 0; k < config.n_rb; ++k) out[k] = (k - 0.5 * (config.n_rb - 1)) * spacing;
  return out;
}

std::vector<CMat> freq_response(const MultipathState& state, const CMat& rx_half, const CMat& tx_half,
                                std::span<const double> tone_offsets_hz) {
  if (state.gains.empty()) throw std::invalid_argument("freq_response: no paths");
  const std::size_t nr = state.gains.front().rows();
  const std::size_t nt = state.gains.front().cols();
  std::vector<CMat> out;
  out.reserve(tone_offsets_hz.size());
  for (double f : tone_offsets_hz) {
    CMat sum(nr, nt);
    for (std::size_t l = 0; l < state.gains.size(); ++l) {
      const Cplx phasor = std::polar(1.0, -2.0 * std::numbers::pi * f * state.delays[l]);
      const auto g = state.gains[l].data();
      auto acc = sum.data();
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * phasor;
    }
    out.push_back(rx_half * sum * tx_half);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CsiDataset

CsiDataset::CsiDataset(ChannelConfig config, std::vector<float> frames, std::vector<std::uint16_t> env_ids,
                       double norm_scale)
    : config_(std::move(config)),
      frame_size_(config_.frame_size()),
      frames_(std::move(frames)),
      env_ids_(std::move(env_ids)),
      norm_scale_(norm_scale) {
  if (frames_.size() % frame_size_ != 0) throw std::invalid_argument("CsiDataset: frame buffer not a multiple of frame size");
  if (frame_count() != env_ids_.size() + lookback())
    throw std::invalid_argument("CsiDataset: window count must equal frames - lookback");
}

std::span<const float> CsiDataset::x(std::size_t window) const {
  if (window >= window_count()) throw std::out_of_range("CsiDataset::x");
  return std::span<const float>(frames_).subspan(window * frame_size_, lookback() * frame_size_);
}

std::span<const float> CsiDataset::y(std::size_t window) const {
  if (window >= window_count()) throw std::out_of_range("CsiDataset::y");
  return frame(window + lookback());
}

std::span<const float> CsiDataset::frame(std::size_t t) const {
  return std::span<const float>(frames_).subspan(t * frame_size_, frame_size_);
}

std::vector<std::size_t> CsiDataset::env_windows(int env) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < env_ids_.size(); ++i)
    if (env_ids_[i] == env) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Generation

CsiDataset generate_dataset(const ChannelConfig& config, RawResponses* raw) {
  config.validate();
  const SpatialRoots roots = spatial_roots(config);
  const std::vector<double> tones = tone_offsets(config);
  const PowerDelayProfile grid = exp_pdp(config.n_paths, config.tap_spacing_s, config.rms_delay_spread_s);
  const std::size_t fsize = config.frame_size();
  const auto n = static_cast<std::size_t>(config.n_samples);

  std::vector<double> stream(n * fsize);
  std::vector<int> snapshot_env(n);
  if (raw) raw->snapshots.assign(n, {});

  for (int s = 0; s < config.env_count(); ++s) {
    // Trajectory change: new Doppler, jittered tap delays and fresh scatterers.
    math::Rng rng = math::Rng::derive(config.seed, "dataset/env", static_cast<std::uint64_t>(s));
    PowerDelayProfile pdp = grid;
    for (std::size_t l = 1; l < pdp.delays.size(); ++l)
      pdp.delays[l] += (rng.uniform() - 0.5) * config.tap_spacing_s;
    for (std::size_t l = 0; l < pdp.delays.size(); ++l)
      pdp.powers[l] = std::exp(-pdp.delays[l] / config.rms_delay_spread_s);
    normalize_powers(pdp.powers);

    const double rho = jakes_rho(config.doppler_hz(config.env_speeds_kmh[s]), config.sample_interval_s);
    MultipathState state = MultipathState::initial(pdp, config.n_rx, config.n_tx, rho, rng);

    for (int t = config.env_start(s); t < config.env_start(s + 1); ++t) {
      if (t > config.env_start(s)) ar1_step(state, rng);
      snapshot_env[t] = s;
      std::vector<CMat> h = freq_response(state, roots.rx_half, roots.tx_half, tones);
      double* frame = stream.data() + static_cast<std::size_t>(t) * fsize;
      for (int k = 0; k < config.n_rb; ++k)
        for (int tx = 0; tx < config.n_tx; ++tx)
          for (int rx = 0; rx < config.n_rx; ++rx) {
            const Cplx v = h[k](rx, tx);
            frame[frame_index(0, tx, k, rx, config.n_tx, config.n_rb, config.n_rx)] = v.real();
            frame[frame_index(1, tx, k, rx, config.n_tx, config.n_rb, config.n_rx)] = v.imag();
          }
      if (raw) raw->snapshots[t] = std::move(h);
    }
  }

  // One global scale so the mean power per complex entry is 1.
  double power = 0.0;
  for (double v : stream) power += v * v;
  power /= static_cast<double>(n * fsize / 2);
  const double scale = 1.0 / std::sqrt(power);

  std::vector<float> frames(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) frames[i] = static_cast<float>(stream[i] * scale);

  const std::size_t windows = n - static_cast<std::size_t>(config.lookback);
  std::vector<std::uint16_t> env_ids(windows);
  for (std::size_t i = 0; i < windows; ++i)
    env_ids[i] = static_cast<std::uint16_t>(snapshot_env[i + static_cast<std::size_t>(config.lookback)]);

  return CsiDataset(config, std::move(frames), std::move(env_ids), scale);
}

}  // namespace uwer::channel
