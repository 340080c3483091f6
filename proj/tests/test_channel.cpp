#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "uwer/channel.hpp"

using namespace uwer;
using namespace uwer::channel;
using math::Cplx;
using math::CMat;

namespace {

ChannelConfig small_config() {
  ChannelConfig c;
  c.n_tx = 4;
  c.n_rb = 6;
  c.n_rx = 2;
  c.lookback = 16;
  c.n_samples = 2000;
  c.seed = 3;
  return c;
}

// Lag-m autocorrelation of a complex sequence, normalized by its power.
double lag_corr(const std::vector<Cplx>& z, int m) {
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < z.size(); ++t) den += std::norm(z[t]);
  for (std::size_t t = m; t < z.size(); ++t) num += (z[t] * std::conj(z[t - m])).real();
  return num / den * static_cast<double>(z.size()) / static_cast<double>(z.size() - m);
}

MultipathState scalar_state(double rho, std::uint64_t seed) {
  PowerDelayProfile pdp{{1.0}, {0.0}};
  math::Rng rng(seed);
  return MultipathState::initial(pdp, 1, 1, rho, rng);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("uwer_test_channel_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

// Config ---------------------------------------------------------------------

TEST(ChannelConfig, DopplerAtSixtyKmh) {
  ChannelConfig c;
  const double fd = c.doppler_hz(60.0);
  EXPECT_GE(fd, 277.0);
  EXPECT_LE(fd, 279.0);
}

TEST(ChannelConfig, DefaultsMatchTableValues) {
  ChannelConfig c;
  EXPECT_EQ(c.carrier_hz, 5e9);
  EXPECT_EQ(c.bandwidth_hz, 100e6);
  EXPECT_EQ(c.n_tx, 8);
  EXPECT_EQ(c.n_rb, 18);
  EXPECT_EQ(c.lookback, 32);
  EXPECT_EQ(c.n_samples, 8000);
  EXPECT_EQ(c.frame_size(), 576u);
}

TEST(ChannelConfig, ErrorsNameTheField) {
  auto field_of = [](ChannelConfig c) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  ChannelConfig c;
  c.n_samples = c.lookback;
  EXPECT_EQ(field_of(c), "n_samples");
  c = {};
  c.n_paths = 0;
  EXPECT_EQ(field_of(c), "n_paths");
  c = {};
  c.lookback = 0;
  EXPECT_EQ(field_of(c), "lookback");
  c = {};
  c.env_speeds_kmh = {30.0, -1.0};
  EXPECT_EQ(field_of(c), "env_speeds_kmh");
  c = {};
  c.env_speeds_kmh.clear();
  EXPECT_EQ(field_of(c), "env_speeds_kmh");
  EXPECT_EQ(field_of(ChannelConfig{}), "<none>");
}

TEST(ChannelConfig, EnvironmentBoundaries) {
  ChannelConfig c;
  EXPECT_EQ(c.env_start(0), 0);
  EXPECT_EQ(c.env_start(1), 2000);
  EXPECT_EQ(c.env_start(2), 4000);
  EXPECT_EQ(c.env_start(3), 6000);
  EXPECT_EQ(c.env_start(4), 8000);
}

// Jakes / PDP / spatial ------------------------------------------------------

TEST(JakesRho, Values) {
  EXPECT_EQ(jakes_rho(0.0, 1e-3), 1.0);
  EXPECT_NEAR(jakes_rho(277.8, 1e-3), 0.37166089700280975, 1e-9);
  const double fd_zero = 2.404825557695773 / (2.0 * std::numbers::pi * 1e-3);
  EXPECT_LT(std::abs(jakes_rho(fd_zero, 1e-3)), 1e-5);
  EXPECT_THROW(jakes_rho(-1.0, 1e-3), std::invalid_argument);
}

TEST(ExpPdp, SingleTap) {
  const auto pdp = exp_pdp(1, 30e-9, 100e-9);
  ASSERT_EQ(pdp.powers.size(), 1u);
  EXPECT_EQ(pdp.powers[0], 1.0);
  EXPECT_EQ(pdp.delays[0], 0.0);
}

TEST(ExpPdp, RatioAndNormalization) {
  const auto pdp = exp_pdp(2, 100e-9, 100e-9);
  EXPECT_NEAR(pdp.powers[1] / pdp.powers[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(pdp.delays[1], 100e-9, 1e-20);
  for (int n : {1, 3, 12, 40}) {
    const auto p = exp_pdp(n, 30e-9, 100e-9);
    double sum = 0.0;
    for (double v : p.powers) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(SpatialRoots, WideSpacingIsNearIdentity) {
  ChannelConfig c;
  c.antenna_spacing_wavelengths = 1000.0;
  const auto roots = spatial_roots(c);
  for (std::size_t i = 0; i < roots.tx_half.rows(); ++i)
    for (std::size_t j = 0; j < roots.tx_half.cols(); ++j)
      if (i != j) EXPECT_LT(std::abs(roots.tx_half(i, j)), 0.05);
}

TEST(SpatialRoots, HalfWavelengthPair) {
  const CMat r = ula_correlation(2, 0.5);
  EXPECT_NEAR(r(0, 1).real(), -0.30424217764409386, 1e-12);
  ChannelConfig c;
  const auto roots = spatial_roots(c);
  EXPECT_LT(math::max_abs_diff(roots.rx_half * roots.rx_half.adjoint(), r), 1e-8);
  EXPECT_LT(math::max_abs_diff(roots.tx_half * roots.tx_half.adjoint(), ula_correlation(8, 0.5)), 1e-8);
}

// AR(1) --------------------------------------------------------------------

TEST(Ar1, RhoOneFreezesState) {
  auto pdp = exp_pdp(3, 30e-9, 100e-9);
  math::Rng rng(1);
  MultipathState s = MultipathState::initial(pdp, 2, 4, 1.0, rng);
  const auto before = s.gains;
  for (int i = 0; i < 10; ++i) ar1_step(s, rng);
  for (std::size_t l = 0; l < before.size(); ++l) EXPECT_EQ(math::max_abs_diff(before[l], s.gains[l]), 0.0);
}

TEST(Ar1, RhoZeroDecorrelates) {
  PowerDelayProfile pdp{{1.0}, {0.0}};
  math::Rng rng(2);
  MultipathState s = MultipathState::initial(pdp, 10, 10, 0.0, rng);
  double num = 0.0, den = 0.0;
  for (int step = 0; step < 1000; ++step) {
    const CMat old = s.gains[0];
    ar1_step(s, rng);
    for (std::size_t i = 0; i < old.data().size(); ++i) {
      num += (s.gains[0].data()[i] * std::conj(old.data()[i])).real();
      den += std::norm(old.data()[i]);
    }
  }
  EXPECT_LT(std::abs(num / den), 0.01);
}

TEST(Ar1, LagCorrelationMatchesRhoPowers) {
  const double rho = 0.372;
  MultipathState s = scalar_state(rho, 8);
  math::Rng rng(9);
  std::vector<Cplx> z;
  z.reserve(100000);
  for (int t = 0; t < 100000; ++t) {
    z.push_back(s.gains[0](0, 0));
    ar1_step(s, rng);
  }
  const double r1 = lag_corr(z, 1);
  EXPECT_GE(r1, 0.352);
  EXPECT_LE(r1, 0.392);
  for (int m = 1; m <= 3; ++m) EXPECT_NEAR(lag_corr(z, m), std::pow(rho, m), 0.03) << "lag " << m;
}

TEST(Ar1, StationaryVariancePreserved) {
  MultipathState s = scalar_state(0.9, 4);
  math::Rng rng(5);
  double p = 0.0;
  const int n = 200000;
  for (int t = 0; t < n; ++t) {
    ar1_step(s, rng);
    p += std::norm(s.gains[0](0, 0));
  }
  EXPECT_NEAR(p / n, 1.0, 0.05);
}

TEST(Energy, UncolouredGainAtCentreHasUnitPower) {
  const auto pdp = exp_pdp(12, 30e-9, 100e-9);
  math::Rng rng(17);
  const CMat eye = CMat::identity(1);
  const double centre[] = {0.0};
  double p = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    MultipathState s = MultipathState::initial(pdp, 1, 1, 1.0, rng);
    p += std::norm(freq_response(s, eye, eye, centre)[0](0, 0));
  }
  EXPECT_NEAR(p / n, 1.0, 0.03);
}

// Frequency response ---------------------------------------------------------

TEST(FreqResponse, SingleZeroDelayPathIsFlat) {
  PowerDelayProfile pdp{{1.0}, {0.0}};
  math::Rng rng(3);
  MultipathState s = MultipathState::initial(pdp, 2, 4, 0.5, rng);
  const auto tones = tone_offsets(ChannelConfig{});
  const auto h = freq_response(s, CMat::identity(2), CMat::identity(4), tones);
  for (std::size_t k = 1; k < h.size(); ++k) EXPECT_EQ(math::max_abs_diff(h[k], h[0]), 0.0);
}

TEST(FreqResponse, TwoRayInterferencePeriod) {
  const double tau = 50e-9;
  MultipathState s;
  s.powers = {0.5, 0.5};
  s.delays = {0.0, tau};
  s.gains = {CMat(1, 1), CMat(1, 1)};
  s.gains[0](0, 0) = s.gains[1](0, 0) = Cplx(1.0, 0.0);
  const CMat eye = CMat::identity(1);
  std::vector<double> f;
  for (int i = 0; i < 50; ++i) f.push_back(-3e7 + 1.3e6 * i);
  std::vector<double> shifted = f;
  for (double& v : shifted) v += 1.0 / tau;
  const auto a = freq_response(s, eye, eye, f);
  const auto b = freq_response(s, eye, eye, shifted);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double expected = 2.0 + 2.0 * std::cos(2.0 * std::numbers::pi * f[i] * tau);
    EXPECT_NEAR(std::norm(a[i](0, 0)), expected, 1e-9);
    EXPECT_NEAR(std::norm(a[i](0, 0)), std::norm(b[i](0, 0)), 1e-9);
  }
}

TEST(FreqResponse, IdentityColouringEqualsUncolouredSum) {
  const auto pdp = exp_pdp(4, 30e-9, 100e-9);
  math::Rng rng(6);
  MultipathState s = MultipathState::initial(pdp, 2, 3, 0.5, rng);
  const double tones[] = {-1e7, 0.0, 2.5e7};
  const auto h = freq_response(s, CMat::identity(2), CMat::identity(3), tones);
  for (std::size_t k = 0; k < 3; ++k) {
    CMat sum(2, 3);
    for (std::size_t l = 0; l < 4; ++l) {
      CMat g = s.gains[l];
      g *= std::polar(1.0, -2.0 * std::numbers::pi * tones[k] * s.delays[l]);
      sum += g;
    }
    EXPECT_LT(math::max_abs_diff(h[k], sum), 1e-14);
  }
}

TEST(ToneOffsets, BandCentred) {
  ChannelConfig c;
  const auto f = tone_offsets(c);
  ASSERT_EQ(f.size(), 18u);
  EXPECT_NEAR(f.front() + f.back(), 0.0, 1e-6);
  EXPECT_NEAR(f[1] - f[0], 100e6 / 18, 1e-6);
}

// Dataset --------------------------------------------------------------------

TEST(Dataset, DefaultShape) {
  const CsiDataset ds = generate_dataset(ChannelConfig{});
  EXPECT_EQ(ds.window_count(), 7968u);
  EXPECT_EQ(ds.lookback(), 32u);
  EXPECT_EQ(ds.frame_size(), 576u);
  EXPECT_EQ(ds.x(0).size(), 32u * 576u);
  EXPECT_EQ(ds.y(7967).size(), 576u);
  EXPECT_THROW(ds.x(7968), std::out_of_range);
}

TEST(Dataset, Deterministic) {
  const auto a = generate_dataset(small_config());
  const auto b = generate_dataset(small_config());
  ASSERT_EQ(a.frames().size(), b.frames().size());
  EXPECT_TRUE(std::equal(a.frames().begin(), a.frames().end(), b.frames().begin()));
  EXPECT_EQ(a.norm_scale(), b.norm_scale());
  ChannelConfig other = small_config();
  other.seed = 4;
  const auto c = generate_dataset(other);
  EXPECT_FALSE(std::equal(a.frames().begin(), a.frames().end(), c.frames().begin()));
}

TEST(Dataset, WindowConsistency) {
  const auto ds = generate_dataset(small_config());
  const std::size_t T = ds.lookback(), F = ds.frame_size();
  for (std::size_t i = 0; i + 1 < ds.window_count(); ++i) {
    const auto next_last = ds.x(i + 1).subspan((T - 1) * F, F);
    const auto y = ds.y(i);
    ASSERT_TRUE(std::equal(y.begin(), y.end(), next_last.begin())) << "window " << i;
  }
}

TEST(Dataset, EnvIdsFollowTargets) {
  const auto ds = generate_dataset(small_config());
  const auto& c = ds.config();
  for (std::size_t i = 0; i < ds.window_count(); ++i) {
    const int t = static_cast<int>(i + ds.lookback());
    int expected = 0;
    while (t >= c.env_start(expected + 1)) ++expected;
    ASSERT_EQ(ds.env_id(i), expected);
  }
  std::size_t total = 0;
  for (int s = 0; s < ds.env_count(); ++s) total += ds.env_windows(s).size();
  EXPECT_EQ(total, ds.window_count());
}

TEST(Dataset, GlobalNormalization) {
  const auto ds = generate_dataset(small_config());
  double p = 0.0;
  for (float v : ds.frames()) p += static_cast<double>(v) * v;
  const double per_entry = p / (ds.frames().size() / 2);
  EXPECT_GE(per_entry, 0.9);
  EXPECT_LE(per_entry, 1.1);
}

TEST(Dataset, SegmentLagCorrelationMatchesJakes) {
  ChannelConfig c = small_config();
  c.n_samples = 8000;
  RawResponses raw;
  const auto ds = generate_dataset(c, &raw);
  for (int s = 0; s < c.env_count(); ++s) {
    const double rho = jakes_rho(c.doppler_hz(c.env_speeds_kmh[s]), c.sample_interval_s);
    double num = 0.0, den = 0.0;
    for (int t = c.env_start(s) + 1; t < c.env_start(s + 1); ++t)
      for (int k = 0; k < c.n_rb; ++k)
        for (std::size_t e = 0; e < raw.snapshots[t][k].data().size(); ++e) {
          const Cplx now = raw.snapshots[t][k].data()[e], prev = raw.snapshots[t - 1][k].data()[e];
          num += (now * std::conj(prev)).real();
          den += 0.5 * (std::norm(now) + std::norm(prev));
        }
    EXPECT_NEAR(num / den, rho, 0.03) << "environment " << s;
  }
}

TEST(Dataset, SegmentQuartersHaveStablePower) {
  ChannelConfig c = small_config();
  c.n_samples = 8000;
  RawResponses raw;
  generate_dataset(c, &raw);
  for (int s = 0; s < c.env_count(); ++s) {
    const int a = c.env_start(s), b = c.env_start(s + 1);
    auto power = [&](int from, int to) {
      double p = 0.0;
      std::size_t n = 0;
      for (int t = from; t < to; ++t)
        for (const auto& h : raw.snapshots[t])
          for (const auto& v : h.data()) {
            p += std::norm(v);
            ++n;
          }
      return p / n;
    };
    const double whole = power(a, b);
    for (int q = 0; q < 4; ++q) {
      const double part = power(a + q * (b - a) / 4, a + (q + 1) * (b - a) / 4);
      EXPECT_GE(part / whole, 0.8) << "env " << s << " quarter " << q;
      EXPECT_LE(part / whole, 1.2) << "env " << s << " quarter " << q;
    }
  }
}

TEST(Dataset, FramesAreScaledRawResponses) {
  const ChannelConfig c = small_config();
  RawResponses raw;
  const auto ds = generate_dataset(c, &raw);
  for (std::size_t t : {0u, 17u, 1999u}) {
    const auto f = ds.frame(t);
    for (int k = 0; k < c.n_rb; ++k)
      for (int tx = 0; tx < c.n_tx; ++tx)
        for (int rx = 0; rx < c.n_rx; ++rx) {
          const Cplx h = raw.snapshots[t][k](rx, tx) * ds.norm_scale();
          EXPECT_NEAR(f[frame_index(0, tx, k, rx, c.n_tx, c.n_rb, c.n_rx)], h.real(), 1e-5);
          EXPECT_NEAR(f[frame_index(1, tx, k, rx, c.n_tx, c.n_rb, c.n_rx)], h.imag(), 1e-5);
        }
  }
}

// File format ----------------------------------------------------------------

TEST(DatasetFile, RoundTrip) {
  const auto dir = temp_dir("roundtrip");
  const auto ds = generate_dataset(small_config());
  const auto sum = write_dataset(ds, dir / "d.uwer");
  EXPECT_EQ(sum, file_checksum(dir / "d.uwer"));
  const auto back = read_dataset(dir / "d.uwer", small_config());
  EXPECT_EQ(back.window_count(), ds.window_count());
  EXPECT_EQ(back.norm_scale(), ds.norm_scale());
  EXPECT_TRUE(std::equal(ds.frames().begin(), ds.frames().end(), back.frames().begin()));
  EXPECT_TRUE(std::equal(ds.env_ids().begin(), ds.env_ids().end(), back.env_ids().begin()));
  const std::size_t expected_bytes = 8 + 6 * 4 + 8 + 2 * ds.window_count() +
                                     4 * ds.window_count() * (ds.lookback() + 1) * ds.frame_size();
  EXPECT_EQ(std::filesystem::file_size(dir / "d.uwer"), expected_bytes);
}

TEST(DatasetFile, SameSeedSameChecksum) {
  const auto dir = temp_dir("checksum");
  const auto a = write_dataset(generate_dataset(small_config()), dir / "a.uwer");
  const auto b = write_dataset(generate_dataset(small_config()), dir / "b.uwer");
  EXPECT_EQ(a, b);
}

TEST(DatasetFile, CorruptionDetected) {
  const auto dir = temp_dir("corrupt");
  const auto ds = generate_dataset(small_config());
  write_dataset(ds, dir / "d.uwer");
  const auto size = std::filesystem::file_size(dir / "d.uwer");
  {
    std::fstream f(dir / "d.uwer", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    char b = 0;
    f.read(&b, 1);
    f.seekp(static_cast<std::streamoff>(size / 2));
    b ^= 0x40;
    f.write(&b, 1);
  }
  EXPECT_THROW(read_dataset(dir / "d.uwer", small_config()), std::runtime_error);

  std::filesystem::resize_file(dir / "d.uwer", size - 10);
  EXPECT_THROW(read_dataset(dir / "d.uwer", small_config()), std::runtime_error);

  std::ofstream(dir / "bad.uwer") << "NOTADATASET........................................";
  EXPECT_THROW(read_dataset(dir / "bad.uwer", small_config()), std::runtime_error);
}

TEST(DatasetFile, HeaderMustAgreeWithConfig) {
  const auto dir = temp_dir("header");
  write_dataset(generate_dataset(small_config()), dir / "d.uwer");
  ChannelConfig other = small_config();
  other.n_rb = 7;
  EXPECT_THROW(read_dataset(dir / "d.uwer", other), std::runtime_error);
}
