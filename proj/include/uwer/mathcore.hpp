#pragma once

// Deterministic numeric kernels shared by the channel simulator, the
// predictor and the replay machinery.

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace uwer::math {

using Cplx = std::complex<double>;

/// Seedable pseudo-random stream: xoshiro256** seeded through splitmix64.
///
/// The algorithm and its constants are fixed so that a seed yields the same
/// stream on every platform. Gaussian draws use Box-Muller and consume both
/// outputs of each uniform pair (the second is cached), so the number of
/// uniforms consumed per normal is constant.
///
/// Single owner; do not share one instance across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Stream derived from (seed, name) without touching any existing stream.
  /// seed' = splitmix64(seed ^ fnv1a64(name)); used for the named sub-seeds
  /// (dataset, init, dropout, buffer, eval, ...).
  static Rng derive(std::uint64_t seed, std::string_view name);
  static Rng derive(std::uint64_t seed, std::string_view name, std::uint64_t index);
  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Standard normal.
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

/// Circularly-symmetric complex Gaussian CN(0, variance).
Cplx gaussian_complex(Rng& rng, double variance);

/// Dense complex matrix, row-major. Sized for array correlation work (<= 16x16).
class CMat {
 public:
  CMat() = default;
  CMat(std::size_t rows, std::size_t cols);

  static CMat identity(std::size_t n);
  static CMat diagonal(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  Cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Cplx> data() { return data_; }
  std::span<const Cplx> data() const { return data_; }

  CMat adjoint() const;
  bool is_hermitian(double tol = 1e-10) const;

  CMat& operator+=(const CMat& other);
  CMat& operator*=(Cplx scale);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Cplx> data_;
};

CMat operator*(const CMat& a, const CMat& b);
CMat operator+(CMat a, const CMat& b);
double max_abs_diff(const CMat& a, const CMat& b);

struct HermitianEigen {
  std::vector<double> values;
  CMat vectors;  // columns are eigenvectors
  int sweeps = 0;
};

/// Cyclic complex Jacobi on a Hermitian matrix. Stops when the off-diagonal
/// Frobenius norm drops below 1e-12 * max(1, ||A||_F) or after 100 sweeps.
HermitianEigen eigh_jacobi(const CMat& a);

/// Hermitian PSD square root S with S * S^H = A. Eigenvalues in [-tol, 0)
/// are clamped to zero; anything below -tol is rejected as not a covariance.
CMat mat_sqrt_psd(const CMat& a, double tol = 1e-10);

/// Bessel J0. Long-double power series for |x| < 20; Hankel asymptotic
/// expansion beyond, truncated at its smallest term (below 1e-16 there).
double bessel_j0(double x);

double sigmoid(double x);

/// Sample Pearson correlation. Throws on length mismatch, fewer than two
/// points, or a constant input ("undefined correlation").
double pearson_r(std::span<const double> x, std::span<const double> y);

}  // namespace uwer::math
