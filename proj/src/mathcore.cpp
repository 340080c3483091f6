#include "uwer/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace uwer::math {

// ---------------------------------------------------------------------------
// Rng

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())));
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : state_) word = splitmix64(sm);
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t sm = seed ^ fnv1a64(name);
  return splitmix64(sm);
}

Rng Rng::derive(std::uint64_t seed, std::string_view name) {
  return Rng(derive_seed(seed, name));
}

Rng Rng::derive(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  std::uint64_t sm = derive_seed(seed, name) ^ (index * 0xd1b54a32d192ed03ULL);
  return Rng(splitmix64(sm));
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  auto idx = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(idx, n - 1);
}

Cplx gaussian_complex(Rng& rng, double variance) {
  if (!(variance >= 0.0)) throw std::invalid_argument("gaussian_complex: negative variance");
  const double sd = std::sqrt(variance / 2.0);
  const double re = rng.normal();
  const double im = rng.normal();
  return {sd * re, sd * im};
}

// ---------------------------------------------------------------------------
// CMat

CMat::CMat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("CMat: dimensions must be positive");
}

CMat CMat::identity(std::size_t n) {
  CMat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CMat CMat::diagonal(std::span<const double> values) {
  CMat m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

CMat CMat::adjoint() const {
  CMat out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
  return out;
}

bool CMat::is_hermitian(double tol) const {
  if (rows_ != cols_) return false;
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = r; c < cols_; ++c)
      if (std::abs((*this)(r, c) - std::conj((*this)(c, r))) >= tol) return false;
  return true;
}

CMat& CMat::operator+=(const CMat& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw std::invalid_argument("CMat +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

CMat& CMat::operator*=(Cplx scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

CMat operator*(const CMat& a, const CMat& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("CMat *: inner dimension mismatch");
  CMat out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Cplx av = a(r, k);
      for (std::size_t c = 0; c < b.cols(); ++c) out(r, c) += av * b(k, c);
    }
  return out;
}

CMat operator+(CMat a, const CMat& b) {
  a += b;
  return a;
}

double max_abs_diff(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

// ---------------------------------------------------------------------------
// Jacobi eigensolver

namespace {

double off_diagonal_norm(const CMat& a) {
  double sum = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (r != c) sum += std::norm(a(r, c));
  return std::sqrt(sum);
}

double frobenius(const CMat& a) {
  double sum = 0.0;
  for (const auto& v : a.data()) sum += std::norm(v);
  return std::sqrt(sum);
}

}  // namespace

HermitianEigen eigh_jacobi(const CMat& input) {
  if (!input.is_hermitian()) throw std::invalid_argument("eigh_jacobi: matrix is not Hermitian");
  const std::size_t n = input.rows();
  CMat a = input;
  CMat v = CMat::identity(n);
  const double threshold = 1e-12 * std::max(1.0, frobenius(input));

  int sweep = 0;
  for (; sweep < 100 && off_diagonal_norm(a) >= threshold; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const Cplx apq = a(p, q);
        const double mag = std::abs(apq);
        if (mag == 0.0) continue;
        // Phase-rotate the (p,q) block to a real symmetric one, then apply
        // the classical real rotation. G = diag(1, e^{-i phi}) * [[c, s], [-s, c]].
        const Cplx phase = apq / mag;
        const double theta = (a(q, q).real() - a(p, p).real()) / (2.0 * mag);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const Cplx gpp = c;
        const Cplx gpq = s;
        const Cplx gqp = -s * std::conj(phase);
        const Cplx gqq = c * std::conj(phase);

        // a <- a * G (columns p, q)
        for (std::size_t k = 0; k < n; ++k) {
          const Cplx akp = a(k, p);
          const Cplx akq = a(k, q);
          a(k, p) = akp * gpp + akq * gqp;
          a(k, q) = akp * gpq + akq * gqq;
          const Cplx vkp = v(k, p);
          const Cplx vkq = v(k, q);
          v(k, p) = vkp * gpp + vkq * gqp;
          v(k, q) = vkp * gpq + vkq * gqq;
        }
        // a <- G^H * a (rows p, q)
        for (std::size_t k = 0; k < n; ++k) {
          const Cplx apk = a(p, k);
          const Cplx aqk = a(q, k);
          a(p, k) = std::conj(gpp) * apk + std::conj(gqp) * aqk;
          a(q, k) = std::conj(gpq) * apk + std::conj(gqq) * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
      }
    }
  }

  HermitianEigen out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i).real();
  out.vectors = std::move(v);
  out.sweeps = sweep;
  return out;
}

CMat mat_sqrt_psd(const CMat& a, double tol) {
  const HermitianEigen eig = eigh_jacobi(a);
  const std::size_t n = a.rows();
  std::vector<double> roots(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lambda = eig.values[i];
    if (lambda < -tol)
      throw std::domain_error("mat_sqrt_psd: eigenvalue " + std::to_string(lambda) + " below -tol; not a covariance");
    roots[i] = std::sqrt(std::max(lambda, 0.0));
  }
  CMat s(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      Cplx acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += eig.vectors(r, k) * roots[k] * std::conj(eig.vectors(c, k));
      s(r, c) = acc;
    }
  return s;
}

// ---------------------------------------------------------------------------
// Special functions

double bessel_j0(double x) {
  if (!std::isfinite(x)) throw std::domain_error("bessel_j0: non-finite input");
  const double ax = std::abs(x);
  if (ax < 20.0) {
    // J0(x) = sum_k (-1)^k (x^2/4)^k / (k!)^2, summed in long double. The
    // largest term at x = 20 is ~4e6, so cancellation costs about seven digits.
    const long double q = -0.25L * ax * ax;
    long double term = 1.0L;
    long double sum = 1.0L;
    for (int k = 1; k < 90; ++k) {
      term *= q / (static_cast<long double>(k) * k);
      sum += term;
      if (std::abs(term) < 1e-22L) break;
    }
    return static_cast<double>(sum);
  }
  // Hankel expansion: J0(x) = sqrt(2/(pi x)) [P cos(chi) - Q sin(chi)], chi = x - pi/4,
  // with a_k = prod_{j<=k} (-(2j-1)^2) / (k! 8^k); even k feed P, odd k feed Q,
  // both with sign (-1)^floor(k/2). The series diverges, so stop at the smallest term.
  double p = 1.0;
  double qsum = 0.0;
  double term = 1.0;  // a_k / x^k
  double last_mag = 1.0;
  for (int k = 1; k < 64; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = term * (-(odd * odd)) / (8.0 * k * ax);
    if (std::abs(next) >= last_mag) break;
    term = next;
    last_mag = std::abs(term);
    const double sign = ((k / 2) % 2 == 0) ? 1.0 : -1.0;
    if (k % 2 == 0)
      p += sign * term;
    else
      qsum += sign * term;
    if (last_mag < 1e-17) break;
  }
  const double chi = ax - 0.25 * std::numbers::pi;
  return std::sqrt(2.0 / (std::numbers::pi * ax)) * (p * std::cos(chi) - qsum * std::sin(chi));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Statistics

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_r: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson_r: need at least two points");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) throw std::domain_error("pearson_r: undefined correlation (constant input)");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace uwer::math
