#include "uwer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "uwer/mathcore.hpp"

namespace uwer::metrics {

const char* to_string(Split split) { return split == Split::Train ? "train" : "val"; }

DbValue nmse_db(double nmse_lin) {
  if (!(nmse_lin >= 0.0)) throw std::domain_error("nmse_db: negative or NaN NMSE");
  if (nmse_lin == 0.0) return {kDbFloor, true};
  return {10.0 * std::log10(nmse_lin), false};
}

PerRbNmse per_rb_nmse(std::span<const PredictionPair> pairs, const FrameLayout& layout) {
  PerRbNmse out;
  const auto n_rb = static_cast<std::size_t>(layout.n_rb);
  out.error.assign(n_rb, 0.0);
  out.energy.assign(n_rb, 0.0);
  for (const auto& pair : pairs) {
    if (pair.predicted.size() != layout.size() || pair.target.size() != layout.size())
      throw std::invalid_argument("per_rb_nmse: frame size does not match layout");
    for (std::size_t i = 0; i < pair.target.size(); ++i) {
      const auto rb = static_cast<std::size_t>(layout.rb_of(i));
      const double d = pair.predicted[i] - pair.target[i];
      out.error[rb] += d * d;
      out.energy[rb] += pair.target[i] * pair.target[i];
    }
  }
  for (std::size_t k = 0; k < n_rb; ++k) {
    if (!(out.energy[k] > 0.0)) throw std::domain_error("per_rb_nmse: zero-norm target on RB " + std::to_string(k));
    out.linear.push_back(out.error[k] / out.energy[k]);
    const DbValue db = nmse_db(out.linear.back());
    out.db.push_back(db.db);
    out.clamped.push_back(db.clamped);
  }
  return out;
}

CalibrationCurve calibration_curve(std::span<const double> uncertainty, std::span<const double> nmse, int n_bins) {
  if (uncertainty.size() != nmse.size()) throw std::invalid_argument("calibration_curve: length mismatch");
  if (uncertainty.size() < 2) throw std::invalid_argument("calibration_curve: need at least two records");
  if (n_bins < 1) throw std::invalid_argument("calibration_curve: n_bins must be >= 1");

  CalibrationCurve curve;
  try {
    curve.pearson_r = math::pearson_r(uncertainty, nmse);
  } catch (const std::domain_error& e) {
    curve.pearson_error = e.what();
  }

  const std::size_t n = uncertainty.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return uncertainty[a] < uncertainty[b]; });

  const bool flat = uncertainty[order.front()] == uncertainty[order.back()];
  const std::size_t bins = flat ? 1 : std::min<std::size_t>(static_cast<std::size_t>(n_bins), n);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins;
    const std::size_t hi = (b + 1) * n / bins;
    double su = 0.0;
    double se = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      su += uncertainty[order[i]];
      se += nmse[order[i]];
    }
    const auto count = static_cast<double>(hi - lo);
    curve.bin_centers.push_back(su / count);
    curve.bin_mean_nmse.push_back(se / count);
    curve.counts.push_back(hi - lo);
  }
  return curve;
}

Distribution distribution_export(std::span<const double> values, int n_bins) {
  if (values.empty()) throw std::invalid_argument("distribution_export: empty input");
  if (n_bins < 1) throw std::invalid_argument("distribution_export: n_bins must be >= 1");
  Distribution out;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();

  const int bins = (hi > lo) ? n_bins : 1;
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    const double edge_hi = (b + 1 == bins) ? hi : lo + width * (b + 1);
    out.histogram.push_back({lo + width * b, edge_hi, 0});
  }
  for (double v : sorted) {
    auto b = (hi > lo) ? static_cast<int>((v - lo) / width) : 0;
    b = std::clamp(b, 0, bins - 1);
    ++out.histogram[static_cast<std::size_t>(b)].count;
  }

  const auto n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) out.cdf.push_back({sorted[i], static_cast<double>(i + 1) / n});
  return out;
}

namespace {

template <typename T>
std::vector<double> magnitudes(std::span<const T> frame, const FrameLayout& layout, int tx, int rx) {
  if (frame.size() != layout.size()) throw std::invalid_argument("magnitude_map: frame size does not match layout");
  if (tx < 0 || tx >= layout.n_tx || rx < 0 || rx >= layout.n_rx)
    throw std::out_of_range("magnitude_map: antenna index out of range");
  std::vector<double> out(static_cast<std::size_t>(layout.n_rb));
  for (int k = 0; k < layout.n_rb; ++k) {
    const auto base = (static_cast<std::size_t>(tx) * layout.n_rb + k) * layout.n_rx + rx;
    const double re = frame[base];
    const double im = frame[base + layout.size() / 2];
    out[static_cast<std::size_t>(k)] = std::hypot(re, im);
  }
  return out;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.precision(10);
  return out;
}

}  // namespace

std::vector<double> magnitude_map(std::span<const float> frame, const FrameLayout& layout, int tx, int rx) {
  return magnitudes(frame, layout, tx, rx);
}

std::vector<double> magnitude_map(std::span<const double> frame, const FrameLayout& layout, int tx, int rx) {
  return magnitudes(frame, layout, tx, rx);
}

void write_cdf_csv(const std::filesystem::path& path, std::span<const CdfRow> rows) {
  auto out = open_csv(path);
  out << "value_db,cdf\n";
  for (const auto& r : rows) out << r.value << ',' << r.cdf << '\n';
}

void write_hist_csv(const std::filesystem::path& path, std::span<const HistogramRow> rows) {
  auto out = open_csv(path);
  out << "bin_lo_db,bin_hi_db,count\n";
  for (const auto& r : rows) out << r.lo << ',' << r.hi << ',' << r.count << '\n';
}

void write_per_rb_csv(const std::filesystem::path& path, const PerRbNmse& per_rb) {
  auto out = open_csv(path);
  out << "rb_index,nmse_db\n";
  for (std::size_t k = 0; k < per_rb.db.size(); ++k) out << k << ',' << per_rb.db[k] << '\n';
}

void write_calibration_csv(const std::filesystem::path& path, const CalibrationCurve& curve) {
  auto out = open_csv(path);
  out << "# bins=quantile n=" << curve.counts.size() << '\n';
  if (curve.pearson_r)
    out << "# pearson_r=" << *curve.pearson_r << '\n';
  else
    out << "# pearson_r=nan\n";
  out << "bin_center_unc,mean_nmse,count\n";
  for (std::size_t b = 0; b < curve.counts.size(); ++b)
    out << curve.bin_centers[b] << ',' << curve.bin_mean_nmse[b] << ',' << curve.counts[b] << '\n';
}

void write_magnitude_csv(const std::filesystem::path& path, std::span<const double> magnitudes) {
  auto out = open_csv(path);
  out << "rb_index,magnitude\n";
  for (std::size_t k = 0; k < magnitudes.size(); ++k) out << k << ',' << magnitudes[k] << '\n';
}

}  // namespace uwer::metrics
