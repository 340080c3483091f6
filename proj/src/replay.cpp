#include "uwer/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace uwer::replay {

ReplayBuffer::ReplayBuffer(std::size_t capacity, double gamma) : capacity_(capacity), gamma_(gamma) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
  if (!std::isfinite(gamma)) throw std::invalid_argument("ReplayBuffer: gamma must be finite");
  entries_.reserve(capacity);
}

double ReplayBuffer::mean_uncertainty() const {
  return entries_.empty() ? 0.0 : sum_ / static_cast<double>(entries_.size());
}

double ReplayBuffer::acceptance_probability(double uncertainty) const {
  if (entries_.size() < capacity_) return 1.0;
  return math::sigmoid(gamma_ * (uncertainty - mean_uncertainty()));
}

bool ReplayBuffer::insert(const BufferEntry& entry, math::Rng& rng) {
  if (!(entry.uncertainty >= 0.0) || !std::isfinite(entry.uncertainty))
    throw std::invalid_argument("ReplayBuffer::insert: uncertainty must be finite and >= 0");
  if (entries_.size() < capacity_) {
    entries_.push_back(entry);
    sum_ += entry.uncertainty;
    on_mutation();
    return true;
  }
  const double pi = acceptance_probability(entry.uncertainty);
  if (rng.uniform() >= pi) return false;
  BufferEntry& victim = entries_[rng.uniform_index(entries_.size())];
  sum_ += entry.uncertainty - victim.uncertainty;
  victim = entry;
  on_mutation();
  return true;
}

void ReplayBuffer::set_uncertainty(std::size_t i, double uncertainty) {
  if (!(uncertainty >= 0.0)) throw std::invalid_argument("ReplayBuffer: uncertainty must be >= 0");
  BufferEntry& e = entries_.at(i);
  sum_ += uncertainty - e.uncertainty;
  e.uncertainty = uncertainty;
  on_mutation();
}

void ReplayBuffer::on_mutation() {
  if (++mutations_ % kExactResumEvery != 0) return;
  double exact = 0.0;
  for (const auto& e : entries_) exact += e.uncertainty;
  sum_ = exact;
}

std::vector<double> ReplayBuffer::probabilities(double alpha) const {
  if (entries_.empty()) throw std::logic_error("ReplayBuffer: empty buffer");
  std::vector<double> p(entries_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    p[i] = std::pow(entries_[i].uncertainty, alpha);
    total += p[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<BufferEntry> ReplayBuffer::sample_prioritized(std::size_t batch_size, double alpha, math::Rng& rng) const {
  const std::vector<double> p = probabilities(alpha);
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) cdf[i] = (acc += p[i]);
  std::vector<BufferEntry> out;
  out.reserve(batch_size);
  for (std::size_t n = 0; n < batch_size; ++n) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    out.push_back(entries_[idx]);
  }
  return out;
}

BufferStats ReplayBuffer::stats() const {
  BufferStats s;
  s.size = entries_.size();
  if (entries_.empty()) return s;
  s.mean_uncertainty = mean_uncertainty();
  s.min_uncertainty = entries_.front().uncertainty;
  s.max_uncertainty = entries_.front().uncertainty;
  for (const auto& e : entries_) {
    s.min_uncertainty = std::min(s.min_uncertainty, e.uncertainty);
    s.max_uncertainty = std::max(s.max_uncertainty, e.uncertainty);
    ++s.env_histogram[e.env_id];
  }
  return s;
}

void ReplayBuffer::dump_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.precision(17);
  out << "insert_step,env_id,uncertainty\n";
  for (const auto& e : entries_) out << e.insert_step << ',' << e.env_id << ',' << e.uncertainty << '\n';
}

}  // namespace uwer::replay
