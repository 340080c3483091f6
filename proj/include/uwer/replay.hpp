#pragma once

// Bounded replay memory with uncertainty-prioritized sampling and
// loss-aware reservoir replacement (LARS).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "uwer/mathcore.hpp"

namespace uwer::replay {

/// One stored sample. `window` indexes the immutable dataset the buffer was
/// filled from; `uncertainty` is the scalar score at insertion time.
struct BufferEntry {
  std::size_t window = 0;
  double uncertainty = 0.0;
  int env_id = 0;
  std::int64_t insert_step = 0;
};

struct BufferStats {
  std::size_t size = 0;
  std::optional<double> mean_uncertainty;  // empty when the buffer is empty
  double min_uncertainty = 0.0;
  double max_uncertainty = 0.0;
  std::map<int, std::size_t> env_histogram;
};

class ReplayBuffer {
 public:
  /// gamma is the LARS replacement slope.
  ReplayBuffer(std::size_t capacity, double gamma);

  /// Below capacity the entry is appended. At capacity it replaces a uniformly
  /// random slot with probability sigmoid(gamma * (u - mean_u)), else it is
  /// discarded. Returns whether the entry was stored.
  bool insert(const BufferEntry& entry, math::Rng& rng);

  /// P(i) = u_i^alpha / sum_j u_j^alpha. Falls back to uniform when every
  /// weight is zero. alpha = 0 gives uniform weights (0^0 = 1).
  std::vector<double> probabilities(double alpha) const;

  /// batch_size draws with replacement from probabilities(alpha).
  std::vector<BufferEntry> sample_prioritized(std::size_t batch_size, double alpha, math::Rng& rng) const;

  /// Replacement probability an incoming score would get right now.
  double acceptance_probability(double uncertainty) const;

  /// Overwrite the stored score of slot i (periodic re-scoring).
  void set_uncertainty(std::size_t i, double uncertainty);

  BufferStats stats() const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  double gamma() const { return gamma_; }
  const std::vector<BufferEntry>& entries() const { return entries_; }
  /// Running mean of stored scores (0 when empty).
  double mean_uncertainty() const;

  /// CSV with header `insert_step,env_id,uncertainty`.
  void dump_csv(const std::filesystem::path& path) const;

 private:
  void on_mutation();

  std::size_t capacity_;
  double gamma_;
  std::vector<BufferEntry> entries_;
  double sum_ = 0.0;
  std::size_t mutations_ = 0;
};

/// Mutations between exact recomputations of the running sum.
inline constexpr std::size_t kExactResumEvery = 4096;

}  // namespace uwer::replay
