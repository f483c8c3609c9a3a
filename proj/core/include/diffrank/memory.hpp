#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "diffrank/types.hpp"

namespace diffrank {

/// FIFO score memory: keeps the raw scores and labels of the last
/// `capacity` batches. extend() builds the concatenated view used for loss
/// evaluation (current batch first, then stored batches newest to oldest)
/// together with the current-batch mask; commit() stores a batch and evicts
/// the oldest one beyond capacity.
class MemoryBuffer {
 public:
  explicit MemoryBuffer(std::size_t capacity_batches)
      : capacity_(capacity_batches) {}

  struct Extended {
    ScoreVector scores;
    LabelVector labels;
    std::vector<std::uint8_t> current_mask;  // 1 on current-batch positions
  };

  Extended extend(std::span<const double> batch_scores,
                  std::span<const std::uint8_t> batch_labels) const;

  void commit(std::span<const double> batch_scores,
              std::span<const std::uint8_t> batch_labels);

  std::size_t capacity() const { return capacity_; }
  std::size_t stored_batches() const { return entries_.size(); }
  std::size_t stored_items() const;
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<std::pair<ScoreVector, LabelVector>> entries_;  // newest at back
};

/// Zero the gradient outside the current batch. Length-checked.
std::vector<double> mask_gradient(std::span<const double> grad,
                                  std::span<const std::uint8_t> current_mask);

/// The current-batch entries of `values`, in batch order.
std::vector<double> current_slice(std::span<const double> values,
                                  std::span<const std::uint8_t> current_mask);

}  // namespace diffrank
