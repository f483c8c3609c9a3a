#include "diffrank/memory.hpp"

#include <stdexcept>

namespace diffrank {

MemoryBuffer::Extended MemoryBuffer::extend(
    std::span<const double> batch_scores,
    std::span<const std::uint8_t> batch_labels) const {
  if (batch_scores.empty())
    throw std::invalid_argument("MemoryBuffer::extend: empty batch");
  if (batch_labels.size() != batch_scores.size())
    throw std::invalid_argument("MemoryBuffer::extend: length mismatch");
  Extended out;
  out.scores.reserve(batch_scores.size() + stored_items());
  out.labels.reserve(batch_scores.size() + stored_items());
  out.scores.assign(batch_scores.begin(), batch_scores.end());
  out.labels.assign(batch_labels.begin(), batch_labels.end());
  out.current_mask.assign(batch_scores.size(), 1);
  // Stored batches, newest first (oldest last).
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    out.scores.insert(out.scores.end(), it->first.begin(), it->first.end());
    out.labels.insert(out.labels.end(), it->second.begin(), it->second.end());
  }
  out.current_mask.resize(out.scores.size(), 0);
  return out;
}

void MemoryBuffer::commit(std::span<const double> batch_scores,
                          std::span<const std::uint8_t> batch_labels) {
  if (batch_labels.size() != batch_scores.size())
    throw std::invalid_argument("MemoryBuffer::commit: length mismatch");
  entries_.emplace_back(ScoreVector(batch_scores.begin(), batch_scores.end()),
                        LabelVector(batch_labels.begin(), batch_labels.end()));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::size_t MemoryBuffer::stored_items() const {
  std::size_t total = 0;
  for (const auto& [scores, labels] : entries_) total += scores.size();
  return total;
}

std::vector<double> mask_gradient(std::span<const double> grad,
                                  std::span<const std::uint8_t> current_mask) {
  if (grad.size() != current_mask.size())
    throw std::invalid_argument("mask_gradient: length mismatch");
  std::vector<double> masked(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i)
    masked[i] = current_mask[i] ? grad[i] : 0.0;
  return masked;
}

std::vector<double> current_slice(std::span<const double> values,
                                  std::span<const std::uint8_t> current_mask) {
  if (values.size() != current_mask.size())
    throw std::invalid_argument("current_slice: length mismatch");
  std::vector<double> slice;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (current_mask[i]) slice.push_back(values[i]);
  return slice;
}

}  // namespace diffrank
