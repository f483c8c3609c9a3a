#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace diffrank {

/// Relevance scores for n items. Entries must be finite, n >= 1.
using ScoreVector = std::vector<double>;

/// Binary relevance labels, paired entrywise with a ScoreVector.
using LabelVector = std::vector<std::uint8_t>;

/// 1-based descending ranks; always a permutation of {1,...,n}.
using RankPermutation = std::vector<std::int32_t>;

/// A metric was requested for a query with no relevant items.
class undefined_metric_error : public std::domain_error {
  using std::domain_error::domain_error;
};

/// An oracle met tied or near-tied input it cannot certify.
class degenerate_input_error : public std::domain_error {
  using std::domain_error::domain_error;
};

/// Margin width used to shift scores during training. alpha >= 0;
/// alpha == 0 disables the shift.
struct MarginConfig {
  double alpha = 0.0;
};

/// Interpolation strength for the blackbox backward pass. Must be > 0.
struct LambdaConfig {
  double lambda = 1.0;
};

/// Scalar loss plus its gradient with respect to the raw input scores.
struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

/// Weight sequences with closed-form cumulative sums:
///   Log:    w_k = log(1 + 1/k),                          W(k) = log(1 + k)
///   LogLog: w_k = log(1 + log(1 + 1/k) / (1 + log k)),   W(k) = log(1 + log(1 + k))
enum class WeightScheme { Log, LogLog };

/// Per-class score columns over a shared item set, column-major:
/// class c occupies values[c * items .. (c + 1) * items).
struct ScoreMatrix {
  std::size_t items = 0;
  std::size_t classes = 0;
  std::vector<double> values;

  std::span<const double> column(std::size_t c) const {
    return {values.data() + c * items, items};
  }
  std::span<double> column(std::size_t c) {
    return {values.data() + c * items, items};
  }
};

/// Binary labels matching a ScoreMatrix layout.
struct LabelMatrix {
  std::size_t items = 0;
  std::size_t classes = 0;
  std::vector<std::uint8_t> values;

  std::span<const std::uint8_t> column(std::size_t c) const {
    return {values.data() + c * items, items};
  }
  std::span<std::uint8_t> column(std::size_t c) {
    return {values.data() + c * items, items};
  }
};

}  // namespace diffrank
