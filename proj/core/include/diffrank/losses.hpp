#pragma once

#include <cstdint>
#include <span>

#include "diffrank/types.hpp"

namespace diffrank {

/// w_k of the scheme, k >= 1.
double weight_at(WeightScheme scheme, std::int64_t k);

/// Cumulative weight W(k) = sum_{i=1..k} w_i in closed form; W(0) = 0.
double weight_cumulative(WeightScheme scheme, std::int64_t k);

/// Derivative of the continuous extension of W, evaluated at r >= 0.
double weight_derivative(WeightScheme scheme, double r);

/// Recall@K: 1 iff some relevant item ranks within the top K (plain,
/// unshifted ranking). Throws undefined_metric_error without positives.
int recall_at_k(std::span<const double> scores,
                std::span<const std::uint8_t> labels, std::int64_t k);

/// Refined recall: the fraction of relevant items outrun by fewer than K
/// irrelevant items, computed from the margin-shifted ranking.
double refined_recall_at_k(std::span<const double> scores,
                           std::span<const std::uint8_t> labels,
                           std::int64_t k, MarginConfig margin = {});

/// Recall loss with closed-form weighting:
///     value = mean over relevant i of W(r_i),
/// where r_i counts the irrelevant items outrunning i in the shifted
/// ranking. Range [0, W(#negatives)]. The gradient treats the rank within
/// the relevant subset as constant and backpropagates the full-set ranking
/// with rank_backward; pass differentiate_within_relevant = true to send a
/// gradient through the within-relevant ranking as well.
LossResult recall_loss(std::span<const double> scores,
                       std::span<const std::uint8_t> labels,
                       WeightScheme scheme, MarginConfig margin,
                       LambdaConfig lambda,
                       bool differentiate_within_relevant = false);

/// Average Precision in (0, 1]: mean over relevant items of
/// rank-within-relevant / rank. Evaluation metric; no margin applied.
double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels);

/// AP loss: 1 - mean over relevant i of rank_a(y+)_i / rank_a(y)_i, with
/// both rank vectors blackbox-differentiated and the two score-gradient
/// contributions summed. Range [0, 1).
LossResult ap_loss(std::span<const double> scores,
                   std::span<const std::uint8_t> labels, MarginConfig margin,
                   LambdaConfig lambda);

/// Mean AP loss over class columns. Columns without a positive are skipped;
/// the divisor is the number of included columns. Gradient is the
/// column-major concatenation scaled by 1/#included.
LossResult map_loss(const ScoreMatrix& scores, const LabelMatrix& labels,
                    MarginConfig margin, LambdaConfig lambda);

/// AP loss of all classes at once: ap_loss applied to the class-major
/// concatenation of the columns.
LossResult apc_loss(const ScoreMatrix& scores, const LabelMatrix& labels,
                    MarginConfig margin, LambdaConfig lambda);

}  // namespace diffrank
