#pragma once

#include <span>
#include <vector>

#include "diffrank/types.hpp"

namespace diffrank {

/// Descending rank of each score: rank(y)_i = 1 + |{j : y_j > y_i}|, ties
/// broken by the lower index taking the better rank. O(n log n).
/// Throws std::invalid_argument on empty or non-finite input.
RankPermutation rank(std::span<const double> scores);

/// Scores shifted to induce a margin: +alpha/2 for negatives, -alpha/2 for
/// positives. With alpha == 0 this is a copy.
std::vector<double> margin_shift(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels,
                                 MarginConfig margin);

/// rank() of the margin-shifted scores.
RankPermutation rank_with_margin(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels,
                                 MarginConfig margin);

/// Blackbox backward pass for the ranking operator. Given the forward
/// result rank(y) and the incoming gradient dL/drank, perturbs the input,
/// re-ranks, and returns
///     -(1/lambda) * [rank(y) - rank(y + lambda * dL/drank)].
/// Entries are exact integer multiples of 1/lambda; the all-zero vector is
/// returned whenever the perturbation does not change the ranking.
std::vector<double> rank_backward(std::span<const double> scores,
                                  std::span<const std::int32_t> forward_rank,
                                  std::span<const double> grad_wrt_rank,
                                  LambdaConfig lambda);

/// Piecewise-affine interpolation of the linear rank loss L(pi) = g . pi,
/// evaluated at `scores`:
///     f(y) = g . rank(y_l) + (1/lambda) * [y . rank(y_l) - y . rank(y)]
/// with y_l = y + lambda * g. Coincides with g . rank(y) wherever the
/// perturbation leaves the ranking unchanged, and its gradient on the
/// interior of regions with constant rankings equals rank_backward().
double surrogate_value(std::span<const double> scores,
                       std::span<const double> grad_wrt_rank,
                       LambdaConfig lambda);

}  // namespace diffrank
