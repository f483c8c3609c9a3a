#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "diffrank/types.hpp"

namespace diffrank::oracle {

/// Brute-force ranking: the permutation minimizing y . pi over all n!
/// permutations. Requires n <= 8 and all-distinct scores; certifies that
/// the minimizer is unique. Reference for rank().
RankPermutation exhaustive_rank(std::span<const double> scores);

/// Truncated weighted series sum_{K=1..k_max} w_K * (1 - refined_recall@K).
/// Exact for k_max >= n + 1 (enforced), since every loss@K beyond the
/// largest outrun count vanishes. Reference for recall_loss().
double series_recall_loss(std::span<const double> scores,
                          std::span<const std::uint8_t> labels,
                          WeightScheme scheme, std::int64_t k_max,
                          MarginConfig margin = {});

/// Direct count of irrelevant items outrunning item `index` in the
/// margin-shifted scores, under the usual tie-break. No ranker call.
std::int64_t irrelevant_outrunners(std::span<const double> scores,
                                   std::span<const std::uint8_t> labels,
                                   std::size_t index, MarginConfig margin = {});

/// Average Precision by direct counting (no ranker call):
/// precision(i) = |{j relevant : y_j >= y_i}| / rank_i with rank_i counted
/// per the tie-break rule. Reference for average_precision()/ap_loss().
double brute_average_precision(std::span<const double> scores,
                               std::span<const std::uint8_t> labels);

/// Central finite differences of surrogate_value() against rank_backward()
/// at one point; returns the max absolute discrepancy over coordinates.
/// The point must be interior to a linearity region: all pairwise gaps of
/// both y and y + lambda*g must exceed 2*step, otherwise
/// degenerate_input_error is thrown.
double finite_difference_check(std::span<const double> scores,
                               std::span<const double> grad_wrt_rank,
                               LambdaConfig lambda, double step);

/// Mini-batch mAP estimation curve.
struct BiasCurve {
  std::vector<std::size_t> batch_sizes;
  std::vector<double> mean_map;
  std::vector<double> std_map;
  double dataset_map = 0.0;
};

/// For each batch size, the mean and standard deviation of the mAP of
/// `trials` item subsets sampled uniformly without replacement, plus the
/// full-dataset mAP. Classes with no positive inside a sampled batch are
/// skipped in that batch's mAP. A batch size equal to the dataset size is
/// the exact case: every sample is the whole dataset, so the mean is the
/// dataset mAP and the deviation is zero.
BiasCurve batch_bias_experiment(const ScoreMatrix& scores,
                                const LabelMatrix& labels,
                                std::span<const std::size_t> batch_sizes,
                                int trials, std::uint64_t seed);

/// Seeded synthetic score dataset for the bias experiment: every item
/// belongs to one class, scores are unit Gaussians plus `separation` on the
/// true class.
std::pair<ScoreMatrix, LabelMatrix> make_bias_dataset(std::size_t items,
                                                      std::size_t classes,
                                                      double separation,
                                                      std::uint64_t seed);

}  // namespace diffrank::oracle
