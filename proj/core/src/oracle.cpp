#include "diffrank/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "diffrank/losses.hpp"
#include "diffrank/random.hpp"
#include "diffrank/ranking.hpp"

namespace diffrank::oracle {

namespace {

bool outranks(double si, std::size_t i, double sj, std::size_t j) {
  // Position i beats position j under the tie-break rule.
  if (si != sj) return si > sj;
  return i < j;
}

double mean_ap_over_columns(const ScoreMatrix& scores,
                            const LabelMatrix& labels,
                            std::span<const std::size_t> rows) {
  double total = 0.0;
  std::size_t included = 0;
  std::vector<double> col_scores(rows.size());
  std::vector<std::uint8_t> col_labels(rows.size());
  for (std::size_t c = 0; c < scores.classes; ++c) {
    const auto s = scores.column(c);
    const auto l = labels.column(c);
    bool has_positive = false;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      col_scores[k] = s[rows[k]];
      col_labels[k] = l[rows[k]];
      has_positive = has_positive || col_labels[k] == 1;
    }
    if (!has_positive) continue;
    total += average_precision(col_scores, col_labels);
    ++included;
  }
  if (included == 0)
    throw undefined_metric_error(
        "batch_bias_experiment: no class has a relevant item");
  return total / static_cast<double>(included);
}

}  // namespace

RankPermutation exhaustive_rank(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n == 0)
    throw std::invalid_argument("exhaustive_rank: empty score vector");
  if (n > 8)
    throw std::length_error("exhaustive_rank: n must be <= 8");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (scores[i] == scores[j])
        throw degenerate_input_error("exhaustive_rank: tied scores");

  std::vector<std::int32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 1);
  RankPermutation best;
  double best_objective = std::numeric_limits<double>::infinity();
  bool unique = true;
  do {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) objective += scores[i] * perm[i];
    if (objective < best_objective) {
      best_objective = objective;
      best.assign(perm.begin(), perm.end());
      unique = true;
    } else if (objective == best_objective) {
      unique = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (!unique)
    throw degenerate_input_error("exhaustive_rank: minimizer not unique");
  return best;
}

double series_recall_loss(std::span<const double> scores,
                          std::span<const std::uint8_t> labels,
                          WeightScheme scheme, std::int64_t k_max,
                          MarginConfig margin) {
  if (k_max < static_cast<std::int64_t>(scores.size()) + 1)
    throw std::invalid_argument("series_recall_loss: k_max must be >= n + 1");
  double total = 0.0;
  for (std::int64_t k = 1; k <= k_max; ++k)
    total += weight_at(scheme, k) *
             (1.0 - refined_recall_at_k(scores, labels, k, margin));
  return total;
}

std::int64_t irrelevant_outrunners(std::span<const double> scores,
                                   std::span<const std::uint8_t> labels,
                                   std::size_t index, MarginConfig margin) {
  if (labels.size() != scores.size())
    throw std::invalid_argument("irrelevant_outrunners: length mismatch");
  if (index >= scores.size())
    throw std::invalid_argument("irrelevant_outrunners: index out of range");
  const std::vector<double> shifted = margin_shift(scores, labels, margin);
  std::int64_t count = 0;
  for (std::size_t j = 0; j < shifted.size(); ++j)
    if (labels[j] == 0 && outranks(shifted[j], j, shifted[index], index))
      ++count;
  return count;
}

double brute_average_precision(std::span<const double> scores,
                               std::span<const std::uint8_t> labels) {
  if (labels.size() != scores.size())
    throw std::invalid_argument("brute_average_precision: length mismatch");
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++positives;
    std::int64_t rank_i = 1;
    std::int64_t relevant_at_or_above = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (j != i && outranks(scores[j], j, scores[i], i)) ++rank_i;
      if (labels[j] == 1 && scores[j] >= scores[i]) ++relevant_at_or_above;
    }
    total += static_cast<double>(relevant_at_or_above) /
             static_cast<double>(rank_i);
  }
  if (positives == 0)
    throw undefined_metric_error("brute_average_precision: no relevant items");
  return total / static_cast<double>(positives);
}

double finite_difference_check(std::span<const double> scores,
                               std::span<const double> grad_wrt_rank,
                               LambdaConfig lambda, double step) {
  if (!(step > 0.0))
    throw std::invalid_argument("finite_difference_check: step must be > 0");
  if (grad_wrt_rank.size() != scores.size())
    throw std::invalid_argument("finite_difference_check: length mismatch");
  if (!(lambda.lambda > 0.0))
    throw std::invalid_argument("finite_difference_check: lambda must be > 0");

  // Interior check: a single-coordinate move of +-step cannot reorder
  // anything when all pairwise gaps in y and y_lambda exceed 2 * step.
  const auto min_gap = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < v.size(); ++i)
      gap = std::min(gap, v[i] - v[i - 1]);
    return gap;
  };
  std::vector<double> base(scores.begin(), scores.end());
  std::vector<double> perturbed(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    perturbed[i] = scores[i] + lambda.lambda * grad_wrt_rank[i];
  if (scores.size() > 1 && (min_gap(base) <= 2.0 * step ||
                            min_gap(perturbed) <= 2.0 * step))
    throw degenerate_input_error(
        "finite_difference_check: point too close to a region boundary");

  const std::vector<double> blackbox =
      rank_backward(scores, rank(scores), grad_wrt_rank, lambda);

  double max_error = 0.0;
  std::vector<double> probe(scores.begin(), scores.end());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    probe[i] = scores[i] + step;
    const double up = surrogate_value(probe, grad_wrt_rank, lambda);
    probe[i] = scores[i] - step;
    const double down = surrogate_value(probe, grad_wrt_rank, lambda);
    probe[i] = scores[i];
    const double central = (up - down) / (2.0 * step);
    max_error = std::max(max_error, std::abs(central - blackbox[i]));
  }
  return max_error;
}

BiasCurve batch_bias_experiment(const ScoreMatrix& scores,
                                const LabelMatrix& labels,
                                std::span<const std::size_t> batch_sizes,
                                int trials, std::uint64_t seed) {
  if (scores.items == 0 || scores.classes == 0 ||
      scores.items != labels.items || scores.classes != labels.classes)
    throw std::invalid_argument("batch_bias_experiment: bad matrices");
  if (trials < 1)
    throw std::invalid_argument("batch_bias_experiment: trials must be >= 1");
  for (std::size_t b : batch_sizes)
    if (b == 0 || b > scores.items)
      throw std::invalid_argument(
          "batch_bias_experiment: batch size out of range");

  std::vector<std::size_t> all_rows(scores.items);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});

  BiasCurve curve;
  curve.dataset_map = mean_ap_over_columns(scores, labels, all_rows);

  Rng rng(seed);
  std::vector<std::size_t> pool(scores.items);
  for (std::size_t si = 0; si < batch_sizes.size(); ++si) {
    const std::size_t batch = batch_sizes[si];
    curve.batch_sizes.push_back(batch);
    if (batch == scores.items) {
      // Sampling all items without replacement is the dataset itself.
      curve.mean_map.push_back(curve.dataset_map);
      curve.std_map.push_back(0.0);
      continue;
    }
    Rng size_rng = rng.split(si + 1);
    double sum = 0.0, sum_sq = 0.0;
    int valid = 0;
    for (int t = 0; t < trials; ++t) {
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      // Partial Fisher-Yates: first `batch` entries form the sample.
      for (std::size_t k = 0; k < batch; ++k) {
        const std::size_t pick =
            k + static_cast<std::size_t>(size_rng.next_below(pool.size() - k));
        std::swap(pool[k], pool[pick]);
      }
      double map;
      try {
        map = mean_ap_over_columns(scores, labels,
                                   std::span(pool.data(), batch));
      } catch (const undefined_metric_error&) {
        continue;  // no class had a positive in this sample
      }
      sum += map;
      sum_sq += map * map;
      ++valid;
    }
    if (valid == 0)
      throw undefined_metric_error(
          "batch_bias_experiment: every sampled batch lacked positives");
    const double mean = sum / valid;
    const double variance = std::max(0.0, sum_sq / valid - mean * mean);
    curve.mean_map.push_back(mean);
    curve.std_map.push_back(std::sqrt(variance));
  }
  return curve;
}

std::pair<ScoreMatrix, LabelMatrix> make_bias_dataset(std::size_t items,
                                                      std::size_t classes,
                                                      double separation,
                                                      std::uint64_t seed) {
  if (items == 0 || classes == 0)
    throw std::invalid_argument("make_bias_dataset: empty shape");
  ScoreMatrix scores{items, classes, std::vector<double>(items * classes)};
  LabelMatrix labels{items, classes,
                     std::vector<std::uint8_t>(items * classes, 0)};
  Rng rng(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    auto score_col = scores.column(c);
    auto label_col = labels.column(c);
    for (std::size_t i = 0; i < items; ++i) {
      const bool member = (i % classes) == c;
      label_col[i] = member ? 1 : 0;
      score_col[i] = rng.next_gaussian() + (member ? separation : 0.0);
    }
  }
  return {std::move(scores), std::move(labels)};
}

}  // namespace diffrank::oracle
