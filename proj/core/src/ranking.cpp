#include "diffrank/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace diffrank {

namespace {

void check_scores(std::span<const double> scores, const char* who) {
  if (scores.empty())
    throw std::invalid_argument(std::string(who) + ": empty score vector");
  for (double s : scores)
    if (!std::isfinite(s))
      throw std::invalid_argument(std::string(who) + ": non-finite score");
}

void check_labels(std::span<const std::uint8_t> labels, std::size_t n,
                  const char* who) {
  if (labels.size() != n)
    throw std::invalid_argument(std::string(who) +
                                ": labels/scores length mismatch");
  for (auto l : labels)
    if (l > 1)
      throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
}

double dot(std::span<const double> a, std::span<const std::int32_t> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

RankPermutation rank(std::span<const double> scores) {
  check_scores(scores, "rank");
  const auto n = static_cast<std::int32_t>(scores.size());
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Descending by score, ties to the lower index.
  std::sort(order.begin(), order.end(),
            [scores](std::int32_t a, std::int32_t b) {
              if (scores[a] != scores[b]) return scores[a] > scores[b];
              return a < b;
            });
  RankPermutation ranks(n);
  for (std::int32_t pos = 0; pos < n; ++pos) ranks[order[pos]] = pos + 1;
  return ranks;
}

std::vector<double> margin_shift(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels,
                                 MarginConfig margin) {
  check_labels(labels, scores.size(), "margin_shift");
  if (!(margin.alpha >= 0.0))
    throw std::invalid_argument("margin_shift: alpha must be >= 0");
  const double half = 0.5 * margin.alpha;
  std::vector<double> shifted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    shifted[i] = labels[i] ? scores[i] - half : scores[i] + half;
  return shifted;
}

RankPermutation rank_with_margin(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels,
                                 MarginConfig margin) {
  check_scores(scores, "rank_with_margin");
  return rank(margin_shift(scores, labels, margin));
}

std::vector<double> rank_backward(std::span<const double> scores,
                                  std::span<const std::int32_t> forward_rank,
                                  std::span<const double> grad_wrt_rank,
                                  LambdaConfig lambda) {
  if (!(lambda.lambda > 0.0))
    throw std::invalid_argument("rank_backward: lambda must be > 0");
  if (forward_rank.size() != scores.size() ||
      grad_wrt_rank.size() != scores.size())
    throw std::invalid_argument("rank_backward: length mismatch");
  std::vector<double> perturbed(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    perturbed[i] = scores[i] + lambda.lambda * grad_wrt_rank[i];
  const RankPermutation perturbed_rank = rank(perturbed);  // fresh solver call
  std::vector<double> grad(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    grad[i] = -(static_cast<double>(forward_rank[i]) -
                static_cast<double>(perturbed_rank[i])) /
              lambda.lambda;
  return grad;
}

double surrogate_value(std::span<const double> scores,
                       std::span<const double> grad_wrt_rank,
                       LambdaConfig lambda) {
  if (!(lambda.lambda > 0.0))
    throw std::invalid_argument("surrogate_value: lambda must be > 0");
  if (grad_wrt_rank.size() != scores.size())
    throw std::invalid_argument("surrogate_value: length mismatch");
  const RankPermutation base = rank(scores);
  std::vector<double> perturbed(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    perturbed[i] = scores[i] + lambda.lambda * grad_wrt_rank[i];
  const RankPermutation shifted = rank(perturbed);
  return dot(grad_wrt_rank, shifted) +
         (dot(scores, shifted) - dot(scores, base)) / lambda.lambda;
}

}  // namespace diffrank
