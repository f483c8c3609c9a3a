#include "diffrank/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "diffrank/ranking.hpp"

namespace diffrank {

namespace {

std::vector<std::size_t> relevant_indices(std::span<const double> scores,
                                          std::span<const std::uint8_t> labels,
                                          const char* who) {
  if (labels.size() != scores.size())
    throw std::invalid_argument(std::string(who) +
                                ": labels/scores length mismatch");
  std::vector<std::size_t> relevant;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1)
      throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
    if (labels[i] == 1) relevant.push_back(i);
  }
  if (relevant.empty())
    throw undefined_metric_error(std::string(who) + ": no relevant items");
  return relevant;
}

std::vector<double> gather(std::span<const double> values,
                           const std::vector<std::size_t>& idx) {
  std::vector<double> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = values[idx[k]];
  return out;
}

void check_matrices(const ScoreMatrix& scores, const LabelMatrix& labels,
                    const char* who) {
  if (scores.items == 0 || scores.classes == 0)
    throw std::invalid_argument(std::string(who) + ": empty matrix");
  if (scores.values.size() != scores.items * scores.classes ||
      labels.values.size() != labels.items * labels.classes)
    throw std::invalid_argument(std::string(who) + ": inconsistent storage");
  if (scores.items != labels.items || scores.classes != labels.classes)
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace

double weight_at(WeightScheme scheme, std::int64_t k) {
  if (k < 1) throw std::invalid_argument("weight_at: k must be >= 1");
  const double kd = static_cast<double>(k);
  switch (scheme) {
    case WeightScheme::Log:
      return std::log1p(1.0 / kd);
    case WeightScheme::LogLog:
      return std::log1p(std::log1p(1.0 / kd) / (1.0 + std::log(kd)));
  }
  throw std::invalid_argument("weight_at: unknown scheme");
}

double weight_cumulative(WeightScheme scheme, std::int64_t k) {
  if (k < 0) throw std::invalid_argument("weight_cumulative: k must be >= 0");
  const double kd = static_cast<double>(k);
  switch (scheme) {
    case WeightScheme::Log:
      return std::log1p(kd);
    case WeightScheme::LogLog:
      return std::log1p(std::log1p(kd));
  }
  throw std::invalid_argument("weight_cumulative: unknown scheme");
}

double weight_derivative(WeightScheme scheme, double r) {
  if (!(r >= 0.0))
    throw std::invalid_argument("weight_derivative: r must be >= 0");
  switch (scheme) {
    case WeightScheme::Log:
      return 1.0 / (1.0 + r);
    case WeightScheme::LogLog:
      return 1.0 / ((1.0 + std::log1p(r)) * (1.0 + r));
  }
  throw std::invalid_argument("weight_derivative: unknown scheme");
}

int recall_at_k(std::span<const double> scores,
                std::span<const std::uint8_t> labels, std::int64_t k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: K must be >= 1");
  const auto relevant = relevant_indices(scores, labels, "recall_at_k");
  const RankPermutation ranks = rank(scores);
  for (std::size_t i : relevant)
    if (ranks[i] <= k) return 1;
  return 0;
}

double refined_recall_at_k(std::span<const double> scores,
                           std::span<const std::uint8_t> labels,
                           std::int64_t k, MarginConfig margin) {
  if (k < 1) throw std::invalid_argument("refined_recall_at_k: K must be >= 1");
  const auto relevant = relevant_indices(scores, labels, "refined_recall_at_k");
  const std::vector<double> shifted = margin_shift(scores, labels, margin);
  const RankPermutation full_rank = rank(shifted);
  const RankPermutation sub_rank = rank(gather(shifted, relevant));
  std::size_t hits = 0;
  for (std::size_t j = 0; j < relevant.size(); ++j) {
    const std::int64_t outrun = full_rank[relevant[j]] - sub_rank[j];
    if (outrun < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

LossResult recall_loss(std::span<const double> scores,
                       std::span<const std::uint8_t> labels,
                       WeightScheme scheme, MarginConfig margin,
                       LambdaConfig lambda,
                       bool differentiate_within_relevant) {
  const auto relevant = relevant_indices(scores, labels, "recall_loss");
  const double p = static_cast<double>(relevant.size());
  const std::vector<double> shifted = margin_shift(scores, labels, margin);
  const RankPermutation full_rank = rank(shifted);
  const std::vector<double> sub_scores = gather(shifted, relevant);
  const RankPermutation sub_rank = rank(sub_scores);

  double value = 0.0;
  std::vector<double> grad_full_rank(scores.size(), 0.0);
  std::vector<double> grad_sub_rank(relevant.size(), 0.0);
  for (std::size_t j = 0; j < relevant.size(); ++j) {
    const auto outrun =
        static_cast<double>(full_rank[relevant[j]] - sub_rank[j]);
    value += weight_cumulative(scheme, static_cast<std::int64_t>(outrun));
    const double slope = weight_derivative(scheme, outrun) / p;
    grad_full_rank[relevant[j]] = slope;
    grad_sub_rank[j] = -slope;
  }
  value /= p;

  LossResult result;
  result.value = value;
  result.grad = rank_backward(shifted, full_rank, grad_full_rank, lambda);
  if (differentiate_within_relevant) {
    const std::vector<double> sub_grad =
        rank_backward(sub_scores, sub_rank, grad_sub_rank, lambda);
    for (std::size_t j = 0; j < relevant.size(); ++j)
      result.grad[relevant[j]] += sub_grad[j];
  }
  return result;
}

double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels) {
  const auto relevant = relevant_indices(scores, labels, "average_precision");
  const RankPermutation full_rank = rank(scores);
  const RankPermutation sub_rank = rank(gather(scores, relevant));
  double ap = 0.0;
  for (std::size_t j = 0; j < relevant.size(); ++j)
    ap += static_cast<double>(sub_rank[j]) /
          static_cast<double>(full_rank[relevant[j]]);
  return ap / static_cast<double>(relevant.size());
}

LossResult ap_loss(std::span<const double> scores,
                   std::span<const std::uint8_t> labels, MarginConfig margin,
                   LambdaConfig lambda) {
  const auto relevant = relevant_indices(scores, labels, "ap_loss");
  const double p = static_cast<double>(relevant.size());
  const std::vector<double> shifted = margin_shift(scores, labels, margin);
  const RankPermutation full_rank = rank(shifted);
  const std::vector<double> sub_scores = gather(shifted, relevant);
  const RankPermutation sub_rank = rank(sub_scores);

  double mean_precision = 0.0;
  std::vector<double> grad_full_rank(scores.size(), 0.0);
  std::vector<double> grad_sub_rank(relevant.size(), 0.0);
  for (std::size_t j = 0; j < relevant.size(); ++j) {
    const double r_full = static_cast<double>(full_rank[relevant[j]]);
    const double r_sub = static_cast<double>(sub_rank[j]);
    mean_precision += r_sub / r_full;
    // value = 1 - (1/p) sum r_sub / r_full, so by the quotient rule:
    grad_full_rank[relevant[j]] = r_sub / (p * r_full * r_full);
    grad_sub_rank[j] = -1.0 / (p * r_full);
  }
  mean_precision /= p;

  LossResult result;
  result.value = 1.0 - mean_precision;
  result.grad = rank_backward(shifted, full_rank, grad_full_rank, lambda);
  const std::vector<double> sub_grad =
      rank_backward(sub_scores, sub_rank, grad_sub_rank, lambda);
  for (std::size_t j = 0; j < relevant.size(); ++j)
    result.grad[relevant[j]] += sub_grad[j];
  return result;
}

LossResult map_loss(const ScoreMatrix& scores, const LabelMatrix& labels,
                    MarginConfig margin, LambdaConfig lambda) {
  check_matrices(scores, labels, "map_loss");
  LossResult result;
  result.grad.assign(scores.values.size(), 0.0);
  std::size_t included = 0;
  for (std::size_t c = 0; c < scores.classes; ++c) {
    const auto label_col = labels.column(c);
    bool has_positive = false;
    for (auto l : label_col)
      if (l == 1) { has_positive = true; break; }
    if (!has_positive) continue;  // AP undefined for this class
    const LossResult column = ap_loss(scores.column(c), label_col, margin, lambda);
    result.value += column.value;
    for (std::size_t i = 0; i < scores.items; ++i)
      result.grad[c * scores.items + i] = column.grad[i];
    ++included;
  }
  if (included == 0)
    throw undefined_metric_error("map_loss: no class has a relevant item");
  const double scale = 1.0 / static_cast<double>(included);
  result.value *= scale;
  for (double& g : result.grad) g *= scale;
  return result;
}

LossResult apc_loss(const ScoreMatrix& scores, const LabelMatrix& labels,
                    MarginConfig margin, LambdaConfig lambda) {
  check_matrices(scores, labels, "apc_loss");
  // Column-major storage is already the class-major concatenation.
  return ap_loss(scores.values, labels.values, margin, lambda);
}

}  // namespace diffrank
