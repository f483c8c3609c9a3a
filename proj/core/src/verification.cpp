#include "diffrank/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "diffrank/losses.hpp"
#include "diffrank/oracle.hpp"
#include "diffrank/random.hpp"
#include "diffrank/ranking.hpp"

namespace diffrank::verify {

namespace {

constexpr std::uint64_t kSuiteSalt = 0x5eedf00dULL;

std::vector<double> random_scores(Rng& rng, std::size_t n, double lo = -1.0,
                                  double hi = 1.0) {
  std::vector<double> scores(n);
  for (auto& s : scores) s = rng.next_uniform(lo, hi);
  return scores;
}

std::vector<std::uint8_t> random_labels(Rng& rng, std::size_t n,
                                        double positive_rate = 0.3) {
  std::vector<std::uint8_t> labels(n);
  bool any = false;
  for (auto& l : labels) {
    l = rng.next_double() < positive_rate ? 1 : 0;
    any = any || l == 1;
  }
  if (!any) labels[rng.next_below(n)] = 1;  // guarantee a relevant item
  return labels;
}

double min_score_gap(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < v.size(); ++i)
    gap = std::min(gap, v[i] - v[i - 1]);
  return gap;
}

SuiteResult run_argmin_equivalence(std::uint64_t seed, int trials) {
  SuiteResult result;
  result.name = "argmin-equivalence";
  result.trials = trials;
  Rng rng(seed ^ kSuiteSalt);
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.next_below(6);  // 2..7
    std::vector<double> scores;
    for (;;) {
      scores = random_scores(rng, n);
      std::vector<double> sorted = scores;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end())
        break;
    }
    const RankPermutation expected = oracle::exhaustive_rank(scores);
    if (rank(scores) != expected) ++result.failures;
  }
  return result;
}

SuiteResult run_recall_closed_form(std::uint64_t seed, int trials) {
  SuiteResult result;
  result.name = "recall-closed-form";
  result.trials = trials;
  Rng rng(seed ^ (kSuiteSalt + 1));
  constexpr double kTolerance = 1e-9;
  constexpr double kAlphas[] = {0.0, 0.1, 0.25};
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.next_below(63);  // 2..64
    const auto scores = random_scores(rng, n);
    const auto labels = random_labels(rng, n);
    const MarginConfig margin{kAlphas[t % 3]};
    for (const auto scheme : {WeightScheme::Log, WeightScheme::LogLog}) {
      const double closed =
          recall_loss(scores, labels, scheme, margin, LambdaConfig{1.0}).value;
      const double series = oracle::series_recall_loss(
          scores, labels, scheme, static_cast<std::int64_t>(n) + 1, margin);
      const double err = std::abs(closed - series);
      result.max_error = std::max(result.max_error, err);
      if (err > kTolerance) ++result.failures;
    }
  }
  return result;
}

SuiteResult run_lemma_coarea(std::uint64_t seed, int trials) {
  SuiteResult result;
  result.name = "coarea-identity";
  result.trials = trials;
  Rng rng(seed ^ (kSuiteSalt + 2));
  constexpr double kTolerance = 1e-9;
  for (int t = 0; t < trials; ++t) {
    const std::size_t count = 1 + rng.next_below(40);
    std::vector<std::int64_t> multiset(count);
    std::int64_t max_r = 0;
    for (auto& r : multiset) {
      r = static_cast<std::int64_t>(1 + rng.next_below(100));
      max_r = std::max(max_r, r);
    }
    for (const auto scheme : {WeightScheme::Log, WeightScheme::LogLog}) {
      double lhs = 0.0;
      for (std::int64_t k = 1; k <= max_r; ++k) {
        std::int64_t at_least_k = 0;
        for (std::int64_t r : multiset)
          if (r >= k) ++at_least_k;
        lhs += weight_at(scheme, k) * static_cast<double>(at_least_k);
      }
      double rhs = 0.0;
      for (std::int64_t r : multiset) rhs += weight_cumulative(scheme, r);
      const double err = std::abs(lhs - rhs);
      result.max_error = std::max(result.max_error, err);
      if (err > kTolerance) ++result.failures;
    }
  }
  return result;
}

SuiteResult run_ap_agreement(std::uint64_t seed, int trials) {
  SuiteResult result;
  result.name = "ap-agreement";
  result.trials = trials;
  Rng rng(seed ^ (kSuiteSalt + 3));
  constexpr double kTolerance = 1e-12;
  // The hand-checkable instance first.
  {
    const std::vector<double> scores{0.9, 0.8, 0.7, 0.6};
    const std::vector<std::uint8_t> labels{1, 0, 1, 0};
    if (std::abs(oracle::brute_average_precision(scores, labels) - 5.0 / 6.0) >
        kTolerance)
      ++result.failures;
  }
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.next_below(127);  // 2..128
    const auto scores = random_scores(rng, n);
    const auto labels = random_labels(rng, n);
    const double loss =
        ap_loss(scores, labels, MarginConfig{0.0}, LambdaConfig{1.0}).value;
    const double brute = oracle::brute_average_precision(scores, labels);
    const double err = std::abs(loss - (1.0 - brute));
    result.max_error = std::max(result.max_error, err);
    if (err > kTolerance) ++result.failures;
  }
  return result;
}

SuiteResult run_gradient_fd(std::uint64_t seed, int trials) {
  SuiteResult result;
  result.name = "gradient-fd";
  Rng rng(seed ^ (kSuiteSalt + 4));
  constexpr double kTolerance = 1e-6;
  constexpr double kStep = 1e-5;
  constexpr double kLambdas[] = {0.5, 1.0, 2.0};
  const int instances = std::max(1, trials / 50);
  const int points_per_instance = 100;
  for (int inst = 0; inst < instances; ++inst) {
    const std::size_t n = 5 + rng.next_below(16);  // 5..20
    const LambdaConfig lambda{kLambdas[inst % 3]};
    std::vector<double> grad(n);
    for (auto& g : grad) g = rng.next_uniform(-2.0, 2.0);
    int accepted = 0;
    while (accepted < points_per_instance) {
      const auto scores = random_scores(rng, n, -2.0, 2.0);
      double err;
      try {
        err = oracle::finite_difference_check(scores, grad, lambda, kStep);
      } catch (const degenerate_input_error&) {
        continue;  // boundary point; resample
      }
      ++accepted;
      ++result.trials;
      result.max_error = std::max(result.max_error, err);
      if (err > kTolerance) ++result.failures;
    }
    // Zero-gradient locality: below half the minimum gap nothing moves.
    {
      const auto scores = random_scores(rng, n, -2.0, 2.0);
      double max_abs = 0.0;
      for (double g : grad) max_abs = std::max(max_abs, std::abs(g));
      const double gap = min_score_gap(scores);
      if (max_abs > 0.0 && gap > 0.0) {
        const LambdaConfig small{0.49 * gap / max_abs};
        const auto bb = rank_backward(scores, rank(scores), grad, small);
        ++result.trials;
        for (double g : bb)
          if (g != 0.0) { ++result.failures; break; }
      }
    }
  }
  return result;
}

SuiteResult run_margin_reduction(std::uint64_t seed, int trials) {
  SuiteResult result;
  result.name = "margin-reduction";
  result.trials = trials;
  Rng rng(seed ^ (kSuiteSalt + 5));
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 1 + rng.next_below(64);
    const auto scores = random_scores(rng, n);
    std::vector<std::uint8_t> labels(n);
    for (auto& l : labels) l = rng.next_double() < 0.5 ? 1 : 0;
    if (rank_with_margin(scores, labels, MarginConfig{0.0}) != rank(scores))
      ++result.failures;
  }
  return result;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"argmin-equivalence", "recall-closed-form", "coarea-identity",
          "ap-agreement",       "gradient-fd",        "margin-reduction"};
}

SuiteResult run_suite(std::string_view name, std::uint64_t seed, int trials) {
  if (trials <= 0) trials = 1000;
  const auto start = std::chrono::steady_clock::now();
  SuiteResult result;
  if (name == "argmin-equivalence")
    result = run_argmin_equivalence(seed, trials);
  else if (name == "recall-closed-form")
    result = run_recall_closed_form(seed, trials);
  else if (name == "coarea-identity")
    result = run_lemma_coarea(seed, trials);
  else if (name == "ap-agreement")
    result = run_ap_agreement(seed, trials);
  else if (name == "gradient-fd")
    result = run_gradient_fd(seed, trials);
  else if (name == "margin-reduction")
    result = run_margin_reduction(seed, trials);
  else
    throw std::invalid_argument("run_suite: unknown suite '" +
                                std::string(name) + "'");
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

std::vector<SuiteResult> run_all(std::uint64_t seed, int trials) {
  std::vector<SuiteResult> results;
  for (const auto& name : suite_names())
    results.push_back(run_suite(name, seed, trials));
  return results;
}

}  // namespace diffrank::verify
