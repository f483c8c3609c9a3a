#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "diffrank/oracle.hpp"
#include "diffrank/random.hpp"
#include "diffrank/ranking.hpp"

using namespace diffrank;

namespace {

std::vector<double> distinct_scores(Rng& rng, std::size_t n) {
  for (;;) {
    std::vector<double> scores(n);
    for (auto& s : scores) s = rng.next_uniform(-1.0, 1.0);
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end())
      return scores;
  }
}

}  // namespace

TEST_CASE("rank basic examples") {
  CHECK(rank(std::vector<double>{0.5, 2.0, 1.0}) ==
        RankPermutation{3, 1, 2});
  CHECK(rank(std::vector<double>{7.0}) == RankPermutation{1});
  // Tie goes to the lower index.
  CHECK(rank(std::vector<double>{1.0, 1.0}) == RankPermutation{1, 2});
}

TEST_CASE("rank rejects invalid input") {
  CHECK_THROWS_AS(rank(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(rank(std::vector<double>{1.0, std::nan("")}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      rank(std::vector<double>{std::numeric_limits<double>::infinity()}),
      std::invalid_argument);
}

TEST_CASE("rank is a permutation and matches pairwise counting") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.next_below(200);
    const auto scores = distinct_scores(rng, n);
    const auto ranks = rank(scores);

    std::vector<bool> seen(n, false);
    for (auto r : ranks) {
      REQUIRE(r >= 1);
      REQUIRE(r <= static_cast<std::int32_t>(n));
      REQUIRE(!seen[r - 1]);
      seen[r - 1] = true;
    }
    // rank_i = 1 + #{j : y_j > y_i} on distinct input.
    for (std::size_t i = 0; i < n; ++i) {
      std::int32_t above = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (scores[j] > scores[i]) ++above;
      REQUIRE(ranks[i] == 1 + above);
    }
  }
}

TEST_CASE("rank tie-break adds equal entries with smaller index") {
  const std::vector<double> scores{2.0, 1.0, 2.0, 1.0, 2.0};
  const auto ranks = rank(scores);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::int32_t expected = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] > scores[i]) ++expected;
      if (scores[j] == scores[i] && j < i) ++expected;
    }
    CHECK(ranks[i] == expected);
  }
}

TEST_CASE("rank equals the exhaustive argmin on small inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.next_below(6);
    const auto scores = distinct_scores(rng, n);
    CHECK(rank(scores) == oracle::exhaustive_rank(scores));
  }
}

TEST_CASE("rearrangement inequality on sampled permutations") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.next_below(30);
    auto scores = distinct_scores(rng, n);
    std::sort(scores.begin(), scores.end(), std::greater<>());
    double identity_value = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      identity_value += scores[i] * static_cast<double>(i + 1);
    std::vector<std::int32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const auto pick = k + rng.next_below(n - k);
      std::swap(perm[k], perm[pick]);
    }
    double permuted_value = 0.0;
    for (std::size_t i = 0; i < n; ++i) permuted_value += scores[i] * perm[i];
    CHECK(identity_value <= permuted_value + 1e-12);
  }
}

TEST_CASE("rank is invariant under positive scaling") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next_below(50);
    const auto scores = distinct_scores(rng, n);
    const double c = rng.next_uniform(0.01, 10.0);
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = c * scores[i];
    CHECK(rank(scaled) == rank(scores));
  }
}

TEST_CASE("rank_with_margin shifts scores before ranking") {
  const std::vector<double> scores{0.55, 0.5};
  const std::vector<std::uint8_t> labels{1, 0};
  CHECK(rank_with_margin(scores, labels, MarginConfig{0.2}) ==
        RankPermutation{2, 1});
  CHECK(rank_with_margin(scores, labels, MarginConfig{0.0}) ==
        RankPermutation{1, 2});
  // Uniform relevance: shift is constant, order is preserved.
  const std::vector<double> all{3.0, 2.0, 1.0};
  const std::vector<std::uint8_t> ones{1, 1, 1};
  for (double alpha : {0.0, 0.3, 2.0})
    CHECK(rank_with_margin(all, ones, MarginConfig{alpha}) ==
          RankPermutation{1, 2, 3});
}

TEST_CASE("rank_with_margin validates input") {
  const std::vector<double> scores{1.0, 2.0};
  CHECK_THROWS_AS(rank_with_margin(scores, std::vector<std::uint8_t>{1},
                                   MarginConfig{0.1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(rank_with_margin(scores, std::vector<std::uint8_t>{1, 2},
                                   MarginConfig{0.1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(rank_with_margin(scores, std::vector<std::uint8_t>{1, 0},
                                   MarginConfig{-0.5}),
                  std::invalid_argument);
}

TEST_CASE("rank_backward worked examples") {
  const std::vector<double> scores{1.0, 2.0};
  const auto forward = rank(scores);
  CHECK(rank_backward(scores, forward, std::vector<double>{1.0, -1.0},
                      LambdaConfig{1.0}) == std::vector<double>{-1.0, 1.0});
  CHECK(rank_backward(scores, forward, std::vector<double>{1.0, -1.0},
                      LambdaConfig{0.1}) == std::vector<double>{0.0, 0.0});
  const std::vector<double> three{0.3, 0.2, 0.1};
  for (double lambda : {0.1, 1.0, 5.0})
    CHECK(rank_backward(three, rank(three), std::vector<double>{0, 0, 0},
                        LambdaConfig{lambda}) ==
          std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("rank_backward validates input") {
  const std::vector<double> scores{1.0, 2.0};
  const auto forward = rank(scores);
  CHECK_THROWS_AS(rank_backward(scores, forward, std::vector<double>{1.0},
                                LambdaConfig{1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(rank_backward(scores, forward,
                                std::vector<double>{1.0, -1.0},
                                LambdaConfig{0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(rank_backward(scores, forward,
                                std::vector<double>{1.0, -1.0},
                                LambdaConfig{-2.0}),
                  std::invalid_argument);
}

TEST_CASE("rank_backward entries are integer multiples of 1/lambda") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.next_below(20);
    const auto scores = distinct_scores(rng, n);
    std::vector<double> grad(n);
    for (auto& g : grad) g = rng.next_uniform(-3.0, 3.0);
    const LambdaConfig lambda{rng.next_uniform(0.1, 4.0)};
    const auto out = rank_backward(scores, rank(scores), grad, lambda);
    for (double g : out) {
      const double scaled = g * lambda.lambda;
      CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
    }
  }
}

TEST_CASE("zero-gradient locality below half the minimum gap") {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.next_below(20);
    const auto scores = distinct_scores(rng, n);
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < n; ++i)
      gap = std::min(gap, sorted[i] - sorted[i - 1]);
    std::vector<double> grad(n);
    double max_abs = 0.0;
    for (auto& g : grad) {
      g = rng.next_uniform(-2.0, 2.0);
      max_abs = std::max(max_abs, std::abs(g));
    }
    if (max_abs == 0.0) continue;
    const LambdaConfig lambda{0.45 * gap / max_abs};
    const auto out = rank_backward(scores, rank(scores), grad, lambda);
    for (double g : out) CHECK(g == 0.0);
  }
}

TEST_CASE("perturbed solve never increases the linear rank loss") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.next_below(40);
    const auto scores = distinct_scores(rng, n);
    std::vector<double> g(n);
    for (auto& gi : g) gi = rng.next_uniform(-2.0, 2.0);
    const double lambda = rng.next_uniform(0.05, 5.0);
    std::vector<double> perturbed(n);
    for (std::size_t i = 0; i < n; ++i)
      perturbed[i] = scores[i] + lambda * g[i];
    const auto base_rank = rank(scores);
    const auto new_rank = rank(perturbed);
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      before += g[i] * base_rank[i];
      after += g[i] * new_rank[i];
    }
    CHECK(after <= before + 1e-9);
  }
}

TEST_CASE("surrogate_value examples") {
  const std::vector<double> scores{1.0, 2.0};
  for (double lambda : {0.1, 1.0, 3.0})
    CHECK(surrogate_value(scores, std::vector<double>{0.0, 0.0},
                          LambdaConfig{lambda}) == doctest::Approx(0.0));
  // Rank unchanged: the surrogate equals the true loss g . rank(y).
  CHECK(surrogate_value(scores, std::vector<double>{1.0, -1.0},
                        LambdaConfig{0.1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(surrogate_value(scores, std::vector<double>{1.0, -1.0},
                                  LambdaConfig{0.0}),
                  std::invalid_argument);
}

TEST_CASE("surrogate landscape: faithful for tiny lambda, smoother for large") {
  Rng rng(3);
  const std::size_t dims = 20, grid = 25;
  std::vector<double> base(dims), g(dims), u(dims), v(dims);
  for (auto& x : base) x = rng.next_gaussian();
  for (auto& x : g) x = rng.next_gaussian();
  for (auto& x : u) x = rng.next_gaussian();
  for (auto& x : v) x = rng.next_gaussian();
  const auto normalize = [](std::vector<double>& w) {
    double n = 0.0;
    for (double x : w) n += x * x;
    n = std::sqrt(n);
    for (double& x : w) x /= n;
  };
  normalize(u);
  double proj = 0.0;
  for (std::size_t i = 0; i < dims; ++i) proj += u[i] * v[i];
  for (std::size_t i = 0; i < dims; ++i) v[i] -= proj * u[i];
  normalize(v);

  const double lambdas[] = {1e-9, 0.2, 2.0};
  std::size_t distinct_counts[3] = {};
  std::size_t faithful_cells = 0;
  const std::size_t cells = grid * grid;
  std::vector<double> point(dims);
  for (int li = 0; li < 3; ++li) {
    std::set<long long> distinct;
    for (std::size_t r = 0; r < grid; ++r) {
      for (std::size_t c = 0; c < grid; ++c) {
        const double s = -3.0 + 6.0 * static_cast<double>(r) / (grid - 1);
        const double t = -3.0 + 6.0 * static_cast<double>(c) / (grid - 1);
        for (std::size_t i = 0; i < dims; ++i)
          point[i] = base[i] + s * u[i] + t * v[i];
        const double sv =
            surrogate_value(point, g, LambdaConfig{lambdas[li]});
        distinct.insert(std::llround(sv * 1e7));
        if (li == 0) {
          const auto ranks = rank(point);
          double true_loss = 0.0;
          for (std::size_t i = 0; i < dims; ++i) true_loss += g[i] * ranks[i];
          if (sv == true_loss) ++faithful_cells;
        }
      }
    }
    distinct_counts[li] = distinct.size();
  }
  // Vanishing lambda reproduces the piecewise-constant loss away from the
  // measure-zero region boundaries.
  CHECK(faithful_cells >= cells * 99 / 100);
  CHECK(distinct_counts[0] < distinct_counts[1]);
  CHECK(distinct_counts[1] <= distinct_counts[2]);
}

TEST_CASE("surrogate matches the true loss wherever ranking is unchanged") {
  Rng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.next_below(20);
    const auto scores = distinct_scores(rng, n);
    std::vector<double> g(n);
    for (auto& gi : g) gi = rng.next_uniform(-2.0, 2.0);
    const double lambda = rng.next_uniform(0.01, 3.0);
    std::vector<double> perturbed(n);
    for (std::size_t i = 0; i < n; ++i)
      perturbed[i] = scores[i] + lambda * g[i];
    const auto base_rank = rank(scores);
    if (rank(perturbed) != base_rank) continue;
    double true_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) true_loss += g[i] * base_rank[i];
    CHECK(surrogate_value(scores, g, LambdaConfig{lambda}) ==
          doctest::Approx(true_loss).epsilon(1e-12));
  }
}
