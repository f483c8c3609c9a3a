#include <doctest.h>

#include <vector>

#include "diffrank/losses.hpp"
#include "diffrank/memory.hpp"
#include "diffrank/random.hpp"

using namespace diffrank;

TEST_CASE("extend on an empty buffer is the batch itself") {
  MemoryBuffer buffer(2);
  const std::vector<double> scores{0.1, 0.2, 0.3, 0.4};
  const std::vector<std::uint8_t> labels{1, 0, 0, 1};
  const auto ext = buffer.extend(scores, labels);
  CHECK(ext.scores == scores);
  CHECK(ext.labels == labels);
  CHECK(ext.current_mask == std::vector<std::uint8_t>(4, 1));
}

TEST_CASE("extend concatenates current batch first") {
  MemoryBuffer buffer(2);
  buffer.commit(std::vector<double>{9.0, 8.0, 7.0},
                std::vector<std::uint8_t>{0, 1, 0});
  const auto ext = buffer.extend(std::vector<double>{1.0, 2.0, 3.0, 4.0},
                                 std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(ext.scores == std::vector<double>{1.0, 2.0, 3.0, 4.0, 9.0, 8.0, 7.0});
  CHECK(ext.labels == std::vector<std::uint8_t>{1, 1, 0, 0, 0, 1, 0});
  CHECK(ext.current_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0});
}

TEST_CASE("commit evicts the oldest batch beyond capacity") {
  MemoryBuffer buffer(2);
  buffer.commit(std::vector<double>{1.0, 1.5}, std::vector<std::uint8_t>{1, 0});
  buffer.commit(std::vector<double>{2.0, 2.5}, std::vector<std::uint8_t>{0, 1});
  buffer.commit(std::vector<double>{3.0, 3.5}, std::vector<std::uint8_t>{1, 1});
  CHECK(buffer.stored_batches() == 2);
  const auto ext = buffer.extend(std::vector<double>{4.0, 4.5},
                                 std::vector<std::uint8_t>{0, 0});
  // Newest stored batch right after the current one, oldest last; the
  // labels round-trip confirms eviction order.
  CHECK(ext.scores == std::vector<double>{4.0, 4.5, 3.0, 3.5, 2.0, 2.5});
  CHECK(ext.labels == std::vector<std::uint8_t>{0, 0, 1, 1, 0, 1});
  CHECK(ext.scores.size() == 6);
}

TEST_CASE("stored scores are bit-identical to what was committed") {
  MemoryBuffer buffer(1);
  const std::vector<double> scores{0.123456789, -1e-17, 3.0e200};
  buffer.commit(scores, std::vector<std::uint8_t>{1, 0, 1});
  const auto ext = buffer.extend(std::vector<double>{1.0},
                                 std::vector<std::uint8_t>{1});
  for (std::size_t i = 0; i < scores.size(); ++i)
    CHECK(ext.scores[i + 1] == scores[i]);
}

TEST_CASE("zero-capacity buffer reproduces memoryless operation bitwise") {
  MemoryBuffer buffer(0);
  Rng rng(3);
  for (int step = 0; step < 10; ++step) {
    std::vector<double> scores(8);
    for (auto& s : scores) s = rng.next_uniform(-1.0, 1.0);
    std::vector<std::uint8_t> labels{1, 0, 1, 0, 0, 1, 0, 0};
    const auto ext = buffer.extend(scores, labels);
    CHECK(ext.scores == scores);
    CHECK(ext.current_mask == std::vector<std::uint8_t>(8, 1));

    const auto direct = ap_loss(scores, labels, MarginConfig{0.1},
                                LambdaConfig{0.5});
    const auto extended = ap_loss(ext.scores, ext.labels, MarginConfig{0.1},
                                  LambdaConfig{0.5});
    CHECK(direct.value == extended.value);
    CHECK(direct.grad == mask_gradient(extended.grad, ext.current_mask));
    buffer.commit(scores, labels);
    CHECK(buffer.stored_batches() == 0);
  }
}

TEST_CASE("mask_gradient zeroes memory positions") {
  const std::vector<double> grad{1.0, 2.0, 3.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  CHECK(mask_gradient(grad, mask) == std::vector<double>{1.0, 2.0, 0.0});
  CHECK(current_slice(grad, mask) == std::vector<double>{1.0, 2.0});
  CHECK(mask_gradient(grad, std::vector<std::uint8_t>{1, 1, 1}) == grad);
  CHECK(mask_gradient(grad, std::vector<std::uint8_t>{0, 0, 0}) ==
        std::vector<double>(3, 0.0));
  CHECK_THROWS_AS(mask_gradient(grad, std::vector<std::uint8_t>{1}),
                  std::invalid_argument);
}

TEST_CASE("loss gradient through memory is current-batch sized after slicing") {
  MemoryBuffer buffer(3);
  Rng rng(5);
  for (int step = 0; step < 4; ++step) {
    std::vector<double> scores(6);
    for (auto& s : scores) s = rng.next_uniform(-1.0, 1.0);
    const std::vector<std::uint8_t> labels{1, 0, 0, 1, 0, 0};
    const auto ext = buffer.extend(scores, labels);
    const auto loss = recall_loss(ext.scores, ext.labels, WeightScheme::Log,
                                  MarginConfig{0.05}, LambdaConfig{1.0});
    const auto masked = mask_gradient(loss.grad, ext.current_mask);
    for (std::size_t i = scores.size(); i < masked.size(); ++i)
      CHECK(masked[i] == 0.0);
    CHECK(current_slice(masked, ext.current_mask).size() == scores.size());
    buffer.commit(scores, labels);
  }
  CHECK(buffer.stored_batches() == 3);
  CHECK(buffer.stored_items() == 18);
}

TEST_CASE("extend validates input") {
  MemoryBuffer buffer(1);
  CHECK_THROWS_AS(
      buffer.extend(std::vector<double>{}, std::vector<std::uint8_t>{}),
      std::invalid_argument);
  CHECK_THROWS_AS(buffer.extend(std::vector<double>{1.0},
                                std::vector<std::uint8_t>{1, 0}),
                  std::invalid_argument);
}
