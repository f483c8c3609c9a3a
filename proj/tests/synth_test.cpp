#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "diffrank/random.hpp"
#include "diffrank/synth.hpp"

using namespace diffrank;
using namespace diffrank::synth;

TEST_CASE("generate is deterministic and honors zero spread") {
  DatasetParams params;
  params.num_classes = 2;
  params.per_class = 4;
  params.input_dim = 8;
  params.cluster_spread = 0.0;
  params.seed = 0;
  const auto a = generate(params);
  const auto b = generate(params);
  CHECK(a.points == b.points);
  CHECK(a.class_ids == b.class_ids);
  // Zero noise: points within a class are identical.
  for (std::size_t i = 0; i < a.num_points(); ++i)
    for (std::size_t j = i + 1; j < a.num_points(); ++j)
      if (a.class_ids[i] == a.class_ids[j])
        for (std::size_t d = 0; d < a.input_dim; ++d)
          CHECK(a.point(i)[d] == a.point(j)[d]);

  params.per_class = 1;
  CHECK_THROWS_AS(generate(params), std::invalid_argument);
}

TEST_CASE("split_dataset halves every class deterministically") {
  DatasetParams params;
  params.num_classes = 4;
  params.per_class = 6;
  params.input_dim = 5;
  const auto data = generate(params);
  const auto [train_half, eval_half] = split_dataset(data);
  CHECK(train_half.num_points() == 12);
  CHECK(eval_half.num_points() == 12);
  for (std::int32_t c = 0; c < 4; ++c) {
    const auto count = [c](const SynthDataset& d) {
      return std::count(d.class_ids.begin(), d.class_ids.end(), c);
    };
    CHECK(count(train_half) == 3);
    CHECK(count(eval_half) == 3);
  }
}

TEST_CASE("embeddings lie on the unit sphere") {
  DatasetParams params;
  const auto data = generate(params);
  const auto model = EmbeddingModel::random_init(params.input_dim, 16, 9);
  const auto embeddings = model.embed_all(data);
  for (std::size_t i = 0; i < data.num_points(); ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      const double v = embeddings[i * 16 + j];
      norm += v * v;
    }
    CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);
  }
}

TEST_CASE("similarity_scores excludes the query itself") {
  DatasetParams params;
  params.num_classes = 3;
  params.per_class = 4;
  params.input_dim = 8;
  const auto data = generate(params);
  const auto model = EmbeddingModel::random_init(8, 6, 1);
  std::vector<std::size_t> batch{0, 1, 4, 5, 8, 9};
  const auto q = similarity_scores(model, data, batch, 2);
  CHECK(q.scores.size() == batch.size() - 1);
  CHECK(q.labels.size() == q.scores.size());
  CHECK(q.current_mask == std::vector<std::uint8_t>(q.scores.size(), 1));
  // Labels mark batch members of the query's class (positions 4,5 hold the
  // other class-1 item once the query at position 2 is dropped).
  CHECK(q.labels == std::vector<std::uint8_t>{0, 0, 1, 0, 0});

  CHECK_THROWS_AS(similarity_scores(model, data, std::vector<std::size_t>{0},
                                    0),
                  std::invalid_argument);
  CHECK_THROWS_AS(similarity_scores(model, data, batch, 6),
                  std::invalid_argument);
}

TEST_CASE("identical points give all-one similarities") {
  DatasetParams params;
  params.num_classes = 2;
  params.per_class = 3;
  params.input_dim = 6;
  params.cluster_spread = 0.0;
  const auto data = generate(params);
  const auto model = EmbeddingModel::random_init(6, 4, 3);
  std::vector<std::size_t> batch{0, 1, 2};  // one zero-spread class
  const auto q = similarity_scores(model, data, batch, 0);
  for (double s : q.scores) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("memory extends the per-query score vector") {
  DatasetParams params;
  params.num_classes = 3;
  params.per_class = 4;
  params.input_dim = 8;
  const auto data = generate(params);
  const auto model = EmbeddingModel::random_init(8, 6, 1);
  EmbeddingMemory memory(2, 6);
  std::vector<std::size_t> past{0, 1, 2, 3};
  std::vector<double> embeddings(past.size() * 6);
  std::vector<std::int32_t> classes(past.size());
  for (std::size_t i = 0; i < past.size(); ++i) {
    model.embed(data.point(past[i]), {embeddings.data() + i * 6, 6});
    classes[i] = data.class_ids[past[i]];
  }
  memory.commit(embeddings, classes);
  CHECK(memory.total_items() == 4);

  std::vector<std::size_t> batch{4, 5, 6, 7};
  const auto q = similarity_scores(model, data, batch, 0, &memory);
  CHECK(q.scores.size() == batch.size() - 1 + 4);
  CHECK(std::accumulate(q.current_mask.begin(), q.current_mask.end(), 0) == 3);
  for (std::size_t i = 3; i < q.current_mask.size(); ++i)
    CHECK(q.current_mask[i] == 0);
}

TEST_CASE("analytic weight gradient matches finite differences") {
  DatasetParams params;
  params.num_classes = 3;
  params.per_class = 4;
  params.input_dim = 8;
  params.cluster_spread = 0.3;
  params.seed = 17;
  const auto data = generate(params);
  std::vector<std::size_t> batch(data.num_points());
  std::iota(batch.begin(), batch.end(), std::size_t{0});

  for (const auto kind :
       {LossKind::RecallLog, LossKind::RecallLogLog, LossKind::Ap,
        LossKind::MapPlusApc}) {
    TrainConfig cfg;
    cfg.loss = kind;
    cfg.alpha = 0.1;
    cfg.lambda = 1.0;
    cfg.memory_batches = 0;
    EmbeddingModel model = EmbeddingModel::random_init(8, 4, 23);

    const auto analytic = batch_loss(model, data, batch, cfg);
    const double h = 1e-6;
    double max_abs_grad = 0.0;
    for (double g : analytic.weight_grad)
      max_abs_grad = std::max(max_abs_grad, std::abs(g));
    REQUIRE(max_abs_grad > 0.0);

    double max_err = 0.0;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
      const double w0 = model.weights[i];
      model.weights[i] = w0 + h;
      const double up = batch_surrogate(model, data, batch, cfg);
      model.weights[i] = w0 - h;
      const double down = batch_surrogate(model, data, batch, cfg);
      model.weights[i] = w0;
      const double fd = (up - down) / (2.0 * h);
      max_err = std::max(max_err, std::abs(fd - analytic.weight_grad[i]));
    }
    CHECK(max_err / max_abs_grad <= 1e-4);
  }
}

TEST_CASE("evaluate reports monotone recall and bounded metrics") {
  DatasetParams params;
  params.num_classes = 4;
  params.per_class = 6;
  params.input_dim = 10;
  const auto data = generate(params);
  const auto model = EmbeddingModel::random_init(10, 6, 5);
  const std::vector<std::int64_t> ks{1, 2, 4, 8};
  const auto metrics = evaluate(model, data, ks);
  for (std::size_t k = 1; k < ks.size(); ++k)
    CHECK(metrics.recall_at[k] >= metrics.recall_at[k - 1]);
  for (double r : metrics.recall_at) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
  CHECK(metrics.map > 0.0);
  CHECK(metrics.map <= 1.0);
  CHECK(metrics.skipped_queries == 0);
}

TEST_CASE("zero-spread data is perfectly retrievable by any model") {
  DatasetParams params;
  params.num_classes = 4;
  params.per_class = 4;
  params.input_dim = 8;
  params.cluster_spread = 0.0;
  const auto data = generate(params);
  const auto model = EmbeddingModel::random_init(8, 6, 77);
  const std::vector<std::int64_t> ks{1, 4};
  const auto metrics = evaluate(model, data, ks);
  CHECK(metrics.recall_at[0] == doctest::Approx(1.0));
  CHECK(metrics.map == doctest::Approx(1.0));
}

TEST_CASE("a collapsed rank-one model scores near the class prior") {
  DatasetParams params;
  params.num_classes = 4;
  params.per_class = 8;
  params.input_dim = 8;
  params.cluster_spread = 0.05;
  params.center_cone = 0.05;  // keeps every point on one side of the axis
  const auto data = generate(params);

  std::vector<double> axis(params.input_dim, 0.0);
  for (std::size_t i = 0; i < data.num_points(); ++i)
    for (std::size_t d = 0; d < params.input_dim; ++d)
      axis[d] += data.point(i)[d];
  EmbeddingModel model;
  model.input_dim = params.input_dim;
  model.embed_dim = 4;
  model.weights.assign(params.input_dim * 4, 0.0);
  for (std::size_t d = 0; d < params.input_dim; ++d)
    model.weights[d * 4] = axis[d];  // rank one: every embedding collapses

  const std::vector<std::int64_t> ks{1};
  const auto metrics = evaluate(model, data, ks);
  const double prior =
      static_cast<double>(params.per_class) / data.num_points();
  CHECK(std::abs(metrics.recall_at[0] - prior) <= 0.15);
}

TEST_CASE("training on zero-spread data reaches perfect recall quickly") {
  DatasetParams params;
  params.num_classes = 4;
  params.per_class = 8;
  params.input_dim = 8;
  params.cluster_spread = 0.0;
  const auto data = generate(params);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.embed_dim = 6;
  cfg.steps = 100;
  cfg.eval_every = 10;
  cfg.adam.decay_every = 0;
  const auto result = train(cfg, data);
  CHECK(result.history.back().r_at_1 == doctest::Approx(1.0));
}

TEST_CASE("training improves metrics on clustered data") {
  DatasetParams params;
  params.num_classes = 6;
  params.per_class = 8;
  params.input_dim = 12;
  params.cluster_spread = 0.2;
  params.seed = 4;
  const auto data = generate(params);
  TrainConfig cfg;
  cfg.batch_size = 24;
  cfg.embed_dim = 8;
  cfg.steps = 150;
  cfg.eval_every = 25;
  cfg.seed = 4;
  cfg.adam.decay_every = 0;
  const auto result = train(cfg, data);
  CHECK(result.history.back().map > result.history.front().map);
  CHECK(result.history.back().loss < result.history.front().loss);
  CHECK(result.best.r_at_1 >= result.history.front().r_at_1);
}

TEST_CASE("training history is bitwise deterministic") {
  DatasetParams params;
  params.num_classes = 4;
  params.per_class = 6;
  params.input_dim = 8;
  const auto data = generate(params);
  TrainConfig cfg;
  cfg.batch_size = 12;
  cfg.embed_dim = 6;
  cfg.steps = 40;
  cfg.eval_every = 8;
  cfg.memory_batches = 2;
  const auto a = train(cfg, data);
  const auto b = train(cfg, data);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].step == b.history[i].step);
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].r_at_1 == b.history[i].r_at_1);
    CHECK(a.history[i].map == b.history[i].map);
  }
  CHECK(a.model.weights == b.model.weights);
}

TEST_CASE("margin rescues training from a near-tie initialization") {
  const auto report = collapse_experiment(0, 0.1);
  // Without the margin: zero loss, zero gradient, frozen weights.
  CHECK(report.without_margin.initial_loss == 0.0);
  CHECK(report.without_margin.final_loss == 0.0);
  CHECK(report.without_margin.max_weight_delta == 0.0);
  CHECK(report.without_margin.final_gap == report.without_margin.initial_gap);
  CHECK(report.without_margin.initial_gap < 0.05);
  // With the margin: real training signal and real score gaps at the end.
  CHECK(report.with_margin.initial_loss > 1.0);
  CHECK(report.with_margin.final_loss < 0.05 * report.with_margin.initial_loss);
  CHECK(report.with_margin.final_gap >= 0.1);
  CHECK(report.with_margin.max_weight_delta > 0.01);
}
