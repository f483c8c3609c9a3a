#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "diffrank/types.hpp"

namespace diffrank::synth {

struct DatasetParams {
  std::size_t num_classes = 16;
  std::size_t per_class = 32;  // >= 2 so every query has a positive
  std::size_t input_dim = 32;
  double cluster_spread = 0.22;
  // 0: class centers uniform on the sphere. > 0: centers confined to a cap
  // of this scale around a common axis, giving near-tied similarities under
  // any random linear embedding.
  double center_cone = 0.0;
  std::uint64_t seed = 0;
};

struct SynthDataset {
  std::size_t input_dim = 0;
  std::vector<double> points;  // row-major, num_points x input_dim
  std::vector<std::int32_t> class_ids;

  std::size_t num_points() const { return class_ids.size(); }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * input_dim, input_dim};
  }
};

SynthDataset generate(const DatasetParams& params);

/// Deterministic split: within each class, even occurrences go to the train
/// half, odd to the eval half.
std::pair<SynthDataset, SynthDataset> split_dataset(const SynthDataset& data);

/// Linear map to the unit sphere: embed(x) = normalize(W^T x).
struct EmbeddingModel {
  std::size_t input_dim = 0;
  std::size_t embed_dim = 0;
  std::vector<double> weights;  // row-major, input_dim x embed_dim

  static EmbeddingModel random_init(std::size_t input_dim,
                                    std::size_t embed_dim,
                                    std::uint64_t seed);

  void embed(std::span<const double> point, std::span<double> out) const;
  std::vector<double> embed_all(const SynthDataset& data) const;
};

enum class LossKind { RecallLog, RecallLogLog, Ap, MapPlusApc };

struct AdamParams {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Optional step schedule: multiply the rate by decay_factor every
  // decay_every steps (0 = constant).
  double decay_factor = 1.0;
  std::size_t decay_every = 0;
};

struct TrainConfig {
  LossKind loss = LossKind::RecallLog;
  double alpha = 0.05;
  double lambda = 1.0;
  std::size_t memory_batches = 3;  // tau
  std::size_t batch_size = 64;
  std::size_t samples_per_class = 4;
  std::size_t embed_dim = 16;
  std::size_t steps = 600;
  std::size_t eval_every = 10;
  AdamParams adam{.learning_rate = 0.05, .decay_factor = 0.3,
                  .decay_every = 300};
  std::uint64_t seed = 0;
};

/// FIFO of detached embeddings from past batches. The score-level
/// MemoryBuffer stores score vectors directly; for similarity training the
/// per-query scores against old items have to be recomputed from their
/// stored embeddings, so the buffer holds those instead. Gradient masking
/// is shared with the score-level mechanism (mask_gradient).
class EmbeddingMemory {
 public:
  explicit EmbeddingMemory(std::size_t capacity_batches, std::size_t embed_dim)
      : capacity_(capacity_batches), embed_dim_(embed_dim) {}

  void commit(std::span<const double> embeddings,
              std::span<const std::int32_t> class_ids);
  std::size_t total_items() const;
  std::size_t embed_dim() const { return embed_dim_; }

  // Newest batch first, matching the concatenation order of extend().
  void gather(std::vector<double>& embeddings,
              std::vector<std::int32_t>& class_ids) const;

 private:
  struct Batch {
    std::vector<double> embeddings;
    std::vector<std::int32_t> class_ids;
  };
  std::size_t capacity_;
  std::size_t embed_dim_;
  std::deque<Batch> batches_;  // newest at front
};

struct QueryScores {
  ScoreVector scores;
  LabelVector labels;
  std::vector<std::uint8_t> current_mask;
};

/// Cosine similarities of one batch element against all other batch
/// elements (self excluded) and then against memory items, newest first.
QueryScores similarity_scores(const EmbeddingModel& model,
                              const SynthDataset& data,
                              std::span<const std::size_t> batch,
                              std::size_t query_pos,
                              const EmbeddingMemory* memory = nullptr);

struct BatchResult {
  double value = 0.0;
  std::vector<double> weight_grad;  // d/dW of the mean per-query loss
};

/// Mean per-query loss over the batch with its analytic weight gradient
/// (blackbox score gradients chained through similarity and normalization).
BatchResult batch_loss(const EmbeddingModel& model, const SynthDataset& data,
                       std::span<const std::size_t> batch,
                       const TrainConfig& config,
                       const EmbeddingMemory* memory = nullptr);

/// The batch-level piecewise-affine objective whose gradient batch_loss
/// computes; finite-difference target for gradient tests. Memoryless.
double batch_surrogate(const EmbeddingModel& model, const SynthDataset& data,
                       std::span<const std::size_t> batch,
                       const TrainConfig& config);

struct Metrics {
  std::vector<double> recall_at;  // aligned with the ks argument
  double map = 0.0;
  std::size_t skipped_queries = 0;
};

/// Dataset-wide R@K and mAP with every item acting as a query against all
/// others (plain ranking, no margin). Queries without a positive are
/// excluded and counted in skipped_queries.
Metrics evaluate(const EmbeddingModel& model, const SynthDataset& data,
                 std::span<const std::int64_t> ks);

struct HistoryRow {
  std::size_t step = 0;
  double loss = 0.0;
  double r_at_1 = 0.0;
  double r_at_4 = 0.0;
  double map = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  HistoryRow best;  // row with the highest R@1 seen
  EmbeddingModel model;
};

/// Full training loop: class-balanced batches, margin + memory + chosen
/// loss, Adam updates, eval-split metrics every eval_every steps.
/// Deterministic given config.seed. Throws std::runtime_error with a
/// diagnostic if the loss turns non-finite.
TrainResult train(const TrainConfig& config, const SynthDataset& data);

struct CollapseRun {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double initial_gap = 0.0;  // mean over queries of min(pos) - max(neg)
  double final_gap = 0.0;
  double max_weight_delta = 0.0;  // max |W_final - W_init|
};

struct CollapseReport {
  CollapseRun without_margin;  // alpha = 0
  CollapseRun with_margin;     // alpha > 0
};

/// Paired runs from one near-tie initialization (cone-clustered data under
/// a random embedding): the alpha = 0 run sits on a zero-gradient plateau,
/// the alpha > 0 run trains real score gaps.
CollapseReport collapse_experiment(std::uint64_t seed, double alpha = 0.1);

}  // namespace diffrank::synth
