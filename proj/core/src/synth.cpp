#include "diffrank/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "diffrank/losses.hpp"
#include "diffrank/memory.hpp"
#include "diffrank/random.hpp"
#include "diffrank/ranking.hpp"

namespace diffrank::synth {

namespace {

void normalize_in_place(std::span<double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < 1e-300)
    throw std::runtime_error("normalize: zero-norm vector");
  for (double& x : v) x /= norm;
}

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.next_gaussian();
  normalize_in_place(v);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;

  explicit Adam(std::size_t size) : m(size, 0.0), v(size, 0.0) {}

  void step(std::vector<double>& weights, const std::vector<double>& grad,
            const AdamParams& p) {
    ++t;
    double rate = p.learning_rate;
    if (p.decay_every > 0)
      rate *= std::pow(p.decay_factor,
                       static_cast<double>(t / p.decay_every));
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * grad[i];
      v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      weights[i] -= rate * m_hat / (std::sqrt(v_hat) + p.epsilon);
    }
  }
};

struct BatchView {
  std::vector<double> embeddings;  // B x e
  std::vector<double> norms;       // pre-normalization norms, for backward
  std::vector<std::int32_t> classes;
  std::vector<double> memory_embeddings;  // M x e, newest batch first
  std::vector<std::int32_t> memory_classes;

  std::size_t batch_size() const { return classes.size(); }
  std::size_t memory_items() const { return memory_classes.size(); }
};

BatchView make_batch_view(const EmbeddingModel& model,
                          const SynthDataset& data,
                          std::span<const std::size_t> batch,
                          const EmbeddingMemory* memory) {
  if (batch.size() < 2)
    throw std::invalid_argument("batch must contain at least 2 items");
  const std::size_t e = model.embed_dim;
  BatchView view;
  view.embeddings.resize(batch.size() * e);
  view.norms.resize(batch.size());
  view.classes.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i] >= data.num_points())
      throw std::invalid_argument("batch index out of range");
    const auto x = data.point(batch[i]);
    std::span<double> z{view.embeddings.data() + i * e, e};
    for (std::size_t j = 0; j < e; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < model.input_dim; ++a)
        acc += x[a] * model.weights[a * e + j];
      z[j] = acc;
    }
    double norm = std::sqrt(dot(z, z));
    if (norm < 1e-300)
      throw std::runtime_error("embed: zero-norm embedding");
    for (double& zj : z) zj /= norm;
    view.norms[i] = norm;
    view.classes[i] = data.class_ids[batch[i]];
  }
  if (memory != nullptr)
    memory->gather(view.memory_embeddings, view.memory_classes);
  return view;
}

QueryScores query_scores_from_view(const BatchView& view,
                                   std::size_t query_pos) {
  const std::size_t e =
      view.embeddings.size() / std::max<std::size_t>(1, view.batch_size());
  const std::span<const double> eq{view.embeddings.data() + query_pos * e, e};
  QueryScores out;
  const std::size_t total =
      view.batch_size() - 1 + view.memory_items();
  out.scores.reserve(total);
  out.labels.reserve(total);
  for (std::size_t j = 0; j < view.batch_size(); ++j) {
    if (j == query_pos) continue;  // self-similarity is disregarded
    const std::span<const double> ej{view.embeddings.data() + j * e, e};
    out.scores.push_back(dot(eq, ej));
    out.labels.push_back(view.classes[j] == view.classes[query_pos] ? 1 : 0);
  }
  out.current_mask.assign(out.scores.size(), 1);
  for (std::size_t k = 0; k < view.memory_items(); ++k) {
    const std::span<const double> mk{view.memory_embeddings.data() + k * e, e};
    out.scores.push_back(dot(eq, mk));
    out.labels.push_back(
        view.memory_classes[k] == view.classes[query_pos] ? 1 : 0);
    out.current_mask.push_back(0);
  }
  return out;
}

LossResult query_loss(const QueryScores& q, const TrainConfig& cfg) {
  const MarginConfig margin{cfg.alpha};
  const LambdaConfig lambda{cfg.lambda};
  switch (cfg.loss) {
    case LossKind::RecallLog:
      return recall_loss(q.scores, q.labels, WeightScheme::Log, margin, lambda);
    case LossKind::RecallLogLog:
      return recall_loss(q.scores, q.labels, WeightScheme::LogLog, margin,
                         lambda);
    case LossKind::Ap:
      return ap_loss(q.scores, q.labels, margin, lambda);
    case LossKind::MapPlusApc:
      break;  // handled at the batch level
  }
  throw std::invalid_argument("query_loss: unsupported loss kind");
}

// Rank-level gradients of the chosen loss, for the surrogate objective.
// Mirrors the formulas inside recall_loss/ap_loss.
double loss_surrogate(std::span<const double> scores,
                      std::span<const std::uint8_t> labels, LossKind kind,
                      MarginConfig margin, LambdaConfig lambda) {
  const std::vector<double> shifted = margin_shift(scores, labels, margin);
  std::vector<std::size_t> relevant;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) relevant.push_back(i);
  if (relevant.empty())
    throw undefined_metric_error("loss_surrogate: no relevant items");
  const double p = static_cast<double>(relevant.size());
  const RankPermutation full_rank = rank(shifted);
  std::vector<double> sub_shifted(relevant.size());
  for (std::size_t j = 0; j < relevant.size(); ++j)
    sub_shifted[j] = shifted[relevant[j]];
  const RankPermutation sub_rank = rank(sub_shifted);

  std::vector<double> g_full(scores.size(), 0.0);
  std::vector<double> g_sub(relevant.size(), 0.0);
  bool use_sub_route = false;
  for (std::size_t j = 0; j < relevant.size(); ++j) {
    const double r_full = static_cast<double>(full_rank[relevant[j]]);
    const double r_sub = static_cast<double>(sub_rank[j]);
    switch (kind) {
      case LossKind::RecallLog:
      case LossKind::RecallLogLog: {
        const auto scheme = kind == LossKind::RecallLog ? WeightScheme::Log
                                                        : WeightScheme::LogLog;
        g_full[relevant[j]] = weight_derivative(scheme, r_full - r_sub) / p;
        break;
      }
      case LossKind::Ap:
        g_full[relevant[j]] = r_sub / (p * r_full * r_full);
        g_sub[j] = -1.0 / (p * r_full);
        use_sub_route = true;
        break;
      case LossKind::MapPlusApc:
        throw std::invalid_argument("loss_surrogate: composite kind");
    }
  }
  double value = surrogate_value(shifted, g_full, lambda);
  if (use_sub_route) value += surrogate_value(sub_shifted, g_sub, lambda);
  return value;
}

// Chain a masked per-query score gradient into embedding space.
void accumulate_embedding_grad(const BatchView& view, std::size_t query_pos,
                               std::span<const double> masked_grad,
                               double scale, std::vector<double>& grad_e) {
  const std::size_t e =
      view.embeddings.size() / std::max<std::size_t>(1, view.batch_size());
  const std::span<const double> eq{view.embeddings.data() + query_pos * e, e};
  std::size_t t = 0;
  for (std::size_t j = 0; j < view.batch_size(); ++j) {
    if (j == query_pos) continue;
    const double g = masked_grad[t++] * scale;
    if (g != 0.0) {
      const std::span<const double> ej{view.embeddings.data() + j * e, e};
      for (std::size_t a = 0; a < e; ++a) {
        grad_e[query_pos * e + a] += g * ej[a];
        grad_e[j * e + a] += g * eq[a];
      }
    }
  }
  // Memory positions are masked to zero: nothing flows there.
}

std::vector<std::size_t> sample_batch(
    const std::vector<std::vector<std::size_t>>& by_class,
    std::size_t batch_size, std::size_t samples_per_class, Rng& rng) {
  const std::size_t classes = by_class.size();
  std::size_t spc = samples_per_class;
  for (const auto& members : by_class) spc = std::min(spc, members.size());
  if (spc < 2)
    throw std::invalid_argument("sample_batch: need >= 2 items per class");
  std::size_t picks = std::max<std::size_t>(1, batch_size / spc);
  picks = std::min(picks, classes);

  std::vector<std::size_t> class_order(classes);
  std::iota(class_order.begin(), class_order.end(), std::size_t{0});
  for (std::size_t k = 0; k + 1 < classes; ++k) {
    const auto pick = k + rng.next_below(classes - k);
    std::swap(class_order[k], class_order[pick]);
  }

  std::vector<std::size_t> batch;
  batch.reserve(picks * spc);
  std::vector<std::size_t> items;
  for (std::size_t k = 0; k < picks; ++k) {
    items = by_class[class_order[k]];
    for (std::size_t s = 0; s < spc; ++s) {
      const auto pick = s + rng.next_below(items.size() - s);
      std::swap(items[s], items[pick]);
      batch.push_back(items[s]);
    }
  }
  return batch;
}

std::vector<std::vector<std::size_t>> group_by_class(
    const SynthDataset& data) {
  std::int32_t max_class = -1;
  for (auto c : data.class_ids) max_class = std::max(max_class, c);
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(max_class + 1));
  for (std::size_t i = 0; i < data.num_points(); ++i)
    by_class[static_cast<std::size_t>(data.class_ids[i])].push_back(i);
  std::erase_if(by_class, [](const auto& v) { return v.empty(); });
  return by_class;
}

// Mean over queries of (lowest positive similarity - highest negative
// similarity); positive when every query separates its class.
double mean_separation_gap(const BatchView& view) {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < view.batch_size(); ++q) {
    const QueryScores s = query_scores_from_view(view, q);
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    bool has_pos = false, has_neg = false;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j]) {
        min_pos = std::min(min_pos, s.scores[j]);
        has_pos = true;
      } else {
        max_neg = std::max(max_neg, s.scores[j]);
        has_neg = true;
      }
    }
    if (has_pos && has_neg) {
      total += min_pos - max_neg;
      ++counted;
    }
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace

SynthDataset generate(const DatasetParams& params) {
  if (params.per_class < 2)
    throw std::invalid_argument("generate: per_class must be >= 2");
  if (params.num_classes == 0 || params.input_dim == 0)
    throw std::invalid_argument("generate: empty shape");
  if (params.cluster_spread < 0.0 || params.center_cone < 0.0)
    throw std::invalid_argument("generate: negative spread");

  Rng rng(params.seed);
  SynthDataset data;
  data.input_dim = params.input_dim;
  data.points.resize(params.num_classes * params.per_class * params.input_dim);
  data.class_ids.resize(params.num_classes * params.per_class);

  std::vector<double> axis;
  if (params.center_cone > 0.0) axis = random_unit_vector(rng, params.input_dim);

  std::vector<double> center(params.input_dim);
  std::size_t point = 0;
  for (std::size_t c = 0; c < params.num_classes; ++c) {
    for (auto& x : center) x = rng.next_gaussian();
    if (params.center_cone > 0.0) {
      for (std::size_t a = 0; a < center.size(); ++a)
        center[a] = axis[a] + params.center_cone * center[a];
    }
    normalize_in_place(center);
    for (std::size_t k = 0; k < params.per_class; ++k, ++point) {
      double* out = data.points.data() + point * params.input_dim;
      for (std::size_t a = 0; a < params.input_dim; ++a)
        out[a] = center[a] + params.cluster_spread * rng.next_gaussian();
      data.class_ids[point] = static_cast<std::int32_t>(c);
    }
  }
  return data;
}

std::pair<SynthDataset, SynthDataset> split_dataset(const SynthDataset& data) {
  SynthDataset train, eval;
  train.input_dim = eval.input_dim = data.input_dim;
  std::vector<std::size_t> seen(1024, 0);
  for (std::size_t i = 0; i < data.num_points(); ++i) {
    const auto c = static_cast<std::size_t>(data.class_ids[i]);
    if (c >= seen.size()) seen.resize(c + 1, 0);
    SynthDataset& side = (seen[c]++ % 2 == 0) ? train : eval;
    const auto x = data.point(i);
    side.points.insert(side.points.end(), x.begin(), x.end());
    side.class_ids.push_back(data.class_ids[i]);
  }
  return {std::move(train), std::move(eval)};
}

EmbeddingModel EmbeddingModel::random_init(std::size_t input_dim,
                                           std::size_t embed_dim,
                                           std::uint64_t seed) {
  if (input_dim == 0 || embed_dim == 0)
    throw std::invalid_argument("random_init: empty shape");
  EmbeddingModel model;
  model.input_dim = input_dim;
  model.embed_dim = embed_dim;
  model.weights.resize(input_dim * embed_dim);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (auto& w : model.weights) w = scale * rng.next_gaussian();
  return model;
}

void EmbeddingModel::embed(std::span<const double> point,
                           std::span<double> out) const {
  if (point.size() != input_dim || out.size() != embed_dim)
    throw std::invalid_argument("embed: shape mismatch");
  for (std::size_t j = 0; j < embed_dim; ++j) {
    double acc = 0.0;
    for (std::size_t a = 0; a < input_dim; ++a)
      acc += point[a] * weights[a * embed_dim + j];
    out[j] = acc;
  }
  normalize_in_place(out);
}

std::vector<double> EmbeddingModel::embed_all(const SynthDataset& data) const {
  std::vector<double> out(data.num_points() * embed_dim);
  for (std::size_t i = 0; i < data.num_points(); ++i)
    embed(data.point(i), {out.data() + i * embed_dim, embed_dim});
  return out;
}

void EmbeddingMemory::commit(std::span<const double> embeddings,
                             std::span<const std::int32_t> class_ids) {
  if (embeddings.size() != class_ids.size() * embed_dim_)
    throw std::invalid_argument("EmbeddingMemory::commit: shape mismatch");
  if (capacity_ == 0) return;
  batches_.push_front(
      Batch{std::vector<double>(embeddings.begin(), embeddings.end()),
            std::vector<std::int32_t>(class_ids.begin(), class_ids.end())});
  while (batches_.size() > capacity_) batches_.pop_back();
}

std::size_t EmbeddingMemory::total_items() const {
  std::size_t total = 0;
  for (const auto& b : batches_) total += b.class_ids.size();
  return total;
}

void EmbeddingMemory::gather(std::vector<double>& embeddings,
                             std::vector<std::int32_t>& class_ids) const {
  embeddings.clear();
  class_ids.clear();
  for (const auto& b : batches_) {  // newest first
    embeddings.insert(embeddings.end(), b.embeddings.begin(),
                      b.embeddings.end());
    class_ids.insert(class_ids.end(), b.class_ids.begin(),
                     b.class_ids.end());
  }
}

QueryScores similarity_scores(const EmbeddingModel& model,
                              const SynthDataset& data,
                              std::span<const std::size_t> batch,
                              std::size_t query_pos,
                              const EmbeddingMemory* memory) {
  if (query_pos >= batch.size())
    throw std::invalid_argument("similarity_scores: query_pos out of range");
  const BatchView view = make_batch_view(model, data, batch, memory);
  return query_scores_from_view(view, query_pos);
}

BatchResult batch_loss(const EmbeddingModel& model, const SynthDataset& data,
                       std::span<const std::size_t> batch,
                       const TrainConfig& config,
                       const EmbeddingMemory* memory) {
  const BatchView view = make_batch_view(model, data, batch, memory);
  const std::size_t batch_count = view.batch_size();
  const std::size_t e = model.embed_dim;

  std::vector<double> grad_e(batch_count * e, 0.0);
  double value = 0.0;

  if (config.loss == LossKind::MapPlusApc) {
    const std::size_t rows = batch_count - 1 + view.memory_items();
    ScoreMatrix scores{rows, batch_count, std::vector<double>(rows * batch_count)};
    LabelMatrix labels{rows, batch_count,
                       std::vector<std::uint8_t>(rows * batch_count)};
    std::vector<std::uint8_t> mask;
    for (std::size_t q = 0; q < batch_count; ++q) {
      QueryScores s = query_scores_from_view(view, q);
      std::copy(s.scores.begin(), s.scores.end(),
                scores.column(q).begin());
      std::copy(s.labels.begin(), s.labels.end(), labels.column(q).begin());
      if (q == 0) mask = s.current_mask;
    }
    const MarginConfig margin{config.alpha};
    const LambdaConfig lambda{config.lambda};
    const LossResult map = map_loss(scores, labels, margin, lambda);
    const LossResult apc = apc_loss(scores, labels, margin, lambda);
    value = (2.0 * map.value + apc.value) / 3.0;  // 2:1 weighting
    std::vector<double> column(rows);
    for (std::size_t q = 0; q < batch_count; ++q) {
      for (std::size_t i = 0; i < rows; ++i)
        column[i] = (2.0 * map.grad[q * rows + i] + apc.grad[q * rows + i]) / 3.0;
      const std::vector<double> masked = mask_gradient(column, mask);
      accumulate_embedding_grad(view, q, masked, 1.0, grad_e);
    }
  } else {
    const double scale = 1.0 / static_cast<double>(batch_count);
    for (std::size_t q = 0; q < batch_count; ++q) {
      const QueryScores s = query_scores_from_view(view, q);
      const LossResult lr = query_loss(s, config);
      value += lr.value * scale;
      const std::vector<double> masked = mask_gradient(lr.grad, s.current_mask);
      accumulate_embedding_grad(view, q, masked, scale, grad_e);
    }
  }

  // Through the normalization, then the linear map.
  BatchResult result;
  result.value = value;
  result.weight_grad.assign(model.weights.size(), 0.0);
  std::vector<double> grad_z(e);
  for (std::size_t i = 0; i < batch_count; ++i) {
    const std::span<const double> ei{view.embeddings.data() + i * e, e};
    const std::span<const double> gi{grad_e.data() + i * e, e};
    const double radial = dot(gi, ei);
    for (std::size_t j = 0; j < e; ++j)
      grad_z[j] = (gi[j] - radial * ei[j]) / view.norms[i];
    const auto x = data.point(batch[i]);
    for (std::size_t a = 0; a < model.input_dim; ++a) {
      const double xa = x[a];
      if (xa != 0.0)
        for (std::size_t j = 0; j < e; ++j)
          result.weight_grad[a * e + j] += xa * grad_z[j];
    }
  }
  return result;
}

double batch_surrogate(const EmbeddingModel& model, const SynthDataset& data,
                       std::span<const std::size_t> batch,
                       const TrainConfig& config) {
  const BatchView view = make_batch_view(model, data, batch, nullptr);
  const MarginConfig margin{config.alpha};
  const LambdaConfig lambda{config.lambda};
  const std::size_t batch_count = view.batch_size();

  if (config.loss == LossKind::MapPlusApc) {
    const std::size_t rows = batch_count - 1;
    ScoreMatrix scores{rows, batch_count, std::vector<double>(rows * batch_count)};
    LabelMatrix labels{rows, batch_count,
                       std::vector<std::uint8_t>(rows * batch_count)};
    for (std::size_t q = 0; q < batch_count; ++q) {
      const QueryScores s = query_scores_from_view(view, q);
      std::copy(s.scores.begin(), s.scores.end(), scores.column(q).begin());
      std::copy(s.labels.begin(), s.labels.end(), labels.column(q).begin());
    }
    double map_part = 0.0;
    std::size_t included = 0;
    for (std::size_t c = 0; c < batch_count; ++c) {
      const auto l = labels.column(c);
      if (std::find(l.begin(), l.end(), 1) == l.end()) continue;
      map_part += loss_surrogate(scores.column(c), l, LossKind::Ap, margin,
                                 lambda);
      ++included;
    }
    map_part /= static_cast<double>(included);
    const double apc_part = loss_surrogate(scores.values, labels.values,
                                           LossKind::Ap, margin, lambda);
    return (2.0 * map_part + apc_part) / 3.0;
  }

  double total = 0.0;
  for (std::size_t q = 0; q < batch_count; ++q) {
    const QueryScores s = query_scores_from_view(view, q);
    total += loss_surrogate(s.scores, s.labels, config.loss, margin, lambda);
  }
  return total / static_cast<double>(batch_count);
}

Metrics evaluate(const EmbeddingModel& model, const SynthDataset& data,
                 std::span<const std::int64_t> ks) {
  if (data.num_points() < 2)
    throw std::invalid_argument("evaluate: need at least 2 items");
  const std::size_t m = data.num_points();
  const std::size_t e = model.embed_dim;
  const std::vector<double> embeddings = model.embed_all(data);

  Metrics metrics;
  metrics.recall_at.assign(ks.size(), 0.0);
  std::size_t counted = 0;
  std::vector<double> scores(m - 1);
  std::vector<std::uint8_t> labels(m - 1);
  for (std::size_t q = 0; q < m; ++q) {
    const std::span<const double> eq{embeddings.data() + q * e, e};
    std::size_t t = 0;
    bool any_positive = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == q) continue;
      const std::span<const double> ej{embeddings.data() + j * e, e};
      scores[t] = dot(eq, ej);
      labels[t] = data.class_ids[j] == data.class_ids[q] ? 1 : 0;
      any_positive = any_positive || labels[t] == 1;
      ++t;
    }
    if (!any_positive) {
      ++metrics.skipped_queries;
      continue;
    }
    const RankPermutation ranks = rank(scores);
    std::int32_t best_relevant_rank = std::numeric_limits<std::int32_t>::max();
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (labels[j] == 1)
        best_relevant_rank = std::min(best_relevant_rank, ranks[j]);
    for (std::size_t k = 0; k < ks.size(); ++k)
      if (best_relevant_rank <= ks[k]) metrics.recall_at[k] += 1.0;
    metrics.map += average_precision(scores, labels);
    ++counted;
  }
  if (counted == 0)
    throw undefined_metric_error("evaluate: no query has a relevant item");
  for (auto& r : metrics.recall_at) r /= static_cast<double>(counted);
  metrics.map /= static_cast<double>(counted);
  return metrics;
}

TrainResult train(const TrainConfig& config, const SynthDataset& data) {
  if (config.steps == 0)
    throw std::invalid_argument("train: steps must be >= 1");
  if (config.samples_per_class < 2)
    throw std::invalid_argument("train: samples_per_class must be >= 2");
  auto [train_split, eval_split] = split_dataset(data);
  const auto by_class = group_by_class(train_split);

  Rng root(config.seed);
  Rng batch_rng = root.split(1);
  Rng probe_rng = root.split(2);
  EmbeddingModel model = EmbeddingModel::random_init(
      data.input_dim, config.embed_dim, root.split(3).next_u64());

  EmbeddingMemory memory(config.memory_batches, config.embed_dim);
  Adam adam(model.weights.size());
  const std::vector<std::int64_t> eval_ks{1, 4};

  TrainResult result;
  const auto record = [&](std::size_t step, double loss) {
    const Metrics m = evaluate(model, eval_split, eval_ks);
    const HistoryRow row{step, loss, m.recall_at[0], m.recall_at[1], m.map};
    result.history.push_back(row);
    if (result.history.size() == 1 || row.r_at_1 > result.best.r_at_1)
      result.best = row;
  };

  {
    const auto probe =
        sample_batch(by_class, config.batch_size, config.samples_per_class,
                     probe_rng);
    record(0, batch_loss(model, train_split, probe, config).value);
  }

  std::vector<double> batch_embeddings;
  std::vector<std::int32_t> batch_classes;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const auto batch = sample_batch(by_class, config.batch_size,
                                    config.samples_per_class, batch_rng);
    const BatchResult br =
        batch_loss(model, train_split, batch, config, &memory);
    if (!std::isfinite(br.value))
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step));
    if (config.memory_batches > 0) {
      batch_embeddings.resize(batch.size() * config.embed_dim);
      batch_classes.resize(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        model.embed(train_split.point(batch[i]),
                    {batch_embeddings.data() + i * config.embed_dim,
                     config.embed_dim});
        batch_classes[i] = train_split.class_ids[batch[i]];
      }
      memory.commit(batch_embeddings, batch_classes);
    }
    adam.step(model.weights, br.weight_grad, config.adam);
    if (step % config.eval_every == 0 || step == config.steps)
      record(step, br.value);
  }
  result.model = std::move(model);
  return result;
}

CollapseReport collapse_experiment(std::uint64_t seed, double alpha) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("collapse_experiment: alpha must be > 0");
  DatasetParams params;
  params.num_classes = 4;
  params.per_class = 4;
  params.input_dim = 16;
  params.cluster_spread = 0.004;
  params.center_cone = 0.04;  // near-tied similarities under any random map
  params.seed = seed;
  const SynthDataset data = generate(params);

  const EmbeddingModel initial = EmbeddingModel::random_init(
      params.input_dim, 8, Rng(seed).split(11).next_u64());

  std::vector<std::size_t> batch(data.num_points());
  std::iota(batch.begin(), batch.end(), std::size_t{0});

  TrainConfig cfg;
  cfg.loss = LossKind::RecallLog;
  cfg.lambda = 10.0;  // reach across the induced margin
  cfg.memory_batches = 0;
  cfg.adam.learning_rate = 0.02;
  cfg.steps = 250;

  const auto run = [&](double run_alpha) {
    TrainConfig local = cfg;
    local.alpha = run_alpha;
    EmbeddingModel model = initial;
    Adam adam(model.weights.size());
    CollapseRun out;
    out.initial_gap =
        mean_separation_gap(make_batch_view(model, data, batch, nullptr));
    for (std::size_t step = 1; step <= local.steps; ++step) {
      const BatchResult br = batch_loss(model, data, batch, local);
      if (step == 1) out.initial_loss = br.value;
      out.final_loss = br.value;
      adam.step(model.weights, br.weight_grad, local.adam);
    }
    out.final_gap =
        mean_separation_gap(make_batch_view(model, data, batch, nullptr));
    for (std::size_t i = 0; i < model.weights.size(); ++i)
      out.max_weight_delta =
          std::max(out.max_weight_delta,
                   std::abs(model.weights[i] - initial.weights[i]));
    return out;
  };

  CollapseReport report;
  report.without_margin = run(0.0);
  report.with_margin = run(alpha);
  return report;
}

}  // namespace diffrank::synth
