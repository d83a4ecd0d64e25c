#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlab/engine.hpp"
#include "mtlab/graph.hpp"
#include "mtlab/kernels.hpp"
#include "mtlab/metrics.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

struct TaskLoss {
  std::string task;
  double value = 0.0;
  int64_t sample_count = 0;  // 0 means the task was absent from the batch
};

struct LossConfig {
  double huber_delta = 1.0;
  double clamp_eps = 1e-8;
  double lambda_coord = 5.0;
  double lambda_noobj = 0.5;
};

enum class Strategy { WeightedSum, GeometricMean };

struct ScalarizationStrategy {
  Strategy kind = Strategy::WeightedSum;
  std::map<std::string, double> weights;  // WeightedSum: one positive weight per task
  double eps = 1e-8;                      // GeometricMean clamp
};

inline ScalarizationStrategy strategy_from_json(const nlohmann::json& j) {
  ScalarizationStrategy s;
  const std::string kind = j.value("strategy", "weighted_sum");
  if (kind == "weighted_sum") s.kind = Strategy::WeightedSum;
  else if (kind == "geometric_mean") s.kind = Strategy::GeometricMean;
  else throw std::invalid_argument("loss: unknown strategy '" + kind + "'");
  if (j.contains("weights"))
    for (auto it = j.at("weights").begin(); it != j.at("weights").end(); ++it) {
      const double w = it.value().get<double>();
      if (w < 0) throw std::invalid_argument("loss: negative weight for task '" + it.key() + "'");
      s.weights[it.key()] = w;
    }
  if (j.contains("clamp")) s.eps = j.at("clamp").get<double>();
  return s;
}

// ------------------------------------------------------- per-task values ---

/// Mean over non-ignored pixels of -log softmax(logits)[target].
template <typename T>
TaskLoss seg_cross_entropy(const Tensor<T>& logits, const Tensor<T>& target, int ignore_id = -1,
                           const std::string& task = "seg") {
  const Shape& ls = logits.shape();
  int64_t n_valid = 0;
  const T v = kernels::softmax_xent_forward(logits.ptr(), target.ptr(), ls[0], ls[1] * ls[2],
                                            ignore_id, &n_valid);
  return {task, static_cast<double>(v), 1};
}

template <typename T>
TaskLoss huber_depth_loss(const Tensor<T>& pred, const Tensor<T>& target, double delta = 1.0,
                          const std::string& task = "depth") {
  if (pred.shape() != target.shape()) throw std::invalid_argument("huber_depth_loss: shape mismatch");
  return {task, static_cast<double>(kernels::huber_mean_forward(pred.ptr(), target.ptr(), pred.size(), delta)), 1};
}

// --------------------------------------------------------- detection loss ---

// Detection grids use the channel layout [obj, tx, ty, tw, th, cls...] in
// activated space: objectness and offsets in (0,1), sizes as sqrt of the
// normalized box size, classes as per-cell probabilities.

/// Encodes ground-truth boxes into the activated-space target grid. One box
/// per cell; when two boxes land in the same cell the earlier one wins.
template <typename T>
Tensor<T> encode_det_targets(const std::vector<Box>& boxes, int64_t grid, int64_t num_classes) {
  Tensor<T> t({5 + num_classes, grid, grid});
  for (const auto& b : boxes) {
    if (b.w <= 0 || b.h <= 0) throw std::invalid_argument("encode_det_targets: non-positive box size");
    if (b.class_id < 0 || b.class_id >= num_classes)
      throw std::invalid_argument("encode_det_targets: class id out of range");
    int64_t col = static_cast<int64_t>(b.x * static_cast<double>(grid));
    int64_t row = static_cast<int64_t>(b.y * static_cast<double>(grid));
    col = std::clamp<int64_t>(col, 0, grid - 1);
    row = std::clamp<int64_t>(row, 0, grid - 1);
    if (t.at(0, row, col) > T(0)) continue;  // cell already owns a box
    t.at(0, row, col) = T(1);
    t.at(1, row, col) = static_cast<T>(b.x * static_cast<double>(grid) - static_cast<double>(col));
    t.at(2, row, col) = static_cast<T>(b.y * static_cast<double>(grid) - static_cast<double>(row));
    t.at(3, row, col) = static_cast<T>(std::sqrt(b.w));
    t.at(4, row, col) = static_cast<T>(std::sqrt(b.h));
    t.at(5 + b.class_id, row, col) = T(1);
  }
  return t;
}

/// Squared-error detection loss on activated grids: objectness over all
/// cells (lambda_noobj on empty ones), offsets and sqrt-sizes plus class
/// scores on object cells only (lambda_coord on the box terms). Returns the
/// per-sample sum; batch-mean normalization happens at combination time.
template <typename T>
TaskLoss det_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg,
                  const std::string& task = "det") {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("det_loss: grid shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  const Shape& s = pred.shape();
  double total = 0;
  for (int64_t row = 0; row < s[1]; ++row)
    for (int64_t col = 0; col < s[2]; ++col) {
      const bool has_obj = target.at(0, row, col) > T(0);
      const double d_obj = static_cast<double>(pred.at(0, row, col)) - static_cast<double>(target.at(0, row, col));
      total += (has_obj ? 1.0 : cfg.lambda_noobj) * d_obj * d_obj;
      if (!has_obj) continue;
      for (int64_t c = 1; c < 5; ++c) {
        const double d = static_cast<double>(pred.at(c, row, col)) - static_cast<double>(target.at(c, row, col));
        total += cfg.lambda_coord * d * d;
      }
      for (int64_t c = 5; c < s[0]; ++c) {
        const double d = static_cast<double>(pred.at(c, row, col)) - static_cast<double>(target.at(c, row, col));
        total += d * d;
      }
    }
  return {task, total, 1};
}

/// Activates a raw detection head grid: sigmoid on objectness and offsets,
/// identity on sizes, per-cell softmax on classes (all-ones for C == 1).
template <typename T>
Tensor<T> activate_det_grid(const Tensor<T>& raw) {
  const Shape& s = raw.shape();
  const int64_t num_classes = s[0] - 5;
  const int64_t hw = s[1] * s[2];
  Tensor<T> out(s);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t p = 0; p < hw; ++p)
      out[static_cast<size_t>(c * hw + p)] =
          static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(raw[static_cast<size_t>(c * hw + p)]))));
  for (int64_t c = 3; c < 5; ++c)
    for (int64_t p = 0; p < hw; ++p)
      out[static_cast<size_t>(c * hw + p)] = raw[static_cast<size_t>(c * hw + p)];
  if (num_classes == 1) {
    for (int64_t p = 0; p < hw; ++p) out[static_cast<size_t>(5 * hw + p)] = T(1);
  } else if (num_classes > 1) {
    kernels::softmax_channels_forward(raw.ptr() + 5 * hw, num_classes, hw, out.ptr() + 5 * hw);
  }
  return out;
}

/// Leaf node ids the graph-side detection loss consumes. All are derived
/// from one encoded target grid by det_target_bindings().
struct DetTargetNodes {
  int target = -1;  // [5+C,S,S] activated-space targets
  int w_obj = -1;   // [1,S,S]: 1 on object cells, lambda_noobj elsewhere
  int m_box = -1;   // [2,S,S]: object-cell mask for xy / wh slices
  int m_cls = -1;   // [C,S,S]: object-cell mask for class slice (C >= 2)
};

/// Declares the detection-loss target leaves for one sample.
inline DetTargetNodes declare_det_targets(GraphBuilder& b, const std::string& prefix, int64_t grid,
                                          int64_t num_classes) {
  DetTargetNodes n;
  n.target = b.leaf(prefix + "/target", {5 + num_classes, grid, grid});
  n.w_obj = b.leaf(prefix + "/w_obj", {1, grid, grid});
  n.m_box = b.leaf(prefix + "/m_box", {2, grid, grid});
  if (num_classes >= 2) n.m_cls = b.leaf(prefix + "/m_cls", {num_classes, grid, grid});
  return n;
}

/// Computes the bindings for declare_det_targets from ground-truth boxes.
template <typename T>
void bind_det_targets(Bindings<T>& bind, const std::string& prefix, const std::vector<Box>& boxes,
                      int64_t grid, int64_t num_classes, const LossConfig& cfg) {
  const Tensor<T> target = encode_det_targets<T>(boxes, grid, num_classes);
  Tensor<T> w_obj({1, grid, grid});
  Tensor<T> m_box({2, grid, grid});
  Tensor<T> m_cls({num_classes, grid, grid});
  for (int64_t row = 0; row < grid; ++row)
    for (int64_t col = 0; col < grid; ++col) {
      const bool has_obj = target.at(0, row, col) > T(0);
      w_obj.at(0, row, col) = static_cast<T>(has_obj ? 1.0 : cfg.lambda_noobj);
      m_box.at(0, row, col) = m_box.at(1, row, col) = static_cast<T>(has_obj ? 1 : 0);
      for (int64_t c = 0; c < num_classes; ++c) m_cls.at(c, row, col) = static_cast<T>(has_obj ? 1 : 0);
    }
  bind.emplace(prefix + "/target", target);
  bind.emplace(prefix + "/w_obj", std::move(w_obj));
  bind.emplace(prefix + "/m_box", std::move(m_box));
  if (num_classes >= 2) bind.emplace(prefix + "/m_cls", std::move(m_cls));
}

/// Differentiable detection loss over a RAW head grid; value matches
/// det_loss(activate_det_grid(raw), target, cfg).
inline int det_loss_node(GraphBuilder& b, int raw_grid, const DetTargetNodes& t, int64_t num_classes,
                         const LossConfig& cfg) {
  const int obj = b.sigmoid(b.slice_channels(raw_grid, 0, 1));
  const int xy = b.sigmoid(b.slice_channels(raw_grid, 1, 3));
  const int wh = b.slice_channels(raw_grid, 3, 5);

  const int d_obj = b.sub(obj, b.slice_channels(t.target, 0, 1));
  const int term_obj = b.sum_all(b.mul(t.w_obj, b.mul(d_obj, d_obj)));
  const int d_xy = b.sub(xy, b.slice_channels(t.target, 1, 3));
  const int term_xy = b.sum_all(b.mul(t.m_box, b.mul(d_xy, d_xy)));
  const int d_wh = b.sub(wh, b.slice_channels(t.target, 3, 5));
  const int term_wh = b.sum_all(b.mul(t.m_box, b.mul(d_wh, d_wh)));

  std::vector<int> terms{term_obj, term_xy, term_wh};
  std::vector<double> coeffs{1.0, cfg.lambda_coord, cfg.lambda_coord};
  if (num_classes >= 2) {
    const int cls = b.softmax_channels(b.slice_channels(raw_grid, 5, 5 + num_classes));
    const int d_cls = b.sub(cls, b.slice_channels(t.target, 5, 5 + num_classes));
    terms.push_back(b.sum_all(b.mul(t.m_cls, b.mul(d_cls, d_cls))));
    coeffs.push_back(1.0);
  }
  // with one class the softmax is identically 1 and the class term is 0
  return b.weighted_sum(terms, std::move(coeffs));
}

// ----------------------------------------------------------- combination ---

/// L_Total = sum of w_i * L_i over tasks present in the batch.
inline double combine_weighted_sum(const std::vector<TaskLoss>& losses,
                                   const std::map<std::string, double>& weights) {
  double total = 0;
  for (const auto& l : losses) {
    if (l.sample_count == 0) continue;
    auto it = weights.find(l.task);
    if (it == weights.end())
      throw std::invalid_argument("combine_weighted_sum: missing weight for task '" + l.task + "'");
    total += it->second * l.value;
  }
  return total;
}

/// L_Total = exp(mean(log(max(L_i, eps)))) over present tasks, in log space.
inline double combine_geometric_mean(const std::vector<TaskLoss>& losses, double eps = 1e-8) {
  double acc = 0;
  int64_t n = 0;
  for (const auto& l : losses) {
    if (l.sample_count == 0) continue;
    acc += std::log(std::max(l.value, eps));
    ++n;
  }
  if (n < 2) throw std::invalid_argument("combine_geometric_mean: needs at least two present tasks");
  return std::exp(acc / static_cast<double>(n));
}

// -------------------------------------------------------- partial labels ---

/// Per-sample per-task loss values; std::nullopt marks a sample that does
/// not carry that task's labels.
using SampleLosses = std::map<std::string, std::optional<double>>;

/// Averages each task over the samples that carry its labels. Tasks with no
/// labeled sample come back with sample_count 0 (dropped from
/// scalarization); an empty result means the whole batch must be skipped.
inline std::vector<TaskLoss> mask_task_losses(const std::vector<SampleLosses>& batch) {
  std::map<std::string, TaskLoss> acc;
  for (const auto& sample : batch) {
    for (const auto& [task, value] : sample) {
      auto& t = acc[task];
      t.task = task;
      if (value.has_value()) {
        t.value += *value;
        ++t.sample_count;
      }
    }
  }
  std::vector<TaskLoss> out;
  bool any = false;
  for (auto& [task, t] : acc) {
    if (t.sample_count > 0) {
      t.value /= static_cast<double>(t.sample_count);
      any = true;
    }
    out.push_back(t);
  }
  if (!any) return {};
  return out;
}

}  // namespace mtlab
