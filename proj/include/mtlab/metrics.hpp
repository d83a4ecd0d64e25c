#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlab/tensor.hpp"

namespace mtlab {

// ------------------------------------------------------------------- box ---

/// Axis-aligned box in normalized image coordinates; (x, y) is the center.
struct Box {
  int class_id = 0;
  double x = 0, y = 0, w = 0, h = 0;
  double confidence = 1.0;  // predictions only
};

inline double box_iou(const Box& a, const Box& b) {
  const double ax0 = a.x - a.w / 2, ax1 = a.x + a.w / 2;
  const double ay0 = a.y - a.h / 2, ay1 = a.y + a.h / 2;
  const double bx0 = b.x - b.w / 2, bx1 = b.x + b.w / 2;
  const double by0 = b.y - b.h / 2, by1 = b.y + b.h / 2;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  // areas from the same corner differences, so identical boxes give exactly 1
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  return uni <= 0 ? 0.0 : inter / uni;
}

// ------------------------------------------------------------- class IoU ---

struct IouReport {
  std::map<int, double> per_class;  // classes present in prediction or ground truth
  double mean_iou = 0.0;
};

struct ConfusionCounts {
  // per class: true positives, false positives, false negatives
  std::vector<int64_t> tp, fp, fn;
  explicit ConfusionCounts(int64_t num_classes)
      : tp(static_cast<size_t>(num_classes), 0),
        fp(static_cast<size_t>(num_classes), 0),
        fn(static_cast<size_t>(num_classes), 0) {}

  template <typename T>
  void add(const Tensor<T>& pred, const Tensor<T>& gt, int ignore_id = -1) {
    if (pred.shape() != gt.shape())
      throw std::invalid_argument("class_iou: mask shape mismatch " + shape_str(pred.shape()) + " vs " +
                                  shape_str(gt.shape()));
    const int64_t num_classes = static_cast<int64_t>(tp.size());
    for (int64_t i = 0; i < pred.size(); ++i) {
      const int64_t p = static_cast<int64_t>(std::llround(static_cast<double>(pred[static_cast<size_t>(i)])));
      const int64_t g = static_cast<int64_t>(std::llround(static_cast<double>(gt[static_cast<size_t>(i)])));
      if (ignore_id >= 0 && g == ignore_id) continue;
      if (p < 0 || p >= num_classes || g < 0 || g >= num_classes)
        throw std::invalid_argument("class_iou: class id out of range");
      if (p == g) {
        ++tp[static_cast<size_t>(p)];
      } else {
        ++fp[static_cast<size_t>(p)];
        ++fn[static_cast<size_t>(g)];
      }
    }
  }

  IouReport report() const {
    IouReport r;
    double sum = 0;
    int64_t present = 0;
    for (size_t c = 0; c < tp.size(); ++c) {
      const int64_t denom = tp[c] + fp[c] + fn[c];
      if (denom == 0) continue;  // absent from both prediction and ground truth
      const double iou = static_cast<double>(tp[c]) / static_cast<double>(denom);
      r.per_class[static_cast<int>(c)] = iou;
      sum += iou;
      ++present;
    }
    r.mean_iou = present ? sum / static_cast<double>(present) : 0.0;
    return r;
  }
};

/// Per-class IoU (Jaccard) from the confusion matrix over non-ignored
/// pixels; classes absent from both masks are excluded from the mean.
template <typename T>
IouReport class_iou_report(const Tensor<T>& pred, const Tensor<T>& gt, int64_t num_classes,
                           int ignore_id = -1) {
  ConfusionCounts counts(num_classes);
  counts.add(pred, gt, ignore_id);
  return counts.report();
}

// ------------------------------------------------------------ detection AP ---

struct ApReport {
  std::map<int, double> per_class;  // classes with ground truth
  double mean_ap = 0.0;
};

/// Sorted-by-confidence greedy matching, all-point interpolated AUC.
/// Tie-break on equal confidence: earlier image index first, then emission
/// order within the image (decode emits row-major).
inline ApReport detection_ap(const std::vector<std::vector<Box>>& preds,
                             const std::vector<std::vector<Box>>& gts, double iou_threshold = 0.5) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("detection_ap: prediction/ground-truth image counts differ");
  std::map<int, int64_t> gt_count;
  for (const auto& image : gts)
    for (const auto& b : image) ++gt_count[b.class_id];

  ApReport r;
  double sum = 0;
  for (const auto& [cls, n_gt] : gt_count) {
    struct Ref {
      double conf;
      size_t image, order;
    };
    std::vector<Ref> refs;
    for (size_t img = 0; img < preds.size(); ++img)
      for (size_t k = 0; k < preds[img].size(); ++k)
        if (preds[img][k].class_id == cls) refs.push_back({preds[img][k].confidence, img, k});
    std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
      if (a.conf != b.conf) return a.conf > b.conf;
      if (a.image != b.image) return a.image < b.image;
      return a.order < b.order;
    });

    std::vector<std::vector<char>> used(gts.size());
    for (size_t img = 0; img < gts.size(); ++img) used[img].assign(gts[img].size(), 0);

    std::vector<char> is_tp;
    is_tp.reserve(refs.size());
    for (const auto& ref : refs) {
      const Box& p = preds[ref.image][ref.order];
      double best_iou = 0;
      int64_t best = -1;
      for (size_t j = 0; j < gts[ref.image].size(); ++j) {
        if (gts[ref.image][j].class_id != cls || used[ref.image][j]) continue;
        const double iou = box_iou(p, gts[ref.image][j]);
        if (iou > best_iou) {
          best_iou = iou;
          best = static_cast<int64_t>(j);
        }
      }
      if (best >= 0 && best_iou >= iou_threshold) {
        used[ref.image][static_cast<size_t>(best)] = 1;
        is_tp.push_back(1);
      } else {
        is_tp.push_back(0);
      }
    }

    // precision/recall points, then the all-point interpolated area
    std::vector<double> precision, recall;
    int64_t tp = 0;
    for (size_t k = 0; k < is_tp.size(); ++k) {
      if (is_tp[k]) ++tp;
      precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
      recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    }
    for (size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0;
    double prev_recall = 0;
    for (size_t k = 0; k < precision.size(); ++k) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
    r.per_class[cls] = ap;
    sum += ap;
  }
  r.mean_ap = gt_count.empty() ? 0.0 : sum / static_cast<double>(gt_count.size());
  return r;
}

// ---------------------------------------------------------- depth accuracy ---

/// Fraction of pixels with max(pred/gt, gt/pred) < threshold; both maps are
/// floored at 1e-3 after denormalization.
template <typename T>
double depth_accuracy(const Tensor<T>& pred, const Tensor<T>& gt, double threshold = 1.25) {
  if (pred.shape() != gt.shape())
    throw std::invalid_argument("depth_accuracy: shape mismatch");
  int64_t ok = 0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    const double p = std::max(static_cast<double>(pred[static_cast<size_t>(i)]), 1e-3);
    const double g = std::max(static_cast<double>(gt[static_cast<size_t>(i)]), 1e-3);
    if (std::max(p / g, g / p) < threshold) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

// -------------------------------------------------------- grid decode/NMS ---

/// Inverts the detection head encoding on an ACTIVATED grid
/// [obj, tx, ty, tw, th, cls...]: per-cell box at ((col+tx)/S, (row+ty)/S)
/// with size (tw^2, th^2), class = argmax, confidence = objectness.
/// Cells below conf_threshold are dropped, then per-class greedy NMS.
template <typename T>
std::vector<Box> decode_detections(const Tensor<T>& grid, double conf_threshold = 0.25,
                                   double nms_iou = 0.45) {
  const Shape& s = grid.shape();
  if (s.size() != 3 || s[0] < 5)
    throw std::invalid_argument("decode_detections: grid must be [5+C,S,S]");
  const int64_t num_classes = s[0] - 5;
  const int64_t S = s[1];
  std::vector<Box> boxes;
  for (int64_t row = 0; row < S; ++row)
    for (int64_t col = 0; col < S; ++col) {
      const double conf = static_cast<double>(grid.at(0, row, col));
      if (conf < conf_threshold) continue;
      Box b;
      b.confidence = conf;
      b.x = (static_cast<double>(col) + static_cast<double>(grid.at(1, row, col))) / static_cast<double>(S);
      b.y = (static_cast<double>(row) + static_cast<double>(grid.at(2, row, col))) / static_cast<double>(S);
      const double tw = static_cast<double>(grid.at(3, row, col));
      const double th = static_cast<double>(grid.at(4, row, col));
      b.w = tw * tw;
      b.h = th * th;
      if (b.w <= 0 || b.h <= 0) continue;
      int best = 0;
      for (int64_t c = 1; c < num_classes; ++c)
        if (grid.at(5 + c, row, col) > grid.at(5 + best, row, col)) best = static_cast<int>(c);
      b.class_id = num_classes > 0 ? best : 0;
      boxes.push_back(b);
    }

  // per-class greedy NMS; emission order is row-major, sort is stable on ties
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const Box& a, const Box& b) { return a.confidence > b.confidence; });
  std::vector<Box> kept;
  for (const auto& b : boxes) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (k.class_id == b.class_id && box_iou(k, b) > nms_iou) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

// --------------------------------------------------------- metrics report ---

struct MetricsReport {
  std::map<int, double> per_class_iou;
  double mean_iou = 0.0;
  std::map<int, double> per_class_ap;
  double mean_ap = 0.0;
  double depth_accuracy = 0.0;
  std::map<int, double> motion_per_class_iou;
  double motion_mean_iou = 0.0;
  std::map<std::string, double> task_losses;
  std::map<std::string, bool> tasks_present;  // which sections are meaningful
};

inline nlohmann::json to_json(const MetricsReport& r) {
  auto keyed = [](const std::map<int, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
  };
  return nlohmann::json{{"per_class_iou", keyed(r.per_class_iou)},
                        {"mean_iou", r.mean_iou},
                        {"per_class_ap", keyed(r.per_class_ap)},
                        {"mean_ap", r.mean_ap},
                        {"depth_accuracy", r.depth_accuracy},
                        {"motion_per_class_iou", keyed(r.motion_per_class_iou)},
                        {"motion_mean_iou", r.motion_mean_iou},
                        {"task_losses", r.task_losses},
                        {"tasks_present", r.tasks_present}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto unkeyed = [](const nlohmann::json& m) {
    std::map<int, double> out;
    for (auto it = m.begin(); it != m.end(); ++it) out[std::stoi(it.key())] = it.value().get<double>();
    return out;
  };
  r.per_class_iou = unkeyed(j.at("per_class_iou"));
  r.mean_iou = j.at("mean_iou").get<double>();
  r.per_class_ap = unkeyed(j.at("per_class_ap"));
  r.mean_ap = j.at("mean_ap").get<double>();
  r.depth_accuracy = j.at("depth_accuracy").get<double>();
  r.motion_per_class_iou = unkeyed(j.at("motion_per_class_iou"));
  r.motion_mean_iou = j.at("motion_mean_iou").get<double>();
  if (j.contains("task_losses"))
    for (auto it = j.at("task_losses").begin(); it != j.at("task_losses").end(); ++it)
      r.task_losses[it.key()] = it.value().get<double>();
  if (j.contains("tasks_present"))
    for (auto it = j.at("tasks_present").begin(); it != j.at("tasks_present").end(); ++it)
      r.tasks_present[it.key()] = it.value().get<bool>();
  return r;
}

}  // namespace mtlab
