#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlab/metrics.hpp"
#include "mtlab/rng.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

namespace fs = std::filesystem;

// ------------------------------------------------------------- scene spec ---

struct SceneSpec {
  int64_t image_size = 64;  // divisible by 32
  std::vector<std::string> seg_classes = {"background", "road", "sidewalk", "vehicle", "person"};
  std::vector<std::string> det_classes = {"vehicle", "person"};
  int64_t max_objects = 5;
  double moving_fraction = 0.5;
  uint64_t seed = 0;
};

inline void validate(const SceneSpec& s) {
  if (s.image_size % 32 != 0)
    throw std::invalid_argument("scene: image_size " + std::to_string(s.image_size) + " not divisible by 32");
  if (s.seg_classes.size() < 2) throw std::invalid_argument("scene: need at least two seg classes");
  for (const auto& d : s.det_classes)
    if (std::find(s.seg_classes.begin(), s.seg_classes.end(), d) == s.seg_classes.end())
      throw std::invalid_argument("scene: det class '" + d + "' not among seg classes");
  if (s.moving_fraction < 0 || s.moving_fraction > 1)
    throw std::invalid_argument("scene: moving_fraction outside [0,1]");
  if (s.max_objects < 0) throw std::invalid_argument("scene: max_objects negative");
}

inline nlohmann::json to_json(const SceneSpec& s) {
  return nlohmann::json{{"image_size", s.image_size},   {"seg_classes", s.seg_classes},
                        {"det_classes", s.det_classes}, {"max_objects", s.max_objects},
                        {"moving_fraction", s.moving_fraction}, {"seed", s.seed}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.image_size = j.value("image_size", int64_t{64});
  if (j.contains("seg_classes")) s.seg_classes = j.at("seg_classes").get<std::vector<std::string>>();
  if (j.contains("det_classes")) s.det_classes = j.at("det_classes").get<std::vector<std::string>>();
  s.max_objects = j.value("max_objects", int64_t{5});
  s.moving_fraction = j.value("moving_fraction", 0.5);
  s.seed = j.value("seed", uint64_t{0});
  validate(s);
  return s;
}

// ----------------------------------------------------------------- sample ---

struct Sample {
  Tensor<float> frame_prev, frame_curr;  // [3,H,W] in [0,1]
  Tensor<float> seg_mask;                // [H,W] class ids
  std::vector<Box> boxes;                // det-class ids, normalized coordinates
  Tensor<float> depth;                   // [1,H,W] in [0,1]
  Tensor<float> motion_mask;             // [H,W] binary
  std::set<std::string> task_labels_present;  // subset of {seg, det, depth, motion}
};

namespace scene_detail {

struct Rgb {
  double r, g, b;
};

struct SceneObject {
  bool is_person = false;
  int64_t cx = 0, cy = 0;      // current-frame center, pixels
  int64_t w = 0, h = 0;        // bbox size, pixels
  int64_t dx = 0;              // displacement since previous frame (0 = static)
  double depth = 0;
  Rgb color{0, 0, 0};
};

inline bool inside_object(const SceneObject& o, int64_t x, int64_t y, int64_t shift_x) {
  const double cx = static_cast<double>(o.cx - shift_x);
  const double dx = (static_cast<double>(x) - cx) / (static_cast<double>(o.w) / 2.0);
  const double dy = (static_cast<double>(y) - static_cast<double>(o.cy)) / (static_cast<double>(o.h) / 2.0);
  if (o.is_person) return dx * dx + dy * dy <= 1.0;
  return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
}

struct Ground {
  int64_t horizon;
  double center_bottom, center_top;
  double half_bottom, half_top;
  int64_t size;

  double t(int64_t row) const {
    return static_cast<double>(row - horizon) / static_cast<double>(size - 1 - horizon);
  }
  double road_center(int64_t row) const { return center_top + (center_bottom - center_top) * t(row); }
  double road_half(int64_t row) const { return half_top + (half_bottom - half_top) * t(row); }
  double sidewalk_width(int64_t row) const { return 2.5 + 7.5 * t(row) * static_cast<double>(size) / 64.0; }

  // 0 background, 1 road, 2 sidewalk
  int ground_class(int64_t x, int64_t y) const {
    if (y < horizon) return 0;
    const double off = std::abs(static_cast<double>(x) - road_center(y));
    const double half = road_half(y);
    if (off < half) return 1;
    if (off < half + sidewalk_width(y)) return 2;
    return 0;
  }

  double depth_at(int64_t row) const {
    if (row < horizon) return 1.0;
    return 0.1 + 0.9 * (1.0 - t(row));  // strictly decreasing with row on the ground plane
  }
};

}  // namespace scene_detail

/// Renders one deterministic driving-like scene pair with analytic labels.
/// Same (spec.seed, index) always produces a bit-identical Sample.
inline Sample generate_sample(const SceneSpec& spec, int64_t index) {
  using namespace scene_detail;
  validate(spec);
  if (index < 0) throw std::invalid_argument("generate_sample: negative index");
  const int64_t size = spec.image_size;
  Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(index)));

  Ground ground;
  ground.size = size;
  ground.horizon = static_cast<int64_t>(static_cast<double>(size) * rng.uniform(0.22, 0.34));
  ground.center_bottom = static_cast<double>(size) * rng.uniform(0.40, 0.60);
  ground.center_top = ground.center_bottom + static_cast<double>(size) * rng.uniform(-0.08, 0.08);
  ground.half_bottom = static_cast<double>(size) * rng.uniform(0.24, 0.34);
  ground.half_top = static_cast<double>(size) * rng.uniform(0.04, 0.08);

  const bool want_vehicle = std::find(spec.det_classes.begin(), spec.det_classes.end(), "vehicle") !=
                            spec.det_classes.end();
  const bool want_person = std::find(spec.det_classes.begin(), spec.det_classes.end(), "person") !=
                           spec.det_classes.end();

  // place objects with rejection on bounding-box overlap in either frame
  std::vector<SceneObject> objects;
  const int64_t target_count = static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec.max_objects + 1)));
  for (int64_t i = 0; i < target_count; ++i) {
    SceneObject obj;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      obj.is_person = want_person && (!want_vehicle || rng.bernoulli(0.4));
      if (!want_person && !want_vehicle) break;
      const int64_t base = ground.horizon + 5 +
                           static_cast<int64_t>(rng.below(static_cast<uint64_t>(size - ground.horizon - 8)));
      const double scale = 1.05 - ground.depth_at(base);  // nearer objects are larger
      if (obj.is_person) {
        obj.h = std::clamp<int64_t>(static_cast<int64_t>(34.0 * scale * static_cast<double>(size) / 64.0), 10,
                                    static_cast<int64_t>(0.36 * static_cast<double>(size)));
        obj.w = std::max<int64_t>(5, obj.h / 2);
      } else {
        obj.w = std::clamp<int64_t>(static_cast<int64_t>(30.0 * scale * static_cast<double>(size) / 64.0), 9,
                                    static_cast<int64_t>(0.40 * static_cast<double>(size)));
        obj.h = std::max<int64_t>(6, (obj.w * 3) / 5);
      }
      obj.cy = base - obj.h / 2;
      obj.depth = ground.depth_at(base);
      obj.dx = 0;
      if (rng.bernoulli(spec.moving_fraction)) {
        const int64_t magnitude = 2 + static_cast<int64_t>(rng.below(5));  // 2..6 px
        obj.dx = rng.bernoulli(0.5) ? magnitude : -magnitude;
      }
      const int64_t margin = obj.w / 2 + 2;
      if (size - 2 * margin <= 0) continue;
      obj.cx = margin + static_cast<int64_t>(rng.below(static_cast<uint64_t>(size - 2 * margin)));
      // previous-frame position must also stay inside the image
      const int64_t prev_cx = obj.cx - obj.dx;
      if (prev_cx - obj.w / 2 < 1 || prev_cx + obj.w / 2 > size - 2) continue;
      if (obj.cy - obj.h / 2 < ground.horizon - 2) continue;

      bool overlap = false;
      for (const auto& other : objects) {
        for (int64_t sa : {int64_t{0}, obj.dx}) {
          for (int64_t sb : {int64_t{0}, other.dx}) {
            const bool apart_x = std::abs((obj.cx - sa) - (other.cx - sb)) >= (obj.w + other.w) / 2 + 3;
            const bool apart_y = std::abs(obj.cy - other.cy) >= (obj.h + other.h) / 2 + 3;
            if (!apart_x && !apart_y) overlap = true;
          }
        }
      }
      if (!overlap) placed = true;
    }
    if (!placed) continue;  // unsatisfiable placement: skip, never fail
    const int palette = static_cast<int>(rng.below(3));
    if (obj.is_person) {
      const Rgb options[3] = {{0.92, 0.42, 0.05}, {0.05, 0.82, 0.80}, {0.88, 0.10, 0.55}};
      obj.color = options[palette];
    } else {
      const Rgb options[3] = {{0.82, 0.12, 0.10}, {0.12, 0.20, 0.85}, {0.86, 0.78, 0.10}};
      obj.color = options[palette];
    }
    obj.color.r += rng.uniform(-0.04, 0.04);
    obj.color.g += rng.uniform(-0.04, 0.04);
    obj.color.b += rng.uniform(-0.04, 0.04);
    objects.push_back(obj);
  }
  // painter's order: far objects first
  std::stable_sort(objects.begin(), objects.end(),
                   [](const SceneObject& a, const SceneObject& b) { return a.depth > b.depth; });

  // per-scene color jitter and a screen-fixed noise field shared by both frames
  const Rgb sky{0.55 + rng.uniform(-0.03, 0.03), 0.75 + rng.uniform(-0.03, 0.03), 0.95};
  const Rgb grass{0.22 + rng.uniform(-0.03, 0.03), 0.55 + rng.uniform(-0.03, 0.03), 0.20};
  const Rgb road{0.34 + rng.uniform(-0.02, 0.02), 0.34 + rng.uniform(-0.02, 0.02), 0.38};
  const Rgb walk{0.74 + rng.uniform(-0.03, 0.03), 0.68, 0.58 + rng.uniform(-0.03, 0.03)};
  std::vector<float> noise(static_cast<size_t>(3 * size * size));
  for (auto& n : noise) n = static_cast<float>(rng.uniform(-0.02, 0.02));

  Sample sample;
  sample.frame_prev = Tensor<float>({3, size, size});
  sample.frame_curr = Tensor<float>({3, size, size});
  sample.seg_mask = Tensor<float>({size, size});
  sample.depth = Tensor<float>({1, size, size});
  sample.motion_mask = Tensor<float>({size, size});

  auto seg_id = [&](const std::string& name) {
    const auto it = std::find(spec.seg_classes.begin(), spec.seg_classes.end(), name);
    return it == spec.seg_classes.end() ? int64_t{0}
                                        : static_cast<int64_t>(it - spec.seg_classes.begin());
  };
  const int64_t id_road = seg_id("road"), id_walk = seg_id("sidewalk");
  const int64_t id_vehicle = seg_id("vehicle"), id_person = seg_id("person");

  auto render = [&](Tensor<float>& frame, bool current) {
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        Rgb c{0, 0, 0};
        switch (ground.ground_class(x, y)) {
          case 0: c = y < ground.horizon ? sky : grass; break;
          case 1: c = road; break;
          case 2: c = walk; break;
        }
        for (const auto& obj : objects)
          if (inside_object(obj, x, y, current ? 0 : obj.dx)) c = obj.color;
        const size_t p = static_cast<size_t>(y * size + x);
        frame.at(0, y, x) = std::clamp(static_cast<float>(c.r) + noise[p], 0.0f, 1.0f);
        frame.at(1, y, x) = std::clamp(static_cast<float>(c.g) + noise[p + static_cast<size_t>(size * size)], 0.0f, 1.0f);
        frame.at(2, y, x) = std::clamp(static_cast<float>(c.b) + noise[p + static_cast<size_t>(2 * size * size)], 0.0f, 1.0f);
      }
  };
  render(sample.frame_curr, true);
  render(sample.frame_prev, false);

  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const int g = ground.ground_class(x, y);
      int64_t id = g == 1 ? id_road : (g == 2 ? id_walk : 0);
      double d = ground.depth_at(y);
      bool moving = false;
      for (const auto& obj : objects)
        if (inside_object(obj, x, y, 0)) {
          id = obj.is_person ? id_person : id_vehicle;
          d = obj.depth;
          moving = obj.dx != 0;
        }
      sample.seg_mask.at(y, x) = static_cast<float>(id);
      sample.depth.at(0, y, x) = static_cast<float>(d);
      sample.motion_mask.at(y, x) = moving ? 1.0f : 0.0f;
    }

  for (const auto& obj : objects) {
    Box b;
    const std::string cls = obj.is_person ? "person" : "vehicle";
    const auto it = std::find(spec.det_classes.begin(), spec.det_classes.end(), cls);
    if (it == spec.det_classes.end()) continue;
    b.class_id = static_cast<int>(it - spec.det_classes.begin());
    b.x = static_cast<double>(obj.cx) / static_cast<double>(size);
    b.y = static_cast<double>(obj.cy) / static_cast<double>(size);
    b.w = static_cast<double>(obj.w) / static_cast<double>(size);
    b.h = static_cast<double>(obj.h) / static_cast<double>(size);
    b.confidence = 1.0;
    sample.boxes.push_back(b);
  }

  sample.task_labels_present = {"seg", "det", "depth", "motion"};
  return sample;
}

// ------------------------------------------------------------ dataset I/O ---

struct Manifest {
  int format_version = 1;
  SceneSpec spec;
  int64_t n_train = 0, n_val = 0;
  std::map<std::string, double> label_drop;  // task -> drop probability
};

inline nlohmann::json to_json(const Manifest& m) {
  return nlohmann::json{{"format_version", m.format_version},
                        {"spec", to_json(m.spec)},
                        {"n_train", m.n_train},
                        {"n_val", m.n_val},
                        {"count", m.n_train + m.n_val},
                        {"label_drop", m.label_drop}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1)
    throw std::runtime_error("manifest: unsupported format_version " + std::to_string(m.format_version));
  m.spec = scene_from_json(j.at("spec"));
  m.n_train = j.at("n_train").get<int64_t>();
  m.n_val = j.at("n_val").get<int64_t>();
  if (j.contains("label_drop"))
    for (auto it = j.at("label_drop").begin(); it != j.at("label_drop").end(); ++it)
      m.label_drop[it.key()] = it.value().get<double>();
  if (j.at("count").get<int64_t>() != m.n_train + m.n_val)
    throw std::runtime_error("manifest: count does not equal n_train + n_val");
  return m;
}

inline void write_ppm(const fs::path& path, const Tensor<float>& frame) {
  const Shape& s = frame.shape();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path.string());
  out << "P6\n" << s[2] << " " << s[1] << "\n255\n";
  for (int64_t y = 0; y < s[1]; ++y)
    for (int64_t x = 0; x < s[2]; ++x)
      for (int64_t c = 0; c < 3; ++c)
        out.put(static_cast<char>(std::clamp(static_cast<int>(frame.at(c, y, x) * 255.0f + 0.5f), 0, 255)));
}

/// Color-mapped segmentation/motion mask render for qualitative inspection.
inline void write_mask_ppm(const fs::path& path, const Tensor<float>& mask) {
  static const std::array<std::array<int, 3>, 8> palette{{{40, 40, 40},
                                                          {90, 90, 100},
                                                          {200, 180, 150},
                                                          {220, 40, 30},
                                                          {250, 140, 20},
                                                          {40, 200, 220},
                                                          {20, 220, 60},
                                                          {240, 240, 240}}};
  const Shape& s = mask.shape();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path.string());
  out << "P6\n" << s[1] << " " << s[0] << "\n255\n";
  for (int64_t i = 0; i < mask.size(); ++i) {
    const auto id = static_cast<size_t>(std::llround(mask[static_cast<size_t>(i)])) % palette.size();
    for (int c = 0; c < 3; ++c) out.put(static_cast<char>(palette[id][static_cast<size_t>(c)]));
  }
}

inline nlohmann::json boxes_to_json(const std::vector<Box>& boxes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : boxes)
    arr.push_back({{"class_id", b.class_id}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}});
  return arr;
}

inline std::vector<Box> boxes_from_json(const nlohmann::json& arr) {
  std::vector<Box> out;
  for (const auto& jb : arr) {
    Box b;
    b.class_id = jb.at("class_id").get<int>();
    b.x = jb.at("x").get<double>();
    b.y = jb.at("y").get<double>();
    b.w = jb.at("w").get<double>();
    b.h = jb.at("h").get<double>();
    b.confidence = 1.0;
    out.push_back(b);
  }
  return out;
}

/// Writes manifest.json plus per-sample TNS1 tensors and labels.json.
/// Label dropping (to exercise partial-label training) removes the task
/// from task_labels_present and skips its files.
inline Manifest generate_dataset(const SceneSpec& spec, int64_t n_train, int64_t n_val,
                                 const fs::path& out_dir,
                                 const std::map<std::string, double>& label_drop = {},
                                 bool emit_ppm = false) {
  validate(spec);
  if (n_train < 0 || n_val < 0 || n_train + n_val == 0)
    throw std::invalid_argument("generate_dataset: bad split sizes");
  fs::create_directories(out_dir / "samples");

  Manifest manifest{1, spec, n_train, n_val, label_drop};
  for (int64_t idx = 0; idx < n_train + n_val; ++idx) {
    Sample s = generate_sample(spec, idx);
    for (const auto& [task, rate] : label_drop) {
      Rng drop_rng(derive_seed(derive_seed(spec.seed, "label_drop/" + task), static_cast<uint64_t>(idx)));
      if (drop_rng.bernoulli(rate)) s.task_labels_present.erase(task);
    }
    const fs::path dir = out_dir / "samples" / std::to_string(idx);
    fs::create_directories(dir);
    save_tns(dir / "frame_prev.tns", s.frame_prev);
    save_tns(dir / "frame_curr.tns", s.frame_curr);
    if (s.task_labels_present.count("seg")) save_tns(dir / "seg.tns", s.seg_mask);
    if (s.task_labels_present.count("depth")) save_tns(dir / "depth.tns", s.depth);
    if (s.task_labels_present.count("motion")) save_tns(dir / "motion.tns", s.motion_mask);
    nlohmann::json labels{{"task_labels_present", s.task_labels_present}};
    if (s.task_labels_present.count("det")) labels["boxes"] = boxes_to_json(s.boxes);
    std::ofstream lf(dir / "labels.json", std::ios::trunc);
    lf << labels.dump(2) << "\n";
    if (!lf) throw std::runtime_error("generate_dataset: write failed for " + (dir / "labels.json").string());
    if (emit_ppm) {
      write_ppm(dir / "frame_curr.ppm", s.frame_curr);
      write_ppm(dir / "frame_prev.ppm", s.frame_prev);
      write_mask_ppm(dir / "seg.ppm", s.seg_mask);
      write_mask_ppm(dir / "motion.ppm", s.motion_mask);
    }
  }
  std::ofstream mf(out_dir / "manifest.json", std::ios::trunc);
  mf << to_json(manifest).dump(2) << "\n";
  if (!mf) throw std::runtime_error("generate_dataset: write failed for manifest.json");
  return manifest;
}

struct Dataset {
  Manifest manifest;
  std::vector<Sample> samples;  // index order; train split first, then val

  std::vector<int64_t> train_indices() const {
    std::vector<int64_t> out(static_cast<size_t>(manifest.n_train));
    for (int64_t i = 0; i < manifest.n_train; ++i) out[static_cast<size_t>(i)] = i;
    return out;
  }
  std::vector<int64_t> val_indices() const {
    std::vector<int64_t> out(static_cast<size_t>(manifest.n_val));
    for (int64_t i = 0; i < manifest.n_val; ++i) out[static_cast<size_t>(i)] = manifest.n_train + i;
    return out;
  }
};

inline Dataset load_dataset(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("load_dataset: missing " + (dir / "manifest.json").string());
  nlohmann::json mj;
  mf >> mj;
  Dataset ds;
  ds.manifest = manifest_from_json(mj);
  const int64_t size = ds.manifest.spec.image_size;
  const int64_t count = ds.manifest.n_train + ds.manifest.n_val;
  const auto num_classes = static_cast<int64_t>(ds.manifest.spec.seg_classes.size());

  for (int64_t idx = 0; idx < count; ++idx) {
    const fs::path sdir = dir / "samples" / std::to_string(idx);
    if (!fs::exists(sdir / "labels.json"))
      throw std::runtime_error("load_dataset: missing " + (sdir / "labels.json").string());
    Sample s;
    s.frame_prev = load_tns<float>(sdir / "frame_prev.tns");
    s.frame_curr = load_tns<float>(sdir / "frame_curr.tns");
    if (s.frame_prev.shape() != Shape{3, size, size} || s.frame_curr.shape() != Shape{3, size, size})
      throw std::runtime_error("load_dataset: bad frame shape in sample " + std::to_string(idx));

    std::ifstream lf(sdir / "labels.json");
    nlohmann::json labels;
    lf >> labels;
    for (const auto& t : labels.at("task_labels_present")) s.task_labels_present.insert(t.get<std::string>());

    if (s.task_labels_present.count("seg")) {
      s.seg_mask = load_tns<float>(sdir / "seg.tns");
      if (s.seg_mask.shape() != Shape{size, size})
        throw std::runtime_error("load_dataset: bad seg shape in sample " + std::to_string(idx));
      for (float v : s.seg_mask.data())
        if (v < 0 || v >= static_cast<float>(num_classes))
          throw std::runtime_error("load_dataset: seg id out of range in sample " + std::to_string(idx));
    }
    if (s.task_labels_present.count("depth")) {
      s.depth = load_tns<float>(sdir / "depth.tns");
      if (s.depth.shape() != Shape{1, size, size})
        throw std::runtime_error("load_dataset: bad depth shape in sample " + std::to_string(idx));
      for (float v : s.depth.data())
        if (v < 0.0f || v > 1.0f)
          throw std::runtime_error("load_dataset: depth outside [0,1] in sample " + std::to_string(idx));
    }
    if (s.task_labels_present.count("motion")) {
      s.motion_mask = load_tns<float>(sdir / "motion.tns");
      if (s.motion_mask.shape() != Shape{size, size})
        throw std::runtime_error("load_dataset: bad motion shape in sample " + std::to_string(idx));
      for (float v : s.motion_mask.data())
        if (v != 0.0f && v != 1.0f)
          throw std::runtime_error("load_dataset: non-binary motion mask in sample " + std::to_string(idx));
    }
    if (s.task_labels_present.count("det")) {
      s.boxes = boxes_from_json(labels.at("boxes"));
      for (const auto& b : s.boxes)
        if (b.x < 0 || b.x > 1 || b.y < 0 || b.y > 1 || b.w <= 0 || b.h <= 0)
          throw std::runtime_error("load_dataset: invalid box in sample " + std::to_string(idx));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// Stable fingerprint of a dataset (the manifest file bytes), used to refuse
/// cross-dataset comparisons.
inline uint64_t dataset_fingerprint(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("dataset_fingerprint: missing " + (dir / "manifest.json").string());
  std::string bytes((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
  return hash_label(bytes);
}

}  // namespace mtlab
