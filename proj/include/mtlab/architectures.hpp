#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlab/engine.hpp"
#include "mtlab/graph.hpp"
#include "mtlab/layers.hpp"
#include "mtlab/rng.hpp"

namespace mtlab {

using json = nlohmann::json;

// ----------------------------------------------------------------- specs ---

struct EncoderSpec {
  int64_t base_width = 16;     // W; channel plan is W, 2W, 4W, 8W, 8W
  int64_t input_channels = 3;
  int64_t input_size = 64;     // square, divisible by 32
};

enum class DecoderKind { Segmentation, Detection, Depth, Motion };

inline const char* decoder_kind_name(DecoderKind k) {
  switch (k) {
    case DecoderKind::Segmentation: return "Segmentation";
    case DecoderKind::Detection: return "Detection";
    case DecoderKind::Depth: return "Depth";
    case DecoderKind::Motion: return "Motion";
  }
  return "?";
}

struct DecoderSpec {
  DecoderKind kind = DecoderKind::Segmentation;
  std::string name;
  int64_t num_classes = 0;  // C_seg (>=2) or C_det (>=1); unused for Depth/Motion
  int64_t grid = 0;         // Detection only; must equal input_size/8
};

enum class Fusion { None, Concat, ConvLstm };

inline const char* fusion_name(Fusion f) {
  switch (f) {
    case Fusion::None: return "None";
    case Fusion::Concat: return "Concat";
    case Fusion::ConvLstm: return "ConvLstm";
  }
  return "?";
}

struct StreamSpec {
  int num_streams = 1;
  Fusion fusion = Fusion::None;
  bool share_encoder = true;
};

struct ArchitectureSpec {
  EncoderSpec encoder;
  StreamSpec streams;
  std::vector<DecoderSpec> decoders;
  std::set<std::string> auxiliary;  // decoder names trained but skipped at inference
};

inline void validate(const ArchitectureSpec& spec) {
  const auto& e = spec.encoder;
  if (e.base_width < 1) throw std::invalid_argument("architecture: encoder.base_width must be positive");
  if (e.input_channels < 1) throw std::invalid_argument("architecture: encoder.input_channels must be positive");
  if (e.input_size % 32 != 0)
    throw std::invalid_argument("architecture: encoder.input_size " + std::to_string(e.input_size) +
                                " not divisible by 32");
  const auto& st = spec.streams;
  if (st.num_streams != 1 && st.num_streams != 2)
    throw std::invalid_argument("architecture: streams.num_streams must be 1 or 2");
  if (st.num_streams == 1 && st.fusion != Fusion::None)
    throw std::invalid_argument("architecture: streams.fusion requires num_streams 2");
  if (st.num_streams == 2 && st.fusion == Fusion::None)
    throw std::invalid_argument("architecture: streams.fusion must be Concat or ConvLstm for two streams");
  if (st.num_streams == 2 && !st.share_encoder)
    throw std::invalid_argument("architecture: streams.share_encoder must be true for two streams");
  if (spec.decoders.empty()) throw std::invalid_argument("architecture: decoders empty");
  std::set<std::string> names;
  size_t non_aux = 0;
  for (const auto& d : spec.decoders) {
    if (d.name.empty()) throw std::invalid_argument("architecture: decoders.name empty");
    if (!names.insert(d.name).second)
      throw std::invalid_argument("architecture: duplicate decoder name '" + d.name + "'");
    if (!spec.auxiliary.count(d.name)) ++non_aux;
    switch (d.kind) {
      case DecoderKind::Segmentation:
        if (d.num_classes < 2)
          throw std::invalid_argument("architecture: decoder '" + d.name + "' num_classes must be >= 2");
        break;
      case DecoderKind::Detection:
        if (d.num_classes < 1)
          throw std::invalid_argument("architecture: decoder '" + d.name + "' num_classes must be >= 1");
        if (d.grid != e.input_size / 8)
          throw std::invalid_argument("architecture: decoder '" + d.name + "' grid " + std::to_string(d.grid) +
                                      " must equal input_size/8 = " + std::to_string(e.input_size / 8));
        break;
      case DecoderKind::Depth:
        break;
      case DecoderKind::Motion:
        if (st.num_streams != 2)
          throw std::invalid_argument("architecture: decoder '" + d.name + "' (Motion) requires num_streams 2");
        break;
    }
  }
  for (const auto& a : spec.auxiliary)
    if (!names.count(a)) throw std::invalid_argument("architecture: auxiliary '" + a + "' is not a decoder name");
  if (non_aux == 0) throw std::invalid_argument("architecture: at least one non-auxiliary decoder required");
}

// ------------------------------------------------------------------ json ---

inline json to_json(const ArchitectureSpec& spec) {
  json decoders = json::array();
  for (const auto& d : spec.decoders) {
    json jd{{"kind", decoder_kind_name(d.kind)}, {"name", d.name}};
    if (d.kind == DecoderKind::Segmentation || d.kind == DecoderKind::Detection)
      jd["num_classes"] = d.num_classes;
    if (d.kind == DecoderKind::Detection) jd["grid"] = d.grid;
    decoders.push_back(jd);
  }
  return json{{"encoder",
               {{"base_width", spec.encoder.base_width},
                {"input_channels", spec.encoder.input_channels},
                {"input_size", spec.encoder.input_size}}},
              {"streams",
               {{"num_streams", spec.streams.num_streams},
                {"fusion", fusion_name(spec.streams.fusion)},
                {"share_encoder", spec.streams.share_encoder}}},
              {"decoders", decoders},
              {"auxiliary", spec.auxiliary}};
}

inline ArchitectureSpec architecture_from_json(const json& j) {
  ArchitectureSpec spec;
  const auto& je = j.at("encoder");
  spec.encoder.base_width = je.at("base_width").get<int64_t>();
  spec.encoder.input_channels = je.value("input_channels", int64_t{3});
  spec.encoder.input_size = je.at("input_size").get<int64_t>();
  if (j.contains("streams")) {
    const auto& js = j.at("streams");
    spec.streams.num_streams = js.value("num_streams", 1);
    const std::string f = js.value("fusion", "None");
    if (f == "None") spec.streams.fusion = Fusion::None;
    else if (f == "Concat") spec.streams.fusion = Fusion::Concat;
    else if (f == "ConvLstm") spec.streams.fusion = Fusion::ConvLstm;
    else throw std::invalid_argument("architecture: unknown fusion '" + f + "'");
    spec.streams.share_encoder = js.value("share_encoder", true);
  }
  for (const auto& jd : j.at("decoders")) {
    DecoderSpec d;
    const std::string kind = jd.at("kind").get<std::string>();
    if (kind == "Segmentation") d.kind = DecoderKind::Segmentation;
    else if (kind == "Detection") d.kind = DecoderKind::Detection;
    else if (kind == "Depth") d.kind = DecoderKind::Depth;
    else if (kind == "Motion") d.kind = DecoderKind::Motion;
    else throw std::invalid_argument("architecture: unknown decoder kind '" + kind + "'");
    d.name = jd.at("name").get<std::string>();
    d.num_classes = jd.value("num_classes", int64_t{0});
    d.grid = jd.value("grid", int64_t{0});
    spec.decoders.push_back(std::move(d));
  }
  if (j.contains("auxiliary"))
    for (const auto& a : j.at("auxiliary")) spec.auxiliary.insert(a.get<std::string>());
  validate(spec);
  return spec;
}

// ------------------------------------------------------------- model wiring ---

struct ParamInfo {
  std::string name;
  Shape shape;
  std::string component;  // "encoder", "decoder:<name>", "fusion"
  int64_t fan_in = 1;     // for He initialization
};

struct EncoderTaps {
  int s8 = -1, s16 = -1, s32 = -1;
};

/// Declares every parameter of an architecture in a builder once and wires
/// the network body (any number of times; parameters are shared between
/// calls, which is exactly how the two-stream encoder reuses one weight
/// set).
class ModelWiring {
 public:
  ModelWiring(GraphBuilder& b, const ArchitectureSpec& spec) : b_(b), spec_(spec) {
    validate(spec_);
    declare_all();
  }

  const std::vector<ParamInfo>& params() const { return params_; }
  const std::map<std::string, uint64_t>& macs() const { return macs_; }

  /// Runs the shared encoder on a frame node; taps at strides 8/16/32.
  EncoderTaps encode(int frame) {
    track_macs_begin();
    int conv_count = 0;
    int x = conv("encoder/stem", frame, 2, 1, &conv_count);
    x = b_.relu(x);
    EncoderTaps taps;
    x = residual_block("encoder/block1", x, &conv_count);
    x = residual_block("encoder/block2", x, &conv_count);
    taps.s8 = x;
    x = residual_block("encoder/block3", x, &conv_count);
    taps.s16 = x;
    x = residual_block("encoder/block4", x, &conv_count);
    x = b_.relu(conv("encoder/final", x, 1, 0, &conv_count));
    taps.s32 = x;
    if (conv_count != 10)
      throw std::logic_error("encoder wired " + std::to_string(conv_count) + " convs, expected 10");
    track_macs_end("encoder");
    return taps;
  }

  /// Wires all decoders. prev taps are required for two-stream specs.
  std::map<std::string, int> heads(const EncoderTaps& curr, const EncoderTaps* prev) {
    if (spec_.streams.num_streams == 2 && prev == nullptr)
      throw std::invalid_argument("model: two-stream spec needs previous-frame taps");

    std::optional<EncoderTaps> fused;
    if (spec_.streams.num_streams == 2) {
      track_macs_begin();
      fused = fuse(curr, *prev);
      track_macs_end("fusion");
    }

    // A two-stream model without a Motion decoder is the video-segmentation
    // family: every decoder reads the fused taps. With Motion present, only
    // Motion reads them.
    const bool has_motion = std::any_of(spec_.decoders.begin(), spec_.decoders.end(),
                                        [](const DecoderSpec& d) { return d.kind == DecoderKind::Motion; });
    const EncoderTaps& single_taps = (fused && !has_motion) ? *fused : curr;

    std::map<std::string, int> out;
    for (const auto& d : spec_.decoders) {
      track_macs_begin();
      const std::string prefix = "decoder:" + d.name;
      int head = -1;
      switch (d.kind) {
        case DecoderKind::Segmentation: head = fcn8(prefix, single_taps); break;
        case DecoderKind::Depth: head = fcn8(prefix, single_taps); break;
        case DecoderKind::Motion: head = fcn8(prefix, *fused); break;
        case DecoderKind::Detection: {
          const int mid = b_.relu(conv(prefix + "/conv3x3", single_taps.s8, 1, 1));
          head = conv(prefix + "/head", mid, 1, 0);
          if (b_.shape_of(head)[1] != d.grid)
            throw std::invalid_argument("model: detection grid mismatch for '" + d.name + "'");
          break;
        }
      }
      out[d.name] = head;
      track_macs_end(prefix);
    }
    return out;
  }

  std::map<std::string, int> wire(int frame_curr, int frame_prev = -1) {
    EncoderTaps curr = encode(frame_curr);
    if (spec_.streams.num_streams == 2) {
      if (frame_prev < 0) throw std::invalid_argument("model: two-stream spec needs a previous frame input");
      EncoderTaps prev = encode(frame_prev);
      return heads(curr, &prev);
    }
    return heads(curr, nullptr);
  }

 private:
  // -- declarations ---------------------------------------------------------

  void declare_all() {
    const int64_t w = spec_.encoder.base_width;
    const int64_t cin = spec_.encoder.input_channels;
    declare_conv("encoder/stem", w, cin, 3);
    declare_block("encoder/block1", w, 2 * w);
    declare_block("encoder/block2", 2 * w, 4 * w);
    declare_block("encoder/block3", 4 * w, 8 * w);
    declare_block("encoder/block4", 8 * w, 8 * w, /*force_proj=*/true);  // stride change needs projection
    declare_conv("encoder/final", 8 * w, 8 * w, 1);

    if (spec_.streams.fusion == Fusion::ConvLstm)
      declare_conv("fusion/lstm", 4 * (8 * w), (8 * w) + (8 * w), 3);

    const bool has_motion = std::any_of(spec_.decoders.begin(), spec_.decoders.end(),
                                        [](const DecoderSpec& d) { return d.kind == DecoderKind::Motion; });
    const bool video_mode = spec_.streams.num_streams == 2 && !has_motion;
    const int64_t t8 = 4 * w, t16 = 8 * w, t32 = 8 * w;
    for (const auto& d : spec_.decoders) {
      const std::string prefix = "decoder:" + d.name;
      // Concat fusion doubles the channel widths of fused taps; ConvLstm
      // replaces the stride-32 tap with the same-width hidden state.
      const bool on_fused = d.kind == DecoderKind::Motion || video_mode;
      int64_t c8 = t8, c16 = t16, c32 = t32;
      if (on_fused && spec_.streams.fusion == Fusion::Concat) {
        c8 *= 2; c16 *= 2; c32 *= 2;
      }
      switch (d.kind) {
        case DecoderKind::Segmentation: declare_fcn8(prefix, c8, c16, c32, d.num_classes); break;
        case DecoderKind::Depth: declare_fcn8(prefix, c8, c16, c32, 1); break;
        case DecoderKind::Motion: declare_fcn8(prefix, c8, c16, c32, 2); break;
        case DecoderKind::Detection:
          declare_conv(prefix + "/conv3x3", 2 * w, c8, 3);
          declare_conv(prefix + "/head", 5 + d.num_classes, 2 * w, 1);
          break;
      }
    }
  }

  void declare_fcn8(const std::string& prefix, int64_t c8, int64_t c16, int64_t c32, int64_t c_out) {
    declare_conv(prefix + "/score32", c_out, c32, 1);
    declare_conv(prefix + "/score16", c_out, c16, 1);
    declare_conv(prefix + "/score8", c_out, c8, 1);
  }

  void declare_block(const std::string& prefix, int64_t cin, int64_t cout, bool force_proj = false) {
    declare_conv(prefix + "/conv1", cout, cin, 3);
    declare_conv(prefix + "/conv2", cout, cout, 3);
    if (cin != cout || force_proj) declare_conv(prefix + "/proj", cout, cin, 1);
  }

  void declare_conv(const std::string& prefix, int64_t cout, int64_t cin, int64_t k) {
    const std::string component = prefix.substr(0, prefix.find('/'));
    const int kid = b_.leaf(prefix + "/kernel", {cout, cin, k, k});
    const int bid = b_.leaf(prefix + "/bias", {cout});
    params_.push_back({prefix + "/kernel", b_.shape_of(kid), component, cin * k * k});
    params_.push_back({prefix + "/bias", b_.shape_of(bid), component, cin * k * k});
    leaf_ids_[prefix + "/kernel"] = kid;
    leaf_ids_[prefix + "/bias"] = bid;
  }

  // -- wiring ----------------------------------------------------------------

  int conv(const std::string& prefix, int x, int stride, int pad, int* count = nullptr) {
    if (count) ++*count;
    return b_.conv2d(x, leaf_ids_.at(prefix + "/kernel"), leaf_ids_.at(prefix + "/bias"), stride, pad);
  }

  int residual_block(const std::string& prefix, int x, int* count) {
    int h = b_.relu(conv(prefix + "/conv1", x, 2, 1, count));
    h = conv(prefix + "/conv2", h, 1, 1, count);
    const int skip = conv(prefix + "/proj", x, 2, 0);  // projection excluded from the 10-conv count
    return b_.relu(b_.add(h, skip));
  }

  int fcn8(const std::string& prefix, const EncoderTaps& taps) {
    const int s32 = conv(prefix + "/score32", taps.s32, 1, 0);
    const int s16 = conv(prefix + "/score16", taps.s16, 1, 0);
    const int s8 = conv(prefix + "/score8", taps.s8, 1, 0);
    const int u16 = b_.add(b_.bilinear_upsample(s32, 2), s16);
    const int u8 = b_.add(b_.bilinear_upsample(u16, 2), s8);
    return b_.bilinear_upsample(u8, 8);
  }

  EncoderTaps fuse(const EncoderTaps& curr, const EncoderTaps& prev) {
    switch (spec_.streams.fusion) {
      case Fusion::Concat:
        return {b_.concat_channels({curr.s8, prev.s8}), b_.concat_channels({curr.s16, prev.s16}),
                b_.concat_channels({curr.s32, prev.s32})};
      case Fusion::ConvLstm: {
        const int64_t c = 8 * spec_.encoder.base_width;
        const Shape& s = b_.shape_of(curr.s32);
        auto state = conv_lstm_zero_state(b_, c, s[1], s[2]);
        const int k = leaf_ids_.at("fusion/lstm/kernel");
        const int bias = leaf_ids_.at("fusion/lstm/bias");
        state = conv_lstm_step(b_, prev.s32, state, k, bias, c);
        state = conv_lstm_step(b_, curr.s32, state, k, bias, c);
        return {curr.s8, curr.s16, state.hidden};
      }
      case Fusion::None:
        break;
    }
    throw std::logic_error("fuse called without a fusion mode");
  }

  void track_macs_begin() { mac_mark_ = b_.macs(); }
  void track_macs_end(const std::string& component) { macs_[component] += b_.macs() - mac_mark_; }

  GraphBuilder& b_;
  ArchitectureSpec spec_;
  std::vector<ParamInfo> params_;
  std::map<std::string, int> leaf_ids_;
  std::map<std::string, uint64_t> macs_;
  uint64_t mac_mark_ = 0;
};

// ------------------------------------------------------------------ model ---

template <typename T>
struct Model {
  ArchitectureSpec spec;
  Graph inference;                      // inputs: frame_curr [, frame_prev]; outputs out/<name>
  std::vector<ParamInfo> param_infos;
  std::map<std::string, uint64_t> macs;
  Bindings<T> params;

  bool two_stream() const { return spec.streams.num_streams == 2; }
};

/// He fan-in normal init for kernels, zero biases. Each parameter gets its
/// own stream keyed by (seed, name), so values do not depend on build order.
template <typename T>
Bindings<T> init_params(const std::vector<ParamInfo>& infos, uint64_t seed) {
  Bindings<T> out;
  for (const auto& info : infos) {
    Tensor<T> t(info.shape);
    const bool is_bias = info.shape.size() == 1;
    if (!is_bias) {
      Rng rng(derive_seed(seed, info.name));
      const double stddev = std::sqrt(2.0 / static_cast<double>(info.fan_in));
      for (int64_t i = 0; i < t.size(); ++i) t[static_cast<size_t>(i)] = static_cast<T>(rng.normal(0.0, stddev));
    }
    t.requires_grad = true;
    out.emplace(info.name, std::move(t));
  }
  return out;
}

/// Builds the inference graph (auxiliary decoders excluded) and an
/// initialized parameter set. The encoder parameter leaves appear exactly
/// once regardless of stream count.
template <typename T>
Model<T> assemble_model(const ArchitectureSpec& spec, uint64_t init_seed) {
  validate(spec);
  GraphBuilder b;
  ModelWiring wiring(b, spec);
  const Shape frame_shape{spec.encoder.input_channels, spec.encoder.input_size, spec.encoder.input_size};
  const int curr = b.leaf("frame_curr", frame_shape);
  const int prev = spec.streams.num_streams == 2 ? b.leaf("frame_prev", frame_shape) : -1;
  const auto heads = wiring.wire(curr, prev);
  for (const auto& [name, node] : heads)
    if (!spec.auxiliary.count(name)) b.mark_output("out/" + name, node);

  Model<T> m;
  m.spec = spec;
  m.param_infos = wiring.params();
  m.macs = wiring.macs();
  m.inference = b.build();
  m.params = init_params<T>(m.param_infos, init_seed);
  return m;
}

/// Inference pass; auxiliary decoders are not part of the graph at all.
template <typename T>
Bindings<T> infer(const Model<T>& m, const Tensor<T>& frame_curr,
                  const Tensor<T>* frame_prev = nullptr) {
  Bindings<T> bind = m.params;
  bind.emplace("frame_curr", frame_curr);
  if (m.two_stream()) {
    if (!frame_prev) throw std::invalid_argument("infer: two-stream model needs frame_prev");
    bind.emplace("frame_prev", *frame_prev);
  }
  return eval_outputs(m.inference, bind);
}

// ----------------------------------------------------------- param budget ---

struct ParamBudget {
  std::map<std::string, int64_t> per_component;
  int64_t total = 0;
  int64_t shared = 0;  // parameters on the path to more than one output
  std::map<std::string, uint64_t> macs;
};

template <typename T>
ParamBudget count_params(const Model<T>& m) {
  ParamBudget budget;
  for (const auto& info : m.param_infos) {
    const int64_t n = numel(info.shape);
    budget.per_component[info.component] += n;
    budget.total += n;
  }
  budget.macs = m.macs;

  // reachability: which leaves feed which outputs
  const Graph& g = m.inference;
  std::map<std::string, int> leaf_hits;
  for (const auto& [out_name, out_id] : g.outputs) {
    std::vector<char> seen(g.nodes.size(), 0);
    std::vector<int> stack{out_id};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      if (seen[static_cast<size_t>(id)]) continue;
      seen[static_cast<size_t>(id)] = 1;
      for (int in : g.nodes[static_cast<size_t>(id)].in) stack.push_back(in);
    }
    for (const auto& [leaf_name, leaf_id] : g.leaves)
      if (seen[static_cast<size_t>(leaf_id)] && m.params.count(leaf_name)) ++leaf_hits[leaf_name];
  }
  for (const auto& info : m.param_infos) {
    auto it = leaf_hits.find(info.name);
    if (it != leaf_hits.end() && it->second > 1) budget.shared += numel(info.shape);
  }
  return budget;
}

inline json to_json(const ParamBudget& b) {
  return json{{"per_component", b.per_component}, {"total", b.total}, {"shared", b.shared}, {"macs", b.macs}};
}

inline std::string budget_csv(const ParamBudget& b) {
  std::string out = "component,params,macs\n";
  for (const auto& [name, count] : b.per_component) {
    const auto mit = b.macs.find(name);
    out += name + "," + std::to_string(count) + "," + std::to_string(mit == b.macs.end() ? 0 : mit->second) + "\n";
  }
  out += "total," + std::to_string(b.total) + ",\n";
  out += "shared," + std::to_string(b.shared) + ",\n";
  return out;
}

// -------------------------------------------------------- sharing analysis ---

struct SharingReport {
  double shared_fraction = 0.0;   // s = shared params / sum(STL totals)
  int64_t savings = 0;            // sum(STL totals) - MTL total
  double reclaim_per_task = 0.0;  // s * (n-1) / n
};

inline SharingReport sharing_analysis(const std::vector<ParamBudget>& stl_budgets,
                                      const ParamBudget& mtl_budget) {
  if (stl_budgets.empty()) throw std::invalid_argument("sharing_analysis: no STL budgets");
  int64_t stl_total = 0;
  for (const auto& b : stl_budgets) stl_total += b.total;
  if (stl_total <= 0) throw std::invalid_argument("sharing_analysis: STL totals must be positive");
  SharingReport r;
  r.savings = stl_total - mtl_budget.total;
  r.shared_fraction = static_cast<double>(mtl_budget.shared) / static_cast<double>(stl_total);
  const double n = static_cast<double>(stl_budgets.size());
  r.reclaim_per_task = r.shared_fraction * (n - 1.0) / n;
  return r;
}

}  // namespace mtlab
