#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlab/tensor.hpp"

namespace mtlab {

/// Primitive op kinds of the static computation graph. Leaf nodes are bound
/// by name at evaluation time; whether a leaf is a trainable parameter is a
/// property of the bound tensor (requires_grad), not of the graph.
enum class Op {
  Leaf,         // named binding (input or parameter)
  Const,        // constant tensor baked into the graph
  Identity,     // pass-through
  Add,          // elementwise, same shape
  Sub,          // elementwise, same shape
  Neg,          // elementwise
  Mul,          // elementwise, same shape (Mul(x,x) doubles the gradient)
  ScalarMul,    // x * alpha
  Relu,         // max(0, x); subgradient at 0 is 0
  Sigmoid,      //
  Tanh,         //
  Conv2d,       // inputs: x [Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout]
  MaxPool2x2,   // window 2, stride 2; H and W must be even
  BilinearUp,   // align_corners=false; factor in {2,4,8}
  ConcatC,      // n-ary channel concatenation, matching H,W
  SliceC,       // channel view [c0, c1)
  SoftmaxC,     // per-pixel softmax over channel axis
  SumAll,       // -> scalar [1]
  MeanAll,      // -> scalar [1]
  SoftmaxXent,  // inputs: logits [C,H,W], target id map [H,W] -> scalar [1]
  HuberMean,    // inputs: pred [1,H,W] (or any shape), target same shape -> [1]
  GeoMean,      // n-ary scalar: exp(mean(log(max(Li, eps)))) -> [1]
  WeightedSum,  // n-ary scalar: sum(ci * Li) -> [1]
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Const: return "const";
    case Op::Identity: return "identity";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Neg: return "neg";
    case Op::Mul: return "mul";
    case Op::ScalarMul: return "scalar_mul";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Conv2d: return "conv2d";
    case Op::MaxPool2x2: return "max_pool2d";
    case Op::BilinearUp: return "bilinear_upsample";
    case Op::ConcatC: return "concat_channels";
    case Op::SliceC: return "slice_channels";
    case Op::SoftmaxC: return "softmax_channels";
    case Op::SumAll: return "sum";
    case Op::MeanAll: return "mean";
    case Op::SoftmaxXent: return "softmax_cross_entropy";
    case Op::HuberMean: return "huber_mean";
    case Op::GeoMean: return "geometric_mean";
    case Op::WeightedSum: return "weighted_sum";
  }
  return "?";
}

struct Node {
  Op op = Op::Identity;
  std::vector<int> in;  // ids of earlier nodes only (topological by construction)
  Shape shape;          // declared output shape
  std::string name;     // leaf binding name, otherwise a diagnostic label

  // op attributes
  int stride = 1;
  int pad = 0;
  int factor = 2;              // BilinearUp
  int c0 = 0, c1 = 0;          // SliceC range
  double alpha = 1.0;          // ScalarMul
  double delta = 1.0;          // HuberMean
  double eps = 1e-8;           // GeoMean clamp
  int ignore_id = -1;          // SoftmaxXent
  std::vector<double> coeffs;  // WeightedSum
  std::vector<double> cdata;   // Const payload
};

struct Graph {
  std::vector<Node> nodes;
  std::map<std::string, int> outputs;  // output name -> node id
  std::map<std::string, int> leaves;   // leaf name -> node id

  const Node& node(int id) const { return nodes[static_cast<size_t>(id)]; }
  int output(const std::string& name) const {
    auto it = outputs.find(name);
    if (it == outputs.end()) throw std::invalid_argument("graph: unknown output '" + name + "'");
    return it->second;
  }

  std::string describe(int id) const {
    const Node& n = nodes[static_cast<size_t>(id)];
    std::string s = std::string(op_name(n.op)) + "#" + std::to_string(id);
    if (!n.name.empty()) s += " ('" + n.name + "')";
    return s;
  }
};

/// Incremental graph construction with shape inference. Every method
/// validates its operands and throws naming the offending node, so an
/// assembled Graph always satisfies the topology and shape invariants.
class GraphBuilder {
 public:
  int leaf(const std::string& name, Shape shape) {
    if (name.empty()) throw std::invalid_argument("leaf: empty name");
    if (g_.leaves.count(name)) throw std::invalid_argument("leaf: duplicate name '" + name + "'");
    const int id = push({Op::Leaf, {}, std::move(shape), name});
    g_.leaves[name] = id;
    return id;
  }

  int constant(Shape shape, std::vector<double> data) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("constant: shape/data mismatch");
    Node n{Op::Const, {}, std::move(shape), ""};
    n.cdata = std::move(data);
    return push(std::move(n));
  }

  int zeros(Shape shape) {
    return constant(shape, std::vector<double>(static_cast<size_t>(numel(shape)), 0.0));
  }

  int identity(int x) { return push({Op::Identity, {x}, shape_of(x), ""}); }

  int add(int a, int b) { return elementwise(Op::Add, a, b); }
  int sub(int a, int b) { return elementwise(Op::Sub, a, b); }
  int mul(int a, int b) { return elementwise(Op::Mul, a, b); }
  int neg(int x) { return push({Op::Neg, {x}, shape_of(x), ""}); }

  int scalar_mul(int x, double alpha) {
    Node n{Op::ScalarMul, {x}, shape_of(x), ""};
    n.alpha = alpha;
    return push(std::move(n));
  }

  int relu(int x) { return push({Op::Relu, {x}, shape_of(x), ""}); }
  int sigmoid(int x) { return push({Op::Sigmoid, {x}, shape_of(x), ""}); }
  int tanh(int x) { return push({Op::Tanh, {x}, shape_of(x), ""}); }

  int conv2d(int x, int kernel, int bias, int stride, int pad) {
    const Shape& xs = shape_of(x);
    const Shape& ks = shape_of(kernel);
    const Shape& bs = shape_of(bias);
    if (xs.size() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + shape_str(xs));
    if (ks.size() != 4) throw std::invalid_argument("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(ks));
    if (bs.size() != 1 || bs[0] != ks[0])
      throw std::invalid_argument("conv2d: bias must be [Cout]=" + std::to_string(ks[0]) + ", got " + shape_str(bs));
    if (ks[1] != xs[0])
      throw std::invalid_argument("conv2d: kernel Cin " + std::to_string(ks[1]) + " does not match input channels " +
                                  std::to_string(xs[0]));
    if (ks[2] % 2 == 0 || ks[3] % 2 == 0) throw std::invalid_argument("conv2d: kernel dims must be odd");
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
    const int64_t ho = (xs[1] + 2 * pad - ks[2]) / stride + 1;
    const int64_t wo = (xs[2] + 2 * pad - ks[3]) / stride + 1;
    if (ho < 1 || wo < 1)
      throw std::invalid_argument("conv2d: output would be empty for input " + shape_str(xs));
    Node n{Op::Conv2d, {x, kernel, bias}, {ks[0], ho, wo}, ""};
    n.stride = stride;
    n.pad = pad;
    macs_ += static_cast<uint64_t>(ks[0]) * ho * wo * ks[1] * ks[2] * ks[3];
    return push(std::move(n));
  }

  int max_pool2x2(int x) {
    const Shape& xs = shape_of(x);
    if (xs.size() != 3) throw std::invalid_argument("max_pool2d: input must be [C,H,W]");
    if (xs[1] % 2 != 0 || xs[2] % 2 != 0)
      throw std::invalid_argument("max_pool2d: H and W must be even, got " + shape_str(xs));
    return push({Op::MaxPool2x2, {x}, {xs[0], xs[1] / 2, xs[2] / 2}, ""});
  }

  int bilinear_upsample(int x, int factor) {
    const Shape& xs = shape_of(x);
    if (xs.size() != 3) throw std::invalid_argument("bilinear_upsample: input must be [C,H,W]");
    if (factor != 2 && factor != 4 && factor != 8)
      throw std::invalid_argument("bilinear_upsample: unsupported factor " + std::to_string(factor));
    Node n{Op::BilinearUp, {x}, {xs[0], xs[1] * factor, xs[2] * factor}, ""};
    n.factor = factor;
    return push(std::move(n));
  }

  int concat_channels(const std::vector<int>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const Shape& first = shape_of(xs[0]);
    if (first.size() != 3) throw std::invalid_argument("concat_channels: inputs must be [C,H,W]");
    int64_t c = 0;
    for (int x : xs) {
      const Shape& s = shape_of(x);
      if (s.size() != 3 || s[1] != first[1] || s[2] != first[2])
        throw std::invalid_argument("concat_channels: spatial mismatch " + shape_str(s) + " vs " + shape_str(first));
      c += s[0];
    }
    return push({Op::ConcatC, xs, {c, first[1], first[2]}, ""});
  }

  int slice_channels(int x, int c0, int c1) {
    const Shape& xs = shape_of(x);
    if (xs.size() != 3) throw std::invalid_argument("slice_channels: input must be [C,H,W]");
    if (c0 < 0 || c1 <= c0 || c1 > xs[0]) throw std::invalid_argument("slice_channels: bad range");
    Node n{Op::SliceC, {x}, {c1 - c0, xs[1], xs[2]}, ""};
    n.c0 = c0;
    n.c1 = c1;
    return push(std::move(n));
  }

  int softmax_channels(int x) {
    const Shape& xs = shape_of(x);
    if (xs.size() != 3 || xs[0] < 2)
      throw std::invalid_argument("softmax_channels: input must be [C>=2,H,W], got " + shape_str(xs));
    return push({Op::SoftmaxC, {x}, xs, ""});
  }

  int sum_all(int x) { return push({Op::SumAll, {x}, {1}, ""}); }
  int mean_all(int x) { return push({Op::MeanAll, {x}, {1}, ""}); }

  int softmax_cross_entropy(int logits, int target, int ignore_id = -1) {
    const Shape& ls = shape_of(logits);
    const Shape& ts = shape_of(target);
    if (ls.size() != 3 || ls[0] < 2) throw std::invalid_argument("softmax_cross_entropy: logits must be [C>=2,H,W]");
    if (ts.size() != 2 || ts[0] != ls[1] || ts[1] != ls[2])
      throw std::invalid_argument("softmax_cross_entropy: target must be [H,W] matching logits, got " + shape_str(ts));
    Node n{Op::SoftmaxXent, {logits, target}, {1}, ""};
    n.ignore_id = ignore_id;
    return push(std::move(n));
  }

  int huber_mean(int pred, int target, double delta) {
    if (shape_of(pred) != shape_of(target))
      throw std::invalid_argument("huber_mean: shape mismatch " + shape_str(shape_of(pred)) + " vs " +
                                  shape_str(shape_of(target)));
    if (delta <= 0) throw std::invalid_argument("huber_mean: delta must be positive");
    Node n{Op::HuberMean, {pred, target}, {1}, ""};
    n.delta = delta;
    return push(std::move(n));
  }

  int geometric_mean(const std::vector<int>& losses, double eps) {
    if (losses.size() < 2) throw std::invalid_argument("geometric_mean: needs at least two losses");
    if (eps <= 0) throw std::invalid_argument("geometric_mean: eps must be positive");
    for (int x : losses) require_scalar(x, "geometric_mean");
    Node n{Op::GeoMean, losses, {1}, ""};
    n.eps = eps;
    return push(std::move(n));
  }

  int weighted_sum(const std::vector<int>& xs, std::vector<double> coeffs) {
    if (xs.empty() || xs.size() != coeffs.size())
      throw std::invalid_argument("weighted_sum: inputs/coefficients mismatch");
    for (int x : xs) require_scalar(x, "weighted_sum");
    Node n{Op::WeightedSum, xs, {1}, ""};
    n.coeffs = std::move(coeffs);
    return push(std::move(n));
  }

  void mark_output(const std::string& name, int id) {
    check_id(id);
    if (g_.outputs.count(name)) throw std::invalid_argument("mark_output: duplicate output '" + name + "'");
    g_.outputs[name] = id;
  }

  const Shape& shape_of(int id) const {
    check_id(id);
    return g_.nodes[static_cast<size_t>(id)].shape;
  }

  /// Multiply-accumulate count of every conv declared so far (the only
  /// compute-heavy op; everything else is O(elements)).
  uint64_t macs() const { return macs_; }
  void reset_macs() { macs_ = 0; }

  size_t node_count() const { return g_.nodes.size(); }

  Graph build() { return std::move(g_); }

 private:
  int elementwise(Op op, int a, int b) {
    if (shape_of(a) != shape_of(b))
      throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " + shape_str(shape_of(a)) + " vs " +
                                  shape_str(shape_of(b)));
    return push({op, {a, b}, shape_of(a), ""});
  }

  void require_scalar(int id, const char* what) const {
    if (numel(shape_of(id)) != 1)
      throw std::invalid_argument(std::string(what) + ": input " + std::to_string(id) + " is not scalar");
  }

  void check_id(int id) const {
    if (id < 0 || id >= static_cast<int>(g_.nodes.size()))
      throw std::invalid_argument("graph: node id " + std::to_string(id) + " out of range");
  }

  int push(Node n) {
    for (int i : n.in) check_id(i);
    g_.nodes.push_back(std::move(n));
    return static_cast<int>(g_.nodes.size()) - 1;
  }

  Graph g_;
  uint64_t macs_ = 0;
};

}  // namespace mtlab
