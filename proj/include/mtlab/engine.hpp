#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlab/graph.hpp"
#include "mtlab/kernels.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

template <typename T>
using Bindings = std::map<std::string, Tensor<T>>;

/// Per-evaluation state: node values, pooling argmax records, loss-side
/// counters. Reusable across evaluations of the same graph.
template <typename T>
struct Workspace {
  std::vector<std::vector<T>> val;
  std::vector<std::vector<int32_t>> aux;
  std::vector<int64_t> counts;  // SoftmaxXent valid-pixel counts
  std::vector<T> scratch_a, scratch_b;

  void reset(size_t n_nodes) {
    val.assign(n_nodes, {});
    aux.assign(n_nodes, {});
    counts.assign(n_nodes, 0);
  }
};

namespace detail {

template <typename T>
void check_finite(const std::vector<T>& v, const Graph& g, int id, const char* stage) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error(std::string("non-finite value in ") + stage + " at node " + g.describe(id));
  }
}

}  // namespace detail

/// Forward pass. Pure: same bindings give bit-identical results. Throws on
/// missing/mismatched leaf bindings and on the first non-finite
/// intermediate, naming the node.
template <typename T>
void eval_graph(const Graph& g, const Bindings<T>& bind, Workspace<T>& ws) {
  ws.reset(g.nodes.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    const int id = static_cast<int>(i);
    const int64_t out_n = numel(n.shape);
    std::vector<T>& out = ws.val[i];

    auto in_val = [&](int k) -> const std::vector<T>& { return ws.val[static_cast<size_t>(n.in[static_cast<size_t>(k)])]; };
    auto in_shape = [&](int k) -> const Shape& { return g.nodes[static_cast<size_t>(n.in[static_cast<size_t>(k)])].shape; };

    switch (n.op) {
      case Op::Leaf: {
        auto it = bind.find(n.name);
        if (it == bind.end()) throw std::invalid_argument("eval: missing binding for leaf '" + n.name + "'");
        if (it->second.shape() != n.shape)
          throw std::invalid_argument("eval: leaf '" + n.name + "' bound with shape " +
                                      shape_str(it->second.shape()) + ", declared " + shape_str(n.shape));
        out = it->second.data();
        break;
      }
      case Op::Const: {
        out.resize(static_cast<size_t>(out_n));
        for (int64_t j = 0; j < out_n; ++j) out[static_cast<size_t>(j)] = static_cast<T>(n.cdata[static_cast<size_t>(j)]);
        break;
      }
      case Op::Identity:
        out = in_val(0);
        break;
      case Op::Add: {
        const auto& a = in_val(0);
        const auto& b = in_val(1);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j) out[j] = a[j] + b[j];
        break;
      }
      case Op::Sub: {
        const auto& a = in_val(0);
        const auto& b = in_val(1);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j) out[j] = a[j] - b[j];
        break;
      }
      case Op::Neg: {
        const auto& a = in_val(0);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j) out[j] = -a[j];
        break;
      }
      case Op::Mul: {
        const auto& a = in_val(0);
        const auto& b = in_val(1);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j) out[j] = a[j] * b[j];
        break;
      }
      case Op::ScalarMul: {
        const auto& a = in_val(0);
        const T c = static_cast<T>(n.alpha);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j) out[j] = c * a[j];
        break;
      }
      case Op::Relu: {
        const auto& a = in_val(0);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j) out[j] = a[j] > T(0) ? a[j] : T(0);
        break;
      }
      case Op::Sigmoid: {
        const auto& a = in_val(0);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j)
          out[j] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(a[j]))));
        break;
      }
      case Op::Tanh: {
        const auto& a = in_val(0);
        out.resize(a.size());
        for (size_t j = 0; j < a.size(); ++j) out[j] = static_cast<T>(std::tanh(static_cast<double>(a[j])));
        break;
      }
      case Op::Conv2d: {
        const auto dims = kernels::conv_dims(in_shape(0), in_shape(1), n.stride, n.pad);
        out.resize(static_cast<size_t>(out_n));
        kernels::conv2d_forward(in_val(0).data(), in_val(1).data(), in_val(2).data(), out.data(), dims,
                                ws.scratch_a);
        break;
      }
      case Op::MaxPool2x2: {
        const Shape& xs = in_shape(0);
        out.resize(static_cast<size_t>(out_n));
        ws.aux[i].resize(static_cast<size_t>(out_n));
        kernels::max_pool_forward(in_val(0).data(), xs[0], xs[1], xs[2], out.data(), ws.aux[i].data());
        break;
      }
      case Op::BilinearUp: {
        const Shape& xs = in_shape(0);
        out.resize(static_cast<size_t>(out_n));
        kernels::bilinear_up_forward(in_val(0).data(), xs[0], xs[1], xs[2], n.factor, out.data());
        break;
      }
      case Op::ConcatC: {
        out.resize(static_cast<size_t>(out_n));
        size_t off = 0;
        for (size_t k = 0; k < n.in.size(); ++k) {
          const auto& a = in_val(static_cast<int>(k));
          std::copy(a.begin(), a.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
          off += a.size();
        }
        break;
      }
      case Op::SliceC: {
        const Shape& xs = in_shape(0);
        const int64_t hw = xs[1] * xs[2];
        const auto& a = in_val(0);
        out.assign(a.begin() + static_cast<std::ptrdiff_t>(n.c0 * hw),
                   a.begin() + static_cast<std::ptrdiff_t>(n.c1 * hw));
        break;
      }
      case Op::SoftmaxC: {
        const Shape& xs = in_shape(0);
        out.resize(static_cast<size_t>(out_n));
        kernels::softmax_channels_forward(in_val(0).data(), xs[0], xs[1] * xs[2], out.data());
        break;
      }
      case Op::SumAll: {
        const auto& a = in_val(0);
        double acc = 0;
        for (T v : a) acc += static_cast<double>(v);
        out = {static_cast<T>(acc)};
        break;
      }
      case Op::MeanAll: {
        const auto& a = in_val(0);
        double acc = 0;
        for (T v : a) acc += static_cast<double>(v);
        out = {static_cast<T>(acc / static_cast<double>(a.size()))};
        break;
      }
      case Op::SoftmaxXent: {
        const Shape& ls = in_shape(0);
        int64_t n_valid = 0;
        const T loss = kernels::softmax_xent_forward(in_val(0).data(), in_val(1).data(), ls[0],
                                                     ls[1] * ls[2], n.ignore_id, &n_valid);
        ws.counts[i] = n_valid;
        out = {loss};
        break;
      }
      case Op::HuberMean: {
        out = {kernels::huber_mean_forward(in_val(0).data(), in_val(1).data(),
                                           static_cast<int64_t>(in_val(0).size()), n.delta)};
        break;
      }
      case Op::GeoMean: {
        double acc = 0;
        for (size_t k = 0; k < n.in.size(); ++k)
          acc += std::log(std::max(static_cast<double>(in_val(static_cast<int>(k))[0]), n.eps));
        out = {static_cast<T>(std::exp(acc / static_cast<double>(n.in.size())))};
        break;
      }
      case Op::WeightedSum: {
        double acc = 0;
        for (size_t k = 0; k < n.in.size(); ++k)
          acc += n.coeffs[k] * static_cast<double>(in_val(static_cast<int>(k))[0]);
        out = {static_cast<T>(acc)};
        break;
      }
    }
    detail::check_finite(out, g, id, "forward");
  }
}

/// Convenience forward returning the named outputs.
template <typename T>
Bindings<T> eval_outputs(const Graph& g, const Bindings<T>& bind) {
  Workspace<T> ws;
  eval_graph(g, bind, ws);
  Bindings<T> out;
  for (const auto& [name, id] : g.outputs)
    out.emplace(name, Tensor<T>(g.nodes[static_cast<size_t>(id)].shape, ws.val[static_cast<size_t>(id)]));
  return out;
}

/// Reverse pass from a scalar seed node. Requires a completed forward pass
/// in ws. Returns gradients for every leaf whose binding has
/// requires_grad=true; leaves unreachable from the seed get exact zeros.
template <typename T>
std::map<std::string, Tensor<T>> backward(const Graph& g, const Bindings<T>& bind, Workspace<T>& ws,
                                          int seed_node) {
  if (seed_node < 0 || seed_node >= static_cast<int>(g.nodes.size()))
    throw std::invalid_argument("backward: seed node out of range");
  if (numel(g.nodes[static_cast<size_t>(seed_node)].shape) != 1)
    throw std::invalid_argument("backward: seed output " + g.describe(seed_node) + " is not scalar");
  if (ws.val.size() != g.nodes.size() || ws.val[static_cast<size_t>(seed_node)].empty())
    throw std::invalid_argument("backward: forward pass not completed");

  std::vector<std::vector<T>> grad(g.nodes.size());
  grad[static_cast<size_t>(seed_node)] = {T(1)};

  auto ensure = [&](int id) -> std::vector<T>& {
    auto& gbuf = grad[static_cast<size_t>(id)];
    if (gbuf.empty()) gbuf.assign(static_cast<size_t>(numel(g.nodes[static_cast<size_t>(id)].shape)), T(0));
    return gbuf;
  };

  for (int id = seed_node; id >= 0; --id) {
    const auto& gbuf = grad[static_cast<size_t>(id)];
    if (gbuf.empty()) continue;  // not reachable from seed
    const Node& n = g.nodes[static_cast<size_t>(id)];
    auto in_val = [&](int k) -> const std::vector<T>& { return ws.val[static_cast<size_t>(n.in[static_cast<size_t>(k)])]; };
    auto in_shape = [&](int k) -> const Shape& { return g.nodes[static_cast<size_t>(n.in[static_cast<size_t>(k)])].shape; };

    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::Identity: {
        auto& d = ensure(n.in[0]);
        for (size_t j = 0; j < d.size(); ++j) d[j] += gbuf[j];
        break;
      }
      case Op::Add: {
        auto& da = ensure(n.in[0]);
        for (size_t j = 0; j < da.size(); ++j) da[j] += gbuf[j];
        auto& db = ensure(n.in[1]);
        for (size_t j = 0; j < db.size(); ++j) db[j] += gbuf[j];
        break;
      }
      case Op::Sub: {
        auto& da = ensure(n.in[0]);
        for (size_t j = 0; j < da.size(); ++j) da[j] += gbuf[j];
        auto& db = ensure(n.in[1]);
        for (size_t j = 0; j < db.size(); ++j) db[j] -= gbuf[j];
        break;
      }
      case Op::Neg: {
        auto& d = ensure(n.in[0]);
        for (size_t j = 0; j < d.size(); ++j) d[j] -= gbuf[j];
        break;
      }
      case Op::Mul: {
        const auto& a = in_val(0);
        const auto& b = in_val(1);
        {
          auto& da = ensure(n.in[0]);
          for (size_t j = 0; j < da.size(); ++j) da[j] += gbuf[j] * b[j];
        }
        {
          auto& db = ensure(n.in[1]);
          for (size_t j = 0; j < db.size(); ++j) db[j] += gbuf[j] * a[j];
        }
        break;
      }
      case Op::ScalarMul: {
        auto& d = ensure(n.in[0]);
        const T c = static_cast<T>(n.alpha);
        for (size_t j = 0; j < d.size(); ++j) d[j] += c * gbuf[j];
        break;
      }
      case Op::Relu: {
        const auto& a = in_val(0);
        auto& d = ensure(n.in[0]);
        for (size_t j = 0; j < d.size(); ++j)
          if (a[j] > T(0)) d[j] += gbuf[j];
        break;
      }
      case Op::Sigmoid: {
        const auto& s = ws.val[static_cast<size_t>(id)];
        auto& d = ensure(n.in[0]);
        for (size_t j = 0; j < d.size(); ++j) d[j] += gbuf[j] * s[j] * (T(1) - s[j]);
        break;
      }
      case Op::Tanh: {
        const auto& t = ws.val[static_cast<size_t>(id)];
        auto& d = ensure(n.in[0]);
        for (size_t j = 0; j < d.size(); ++j) d[j] += gbuf[j] * (T(1) - t[j] * t[j]);
        break;
      }
      case Op::Conv2d: {
        const auto dims = kernels::conv_dims(in_shape(0), in_shape(1), n.stride, n.pad);
        auto& dx = ensure(n.in[0]);
        auto& dk = ensure(n.in[1]);
        auto& db = ensure(n.in[2]);
        kernels::conv2d_backward(in_val(0).data(), in_val(1).data(), gbuf.data(), dx.data(), dk.data(),
                                 db.data(), dims, ws.scratch_a, ws.scratch_b);
        break;
      }
      case Op::MaxPool2x2: {
        auto& dx = ensure(n.in[0]);
        kernels::max_pool_backward(gbuf.data(), ws.aux[static_cast<size_t>(id)].data(),
                                   static_cast<int64_t>(gbuf.size()), dx.data());
        break;
      }
      case Op::BilinearUp: {
        const Shape& xs = in_shape(0);
        auto& dx = ensure(n.in[0]);
        kernels::bilinear_up_backward(gbuf.data(), xs[0], xs[1], xs[2], n.factor, dx.data());
        break;
      }
      case Op::ConcatC: {
        size_t off = 0;
        for (size_t k = 0; k < n.in.size(); ++k) {
          auto& d = ensure(n.in[k]);
          for (size_t j = 0; j < d.size(); ++j) d[j] += gbuf[off + j];
          off += d.size();
        }
        break;
      }
      case Op::SliceC: {
        const Shape& xs = in_shape(0);
        const int64_t hw = xs[1] * xs[2];
        auto& d = ensure(n.in[0]);
        const size_t off = static_cast<size_t>(n.c0 * hw);
        for (size_t j = 0; j < gbuf.size(); ++j) d[off + j] += gbuf[j];
        break;
      }
      case Op::SoftmaxC: {
        const Shape& xs = in_shape(0);
        auto& dx = ensure(n.in[0]);
        kernels::softmax_channels_backward(ws.val[static_cast<size_t>(id)].data(), gbuf.data(), xs[0],
                                           xs[1] * xs[2], dx.data());
        break;
      }
      case Op::SumAll: {
        auto& d = ensure(n.in[0]);
        for (size_t j = 0; j < d.size(); ++j) d[j] += gbuf[0];
        break;
      }
      case Op::MeanAll: {
        auto& d = ensure(n.in[0]);
        const T s = gbuf[0] / static_cast<T>(d.size());
        for (size_t j = 0; j < d.size(); ++j) d[j] += s;
        break;
      }
      case Op::SoftmaxXent: {
        const Shape& ls = in_shape(0);
        auto& dl = ensure(n.in[0]);
        kernels::softmax_xent_backward(in_val(0).data(), in_val(1).data(), ls[0], ls[1] * ls[2],
                                       n.ignore_id, ws.counts[static_cast<size_t>(id)], gbuf[0], dl.data());
        break;
      }
      case Op::HuberMean: {
        auto& dp = ensure(n.in[0]);
        auto& dt = ensure(n.in[1]);
        kernels::huber_mean_backward(in_val(0).data(), in_val(1).data(),
                                     static_cast<int64_t>(in_val(0).size()), n.delta, gbuf[0], dp.data(),
                                     dt.data());
        break;
      }
      case Op::GeoMean: {
        const double total = static_cast<double>(ws.val[static_cast<size_t>(id)][0]);
        const double nn = static_cast<double>(n.in.size());
        for (size_t k = 0; k < n.in.size(); ++k) {
          const double li = static_cast<double>(in_val(static_cast<int>(k))[0]);
          auto& d = ensure(n.in[k]);
          if (li > n.eps) d[0] += static_cast<T>(static_cast<double>(gbuf[0]) * total / (nn * li));
        }
        break;
      }
      case Op::WeightedSum: {
        for (size_t k = 0; k < n.in.size(); ++k) {
          auto& d = ensure(n.in[k]);
          d[0] += static_cast<T>(n.coeffs[k] * static_cast<double>(gbuf[0]));
        }
        break;
      }
    }
  }

  std::map<std::string, Tensor<T>> result;
  for (const auto& [name, id] : g.leaves) {
    auto it = bind.find(name);
    if (it == bind.end() || !it->second.requires_grad) continue;
    auto& gbuf = grad[static_cast<size_t>(id)];
    if (gbuf.empty()) gbuf.assign(static_cast<size_t>(numel(g.nodes[static_cast<size_t>(id)].shape)), T(0));
    detail::check_finite(gbuf, g, id, "gradient");
    result.emplace(name, Tensor<T>(g.nodes[static_cast<size_t>(id)].shape, std::move(gbuf)));
  }
  return result;
}

}  // namespace mtlab
