#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "mtlab/engine.hpp"
#include "mtlab/graph.hpp"
#include "mtlab/rng.hpp"

namespace mtlab {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  int64_t entries_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Relative-error metric used everywhere: |a - n| / max(|a|, |n|, 1e-8).
inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

/// Compares backward() against central finite differences on every entry of
/// every requires_grad binding (a seeded random subsample above
/// max_entries). Runs at double precision; pass iff max relative error is
/// below tolerance.
inline GradCheckReport grad_check(const Graph& g, Bindings<double> bind, const std::string& output,
                                  double tolerance, double h = 1e-5, uint64_t subsample_seed = 0,
                                  int64_t max_entries = 10000) {
  const int seed_node = g.output(output);
  Workspace<double> ws;
  eval_graph(g, bind, ws);
  const auto analytic = backward(g, bind, ws, seed_node);

  GradCheckReport report;
  report.tolerance = tolerance;

  for (auto& [name, tensor] : bind) {
    if (!tensor.requires_grad) continue;
    const auto& agrad = analytic.at(name);
    GradCheckEntry entry{name, 0.0, 0};

    std::vector<int64_t> indices;
    const int64_t n = tensor.size();
    if (n <= max_entries) {
      indices.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) indices[static_cast<size_t>(i)] = i;
    } else {
      Rng rng(derive_seed(subsample_seed, name));
      indices.resize(static_cast<size_t>(max_entries));
      for (auto& idx : indices) idx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
    }

    for (int64_t idx : indices) {
      const size_t i = static_cast<size_t>(idx);
      const double saved = tensor[i];
      tensor[i] = saved + h;
      eval_graph(g, bind, ws);
      const double fp = ws.val[static_cast<size_t>(seed_node)][0];
      tensor[i] = saved - h;
      eval_graph(g, bind, ws);
      const double fm = ws.val[static_cast<size_t>(seed_node)][0];
      tensor[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      entry.max_rel_err = std::max(entry.max_rel_err, rel_err(agrad[i], numeric));
      ++entry.entries_checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace mtlab
