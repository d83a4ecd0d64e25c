#include <catch2/catch_amalgamated.hpp>

#include "mtlab/engine.hpp"
#include "mtlab/gradcheck.hpp"
#include "mtlab/losses.hpp"
#include "mtlab/rng.hpp"
#include "support/oracles.hpp"

using namespace mtlab;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[static_cast<size_t>(i)] = static_cast<T>(rng.uniform(lo, hi));
  t.requires_grad = requires_grad;
  return t;
}

}  // namespace

TEST_CASE("seg cross entropy closed forms") {
  // uniform logits over 3 classes -> ln 3
  Tensor<double> logits({3, 2, 2});
  Tensor<double> target({2, 2}, {0, 1, 2, 0});
  const auto l = seg_cross_entropy(logits, target);
  CHECK_THAT(l.value, Catch::Matchers::WithinAbs(std::log(3.0), 1e-12));

  // one-hot-correct logits with growing margin drive the loss to 0
  double prev = 1e9;
  for (double margin : {2.0, 5.0, 10.0}) {
    Tensor<double> lg({3, 2, 2});
    for (int64_t y = 0; y < 2; ++y)
      for (int64_t x = 0; x < 2; ++x)
        lg.at(static_cast<int64_t>(std::llround(target.at(y, x))), y, x) = margin;
    const double v = seg_cross_entropy(lg, target).value;
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-4);

  // out-of-range id fails
  Tensor<double> bad({2, 2}, {0, 3, 0, 0});
  CHECK_THROWS_WITH(seg_cross_entropy(logits, bad), Catch::Matchers::ContainsSubstring("out of range"));
}

TEST_CASE("seg cross entropy matches the per-pixel formula oracle") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(700, seed));
    const auto logits = random_tensor<double>({4, 5, 5}, rng, -3, 3);
    Tensor<double> target({5, 5});
    for (int64_t i = 0; i < 25; ++i)
      target[static_cast<size_t>(i)] = static_cast<double>(rng.below(5));  // id 4 = ignore
    const auto got = seg_cross_entropy(logits, target, /*ignore_id=*/4);
    const double want = oracle::cross_entropy(logits, target, 4);
    CHECK_THAT(got.value, Catch::Matchers::WithinAbs(want, 1e-10));
  }
}

TEST_CASE("ignored pixels contribute nothing to value or gradient") {
  Rng rng(3);
  const auto logits = random_tensor<double>({3, 4, 4}, rng, -2, 2, true);
  Tensor<double> target({4, 4});
  for (int64_t i = 0; i < 16; ++i) target[static_cast<size_t>(i)] = static_cast<double>(rng.below(3));
  target[0] = 9;  // ignore id

  GraphBuilder b;
  const int lg = b.leaf("logits", {3, 4, 4});
  const int tg = b.leaf("target", {4, 4});
  b.mark_output("loss", b.softmax_cross_entropy(lg, tg, 9));
  const Graph g = b.build();
  Bindings<double> bind{{"logits", logits}, {"target", target}};
  Workspace<double> ws;
  eval_graph(g, bind, ws);
  const auto grads = backward(g, bind, ws, g.output("loss"));
  // gradient at the ignored pixel (flat index 0 of each channel plane) is 0
  for (int64_t c = 0; c < 3; ++c) CHECK(grads.at("logits")[static_cast<size_t>(c * 16)] == 0.0);
}

TEST_CASE("huber loss branches and continuity") {
  const double delta = 1.0;
  Tensor<double> target({1, 1, 1}, {0.0});
  auto loss_for = [&](double e) {
    Tensor<double> pred({1, 1, 1}, {e});
    return huber_depth_loss(pred, target, delta).value;
  };
  CHECK_THAT(loss_for(0.5), Catch::Matchers::WithinAbs(0.125, 1e-15));  // quadratic branch
  CHECK_THAT(loss_for(2.0), Catch::Matchers::WithinAbs(1.5, 1e-15));    // linear branch
  CHECK_THAT(loss_for(1.0), Catch::Matchers::WithinAbs(0.5, 1e-15));    // both branches at e = delta
}

TEST_CASE("detection loss is zero on its own encoding and on confident empty scenes") {
  const int64_t grid = 4, classes = 2;
  LossConfig cfg;
  std::vector<Box> boxes{{0, 0.30, 0.55, 0.25, 0.30, 1.0}, {1, 0.80, 0.20, 0.10, 0.40, 1.0}};
  const auto target = encode_det_targets<double>(boxes, grid, classes);
  CHECK(det_loss(target, target, cfg).value == 0.0);

  const Tensor<double> empty({5 + classes, grid, grid});
  CHECK(det_loss(empty, empty, cfg).value == 0.0);  // no positive or negative error
}

TEST_CASE("detection loss matches a term-by-term oracle sum") {
  const int64_t grid = 2, classes = 2;
  LossConfig cfg;  // lambda_coord 5, lambda_noobj 0.5
  // one object cell at (r=1, c=0) with hand-filled numbers
  std::vector<Box> boxes{{1, 0.2, 0.9, 0.25, 0.16, 1.0}};
  const auto target = encode_det_targets<double>(boxes, grid, classes);
  Tensor<double> pred = target;
  pred.at(0, 1, 0) = 0.8;   // objectness error 0.2
  pred.at(1, 1, 0) += 0.1;  // tx error
  pred.at(3, 1, 0) -= 0.2;  // tw error
  pred.at(5, 1, 0) = 0.3;   // class 0 error (target 0)
  pred.at(6, 1, 0) = 0.7;   // class 1 error (target 1)
  pred.at(0, 0, 1) = 0.4;   // false objectness on an empty cell

  // spreadsheet-style sum of every term
  const double want = 1.0 * (0.2 * 0.2)                      // object cell objectness
                      + 5.0 * (0.1 * 0.1) + 5.0 * (0.2 * 0.2)  // coord terms
                      + (0.3 * 0.3) + (0.3 * 0.3)            // class terms
                      + 0.5 * (0.4 * 0.4);                   // noobj objectness
  CHECK_THAT(det_loss(pred, target, cfg).value, Catch::Matchers::WithinAbs(want, 1e-10));
}

TEST_CASE("graph-side detection loss agrees with the value function and passes grad_check") {
  const int64_t grid = 3, classes = 3;
  LossConfig cfg;
  Rng rng(45);
  std::vector<Box> boxes{{0, 0.40, 0.40, 0.30, 0.30, 1.0}, {2, 0.85, 0.80, 0.20, 0.25, 1.0}};

  GraphBuilder b;
  const int raw = b.leaf("raw", {5 + classes, grid, grid});
  const auto targets = declare_det_targets(b, "det", grid, classes);
  b.mark_output("loss", det_loss_node(b, raw, targets, classes, cfg));
  const Graph g = b.build();

  Bindings<double> bind;
  bind.emplace("raw", random_tensor<double>({5 + classes, grid, grid}, rng, -1.5, 1.5, true));
  bind_det_targets(bind, "det", boxes, grid, classes, cfg);

  Workspace<double> ws;
  eval_graph(g, bind, ws);
  const double graph_value = ws.val[static_cast<size_t>(g.output("loss"))][0];
  const auto activated = activate_det_grid(bind.at("raw"));
  const double fn_value = det_loss(activated, encode_det_targets<double>(boxes, grid, classes), cfg).value;
  CHECK_THAT(graph_value, Catch::Matchers::WithinAbs(fn_value, 1e-10));

  CHECK(grad_check(g, bind, "loss", 1e-4).pass);
}

TEST_CASE("combine_weighted_sum arithmetic and gradient") {
  std::vector<TaskLoss> losses{{"seg", 2.0, 8}, {"det", 3.0, 8}};
  CHECK(combine_weighted_sum(losses, {{"seg", 1.0}, {"det", 1.0}}) == 5.0);
  CHECK(combine_weighted_sum({{"seg", 0.5, 4}, {"det", 2.0, 4}}, {{"seg", 100.0}, {"det", 1.0}}) == 52.0);
  CHECK_THROWS_WITH(combine_weighted_sum(losses, {{"seg", 1.0}}),
                    Catch::Matchers::ContainsSubstring("det"));

  // absent task (sample_count 0) is dropped
  CHECK(combine_weighted_sum({{"seg", 2.0, 8}, {"det", 3.0, 0}}, {{"seg", 2.0}, {"det", 1.0}}) == 4.0);

  // graph node: dL/dLi == wi exactly
  GraphBuilder b;
  const int l1 = b.leaf("l1", {1});
  const int l2 = b.leaf("l2", {1});
  b.mark_output("total", b.weighted_sum({l1, l2}, {3.5, 0.25}));
  const Graph g = b.build();
  Bindings<double> bind{{"l1", Tensor<double>::scalar(2.0)}, {"l2", Tensor<double>::scalar(7.0)}};
  bind.at("l1").requires_grad = true;
  bind.at("l2").requires_grad = true;
  Workspace<double> ws;
  eval_graph(g, bind, ws);
  const auto grads = backward(g, bind, ws, g.output("total"));
  CHECK(grads.at("l1")[0] == 3.5);
  CHECK(grads.at("l2")[0] == 0.25);
}

TEST_CASE("weighted sum with unit weights equals the plain sum") {
  Rng rng(8);
  std::vector<TaskLoss> losses;
  std::map<std::string, double> unit;
  double plain = 0;
  for (int i = 0; i < 5; ++i) {
    const double v = rng.uniform(0, 3);
    losses.push_back({"t" + std::to_string(i), v, 1});
    unit["t" + std::to_string(i)] = 1.0;
    plain += v;
  }
  CHECK_THAT(combine_weighted_sum(losses, unit), Catch::Matchers::WithinAbs(plain, 1e-12));
}

TEST_CASE("geometric mean closed forms and homogeneity") {
  CHECK_THAT(combine_geometric_mean({{"a", 1, 1}, {"b", 1, 1}, {"c", 1, 1}}),
             Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(combine_geometric_mean({{"a", 8, 1}, {"b", 1, 1}, {"c", 1, 1}}),
             Catch::Matchers::WithinAbs(2.0, 1e-12));

  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TaskLoss> l{{"a", rng.uniform(0.1, 5), 1}, {"b", rng.uniform(0.1, 5), 1},
                            {"c", rng.uniform(0.1, 5), 1}};
    const double base = combine_geometric_mean(l);
    // permutation invariance
    std::vector<TaskLoss> p{l[2], l[0], l[1]};
    CHECK_THAT(combine_geometric_mean(p), Catch::Matchers::WithinAbs(base, 1e-12));
    // 1-homogeneity
    const double c = rng.uniform(0.5, 4);
    std::vector<TaskLoss> scaled = l;
    for (auto& t : scaled) t.value *= c;
    CHECK_THAT(combine_geometric_mean(scaled), Catch::Matchers::WithinAbs(c * base, 1e-10));
  }

  // zeros survive through the eps clamp
  CHECK(std::isfinite(combine_geometric_mean({{"a", 0.0, 1}, {"b", 2.0, 1}})));
}

TEST_CASE("geometric mean gradient identity dL/dLi == L/(N Li)") {
  for (int n : {2, 3}) {
    Rng rng(derive_seed(900, static_cast<uint64_t>(n)));
    GraphBuilder b;
    std::vector<int> nodes;
    Bindings<double> bind;
    for (int i = 0; i < n; ++i) {
      const std::string name = "l" + std::to_string(i);
      nodes.push_back(b.leaf(name, {1}));
      auto t = Tensor<double>::scalar(rng.uniform(0.05, 4.0));
      t.requires_grad = true;
      bind.emplace(name, t);
    }
    b.mark_output("total", b.geometric_mean(nodes, 1e-8));
    const Graph g = b.build();
    Workspace<double> ws;
    eval_graph(g, bind, ws);
    const double total = ws.val[static_cast<size_t>(g.output("total"))][0];
    const auto grads = backward(g, bind, ws, g.output("total"));
    for (int i = 0; i < n; ++i) {
      const std::string name = "l" + std::to_string(i);
      const double li = bind.at(name)[0];
      const double want = total / (static_cast<double>(n) * li);
      CHECK(rel_err(grads.at(name)[0], want) < 1e-12);
    }
    // and against finite differences at 1e-6 relative
    const auto report = grad_check(g, bind, "total", 1e-6);
    CHECK(report.pass);
  }
}

TEST_CASE("mask_task_losses averages over labeled samples only") {
  // all labels present: identical to the unmasked mean
  std::vector<SampleLosses> full{{{"seg", 1.0}, {"det", 2.0}}, {{"seg", 3.0}, {"det", 4.0}}};
  auto masked = mask_task_losses(full);
  REQUIRE(masked.size() == 2);
  for (const auto& t : masked) {
    if (t.task == "seg") {
      CHECK(t.value == 2.0);
      CHECK(t.sample_count == 2);
    } else {
      CHECK(t.value == 3.0);
    }
  }

  // detection absent in the whole batch: dropped with sample_count 0
  std::vector<SampleLosses> nodet{{{"seg", 1.0}, {"det", std::nullopt}},
                                  {{"seg", 3.0}, {"det", std::nullopt}}};
  masked = mask_task_losses(nodet);
  for (const auto& t : masked)
    if (t.task == "det") CHECK(t.sample_count == 0);

  // all tasks absent: batch skipped
  std::vector<SampleLosses> none{{{"seg", std::nullopt}}, {{"seg", std::nullopt}}};
  CHECK(mask_task_losses(none).empty());
}

TEST_CASE("half-labeled batch equals the labeled half computed separately") {
  Rng rng(31);
  std::vector<SampleLosses> batch;
  std::vector<SampleLosses> labeled_half;
  for (int i = 0; i < 8; ++i) {
    SampleLosses s;
    s["seg"] = rng.uniform(0, 2);
    if (i < 4) {
      s["det"] = rng.uniform(0, 2);
      labeled_half.push_back({{"det", s["det"]}});
    } else {
      s["det"] = std::nullopt;
    }
    batch.push_back(s);
  }
  const auto whole = mask_task_losses(batch);
  const auto half = mask_task_losses(labeled_half);
  double whole_det = -1, half_det = -2;
  for (const auto& t : whole)
    if (t.task == "det") whole_det = t.value;
  for (const auto& t : half)
    if (t.task == "det") half_det = t.value;
  CHECK_THAT(whole_det, Catch::Matchers::WithinAbs(half_det, 1e-8));
}

TEST_CASE("loss ops pass grad_check at 1e-4") {
  Rng rng(73);
  SECTION("cross entropy") {
    GraphBuilder b;
    const int lg = b.leaf("logits", {3, 4, 4});
    const int tg = b.leaf("target", {4, 4});
    b.mark_output("loss", b.softmax_cross_entropy(lg, tg, -1));
    const Graph g = b.build();
    Tensor<double> target({4, 4});
    for (int64_t i = 0; i < 16; ++i) target[static_cast<size_t>(i)] = static_cast<double>(rng.below(3));
    Bindings<double> bind{{"logits", random_tensor<double>({3, 4, 4}, rng, -2, 2, true)},
                          {"target", target}};
    CHECK(grad_check(g, bind, "loss", 1e-4).pass);
  }
  SECTION("huber away from the corner") {
    GraphBuilder b;
    b.mark_output("loss", b.huber_mean(b.leaf("pred", {1, 4, 4}), b.leaf("target", {1, 4, 4}), 1.0));
    const Graph g = b.build();
    // keep |pred - target| away from delta so central differences stay valid
    Tensor<double> pred({1, 4, 4}), target({1, 4, 4});
    for (int64_t i = 0; i < 16; ++i) {
      target[static_cast<size_t>(i)] = rng.uniform(0, 1);
      double e = rng.uniform(-2, 2);
      if (std::abs(std::abs(e) - 1.0) < 5e-2) e = e > 0 ? e + 0.1 : e - 0.1;
      pred[static_cast<size_t>(i)] = target[static_cast<size_t>(i)] + e;
    }
    pred.requires_grad = true;
    CHECK(grad_check(g, {{"pred", pred}, {"target", target}}, "loss", 1e-4).pass);
  }
}

TEST_CASE("scalarization strategy parses from the experiment config keys") {
  const auto ws = strategy_from_json(nlohmann::json{{"strategy", "weighted_sum"},
                                                    {"weights", {{"seg", 10.0}, {"det", 1.0}}}});
  CHECK(ws.kind == Strategy::WeightedSum);
  CHECK(ws.weights.at("seg") == 10.0);
  const auto gm = strategy_from_json(nlohmann::json{{"strategy", "geometric_mean"}});
  CHECK(gm.kind == Strategy::GeometricMean);
  CHECK_THROWS_AS(strategy_from_json(nlohmann::json{{"strategy", "nope"}}), std::invalid_argument);
}
