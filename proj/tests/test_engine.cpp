#include <catch2/catch_amalgamated.hpp>

#include "mtlab/engine.hpp"
#include "mtlab/gradcheck.hpp"
#include "mtlab/graph.hpp"
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

TEST_CASE("identity graph returns its input") {
  GraphBuilder b;
  const int x = b.leaf("x", {2, 2});
  b.mark_output("y", b.identity(x));
  const Graph g = b.build();
  Bindings<double> bind{{"x", Tensor<double>({2, 2}, {1, 2, 3, 4})}};
  const auto out = eval_outputs(g, bind);
  CHECK(out.at("y").data() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("add of x and negate(x) cancels to zeros") {
  GraphBuilder b;
  const int x = b.leaf("x", {3, 4});
  b.mark_output("y", b.add(x, b.neg(x)));
  const Graph g = b.build();
  Rng rng(3);
  Bindings<double> bind{{"x", random_tensor<double>({3, 4}, rng)}};
  const auto out = eval_outputs(g, bind);
  for (double v : out.at("y").data()) CHECK(v == 0.0);
}

TEST_CASE("eval is referentially transparent") {
  GraphBuilder b;
  const int x = b.leaf("x", {2, 6, 6});
  const int k = b.leaf("k", {3, 2, 3, 3});
  const int bias = b.leaf("b", {3});
  b.mark_output("y", b.tanh(b.conv2d(x, k, bias, 1, 1)));
  const Graph g = b.build();
  Rng rng(9);
  Bindings<float> bind{{"x", random_tensor<float>({2, 6, 6}, rng)},
                       {"k", random_tensor<float>({3, 2, 3, 3}, rng)},
                       {"b", random_tensor<float>({3}, rng)}};
  const auto a = eval_outputs(g, bind).at("y");
  const auto c = eval_outputs(g, bind).at("y");
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a[static_cast<size_t>(i)] == c[static_cast<size_t>(i)]);
}

TEST_CASE("random composite graphs match the hand-stepped interpreter") {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(derive_seed(100, seed));
    GraphBuilder b;
    const Shape shape{2, 4, 4};
    std::vector<int> pool;
    pool.push_back(b.leaf("x", shape));
    pool.push_back(b.leaf("y", shape));
    for (int step = 0; step < 5; ++step) {
      const int a = pool[static_cast<size_t>(rng.below(pool.size()))];
      const int c = pool[static_cast<size_t>(rng.below(pool.size()))];
      int made = 0;
      switch (rng.below(8)) {
        case 0: made = b.add(a, c); break;
        case 1: made = b.sub(a, c); break;
        case 2: made = b.mul(a, c); break;
        case 3: made = b.relu(a); break;
        case 4: made = b.sigmoid(a); break;
        case 5: made = b.tanh(a); break;
        case 6: made = b.scalar_mul(a, rng.uniform(-2, 2)); break;
        case 7: made = b.softmax_channels(a); break;
      }
      pool.push_back(made);
    }
    b.mark_output("out", pool.back());
    const Graph g = b.build();
    Bindings<double> bind{{"x", random_tensor<double>(shape, rng)},
                          {"y", random_tensor<double>(shape, rng)}};
    Workspace<double> ws;
    eval_graph(g, bind, ws);
    const auto ref = oracle::interpret(g, {bind.begin(), bind.end()});
    for (size_t i = 0; i < g.nodes.size(); ++i) {
      for (int64_t j = 0; j < ref[i].size(); ++j)
        REQUIRE_THAT(ws.val[i][static_cast<size_t>(j)],
                     Catch::Matchers::WithinAbs(ref[i][static_cast<size_t>(j)], 1e-12));
    }
  }
}

TEST_CASE("eval failures name the offending node") {
  GraphBuilder b;
  const int x = b.leaf("x", {2, 2});
  b.mark_output("y", b.identity(x));
  const Graph g = b.build();
  SECTION("missing binding") {
    CHECK_THROWS_WITH(eval_outputs(g, Bindings<double>{}), Catch::Matchers::ContainsSubstring("x"));
  }
  SECTION("shape mismatch") {
    Bindings<double> bind{{"x", Tensor<double>({3})}};
    CHECK_THROWS_WITH(eval_outputs(g, bind), Catch::Matchers::ContainsSubstring("[2,2]"));
  }
  SECTION("non-finite intermediate") {
    // log of softmax never misbehaves; drive sigmoid with inf input instead
    Bindings<double> bind{{"x", Tensor<double>({2, 2}, {1.0, std::numeric_limits<double>::infinity(), 0.0, 0.0})}};
    CHECK_THROWS_WITH(eval_outputs(g, bind), Catch::Matchers::ContainsSubstring("leaf"));
  }
}

TEST_CASE("backward of sum(x) is all ones") {
  GraphBuilder b;
  const int x = b.leaf("x", {3});
  b.mark_output("loss", b.sum_all(x));
  const Graph g = b.build();
  Bindings<double> bind{{"x", Tensor<double>({3}, {5, -2, 0.5})}};
  bind.at("x").requires_grad = true;
  Workspace<double> ws;
  eval_graph(g, bind, ws);
  const auto grads = backward(g, bind, ws, g.output("loss"));
  CHECK(grads.at("x").data() == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward of sum(x*x) is 2x") {
  GraphBuilder b;
  const int x = b.leaf("x", {3});
  b.mark_output("loss", b.sum_all(b.mul(x, x)));
  const Graph g = b.build();
  Bindings<double> bind{{"x", Tensor<double>({3}, {1, 2, 3})}};
  bind.at("x").requires_grad = true;
  Workspace<double> ws;
  eval_graph(g, bind, ws);
  const auto grads = backward(g, bind, ws, g.output("loss"));
  CHECK(grads.at("x").data() == std::vector<double>{2, 4, 6});
}

TEST_CASE("backward rejects non-scalar seeds and reports unreachable params as zeros") {
  GraphBuilder b;
  const int x = b.leaf("x", {2, 2});
  const int w = b.leaf("w", {2, 2});
  b.mark_output("mat", b.identity(x));
  b.mark_output("loss", b.sum_all(x));
  const Graph g = b.build();
  Bindings<double> bind{{"x", Tensor<double>({2, 2}, {1, 2, 3, 4})}, {"w", Tensor<double>({2, 2})}};
  bind.at("x").requires_grad = true;
  bind.at("w").requires_grad = true;
  Workspace<double> ws;
  eval_graph(g, bind, ws);
  CHECK_THROWS_WITH(backward(g, bind, ws, g.output("mat")), Catch::Matchers::ContainsSubstring("not scalar"));
  const auto grads = backward(g, bind, ws, g.output("loss"));
  CHECK(grads.at("w").data() == std::vector<double>{0, 0, 0, 0});  // unreachable => exact zeros
}

TEST_CASE("gradient accumulation sums per-site contributions") {
  Rng rng(17);
  const auto w = random_tensor<double>({4}, rng, -1, 1, true);
  const auto a = random_tensor<double>({4}, rng);
  const auto c = random_tensor<double>({4}, rng);

  auto one_site = [&](const Tensor<double>& other) {
    GraphBuilder b;
    const int wl = b.leaf("w", {4});
    const int ol = b.leaf("o", {4});
    b.mark_output("loss", b.sum_all(b.mul(wl, b.sigmoid(ol))));
    const Graph g = b.build();
    Bindings<double> bind{{"w", w}, {"o", other}};
    Workspace<double> ws;
    eval_graph(g, bind, ws);
    return backward(g, bind, ws, g.output("loss")).at("w");
  };

  GraphBuilder b;
  const int wl = b.leaf("w", {4});
  const int al = b.leaf("a", {4});
  const int cl = b.leaf("c", {4});
  b.mark_output("loss", b.add(b.sum_all(b.mul(wl, b.sigmoid(al))), b.sum_all(b.mul(wl, b.sigmoid(cl)))));
  const Graph g = b.build();
  Bindings<double> bind{{"w", w}, {"a", a}, {"c", c}};
  Workspace<double> ws;
  eval_graph(g, bind, ws);
  const auto both = backward(g, bind, ws, g.output("loss")).at("w");
  const auto ga = one_site(a);
  const auto gc = one_site(c);
  for (size_t i = 0; i < 4; ++i)
    CHECK_THAT(both[i], Catch::Matchers::WithinAbs(ga[i] + gc[i], 1e-14));
}

TEST_CASE("grad_check passes on a linear graph with tiny error") {
  GraphBuilder b;
  const int x = b.leaf("x", {5});
  b.mark_output("loss", b.sum_all(b.scalar_mul(x, 3.0)));
  const Graph g = b.build();
  Rng rng(23);
  Bindings<double> bind{{"x", random_tensor<double>({5}, rng, -1, 1, true)}};
  const auto report = grad_check(g, bind, "loss", 1e-4);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-10);
}

TEST_CASE("grad_check passes for relu bounded away from the kink") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(31, seed));
    Tensor<double> x({3, 4, 4});
    for (int64_t i = 0; i < x.size(); ++i) {
      double v = rng.uniform(-1, 1);
      if (std::abs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
      x[static_cast<size_t>(i)] = v;
    }
    x.requires_grad = true;
    GraphBuilder b;
    const int xl = b.leaf("x", {3, 4, 4});
    b.mark_output("loss", b.mean_all(b.relu(xl)));
    const Graph g = b.build();
    const auto report = grad_check(g, {{"x", x}}, "loss", 1e-4);
    CHECK(report.pass);
  }
}

TEST_CASE("a gradient off by 2x is caught at tolerance 1e-4") {
  GraphBuilder b;
  const int x = b.leaf("x", {4});
  b.mark_output("loss", b.sum_all(b.tanh(x)));
  const Graph g = b.build();
  Rng rng(41);
  Bindings<double> bind{{"x", random_tensor<double>({4}, rng, -1, 1, true)}};

  Workspace<double> ws;
  eval_graph(g, bind, ws);
  auto planted = backward(g, bind, ws, g.output("loss")).at("x");
  for (auto& v : planted.data()) v *= 2.0;  // the planted bug

  double max_err = 0.0;
  auto& xt = bind.at("x");
  const double h = 1e-5;
  for (size_t i = 0; i < 4; ++i) {
    const double saved = xt[i];
    xt[i] = saved + h;
    eval_graph(g, bind, ws);
    const double fp = ws.val[static_cast<size_t>(g.output("loss"))][0];
    xt[i] = saved - h;
    eval_graph(g, bind, ws);
    const double fm = ws.val[static_cast<size_t>(g.output("loss"))][0];
    xt[i] = saved;
    max_err = std::max(max_err, rel_err(planted[i], (fp - fm) / (2 * h)));
  }
  CHECK(max_err > 1e-4);  // harness would reject the planted bug
  CHECK(grad_check(g, bind, "loss", 1e-4).pass);  // and accepts the real rule
}

TEST_CASE("random composite graphs pass finite-difference checks") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(57, seed));
    GraphBuilder b;
    const Shape shape{2, 4, 4};
    const int x = b.leaf("x", shape);
    const int w = b.leaf("w", shape);
    const int h1 = b.mul(b.sigmoid(x), w);
    const int h2 = b.tanh(b.add(h1, b.scalar_mul(x, 0.5)));
    b.mark_output("loss", b.mean_all(b.mul(h2, h2)));
    const Graph g = b.build();
    Bindings<double> bind{{"x", random_tensor<double>(shape, rng, -1.5, 1.5, true)},
                          {"w", random_tensor<double>(shape, rng, -1.5, 1.5, true)}};
    const auto report = grad_check(g, bind, "loss", 1e-4);
    CHECK(report.pass);
  }
}
