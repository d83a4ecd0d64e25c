#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mtlab/rng.hpp"
#include "mtlab/tensor.hpp"

using namespace mtlab;
namespace fs = std::filesystem;

TEST_CASE("tensor shape/data invariants") {
  Tensor<float> t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 6.0f);
  CHECK_THROWS_AS(Tensor<float>({2, 3}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>({0, 3}), std::invalid_argument);
  CHECK(Tensor<double>::zeros({4}).all_finite());
}

TEST_CASE("tns1 round trip preserves f32 payload exactly") {
  const fs::path dir = fs::temp_directory_path() / "mtlab_tns_test";
  fs::create_directories(dir);
  Rng rng(11);
  std::vector<float> data(24);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  Tensor<float> t({2, 3, 4}, data);
  save_tns(dir / "a.tns", t);
  const auto back = load_tns<float>(dir / "a.tns");
  REQUIRE(back.shape() == t.shape());
  for (size_t i = 0; i < data.size(); ++i) CHECK(back[i] == data[i]);

  // double tensors are stored as f32 and load back as the cast values
  Tensor<double> d({3}, {0.25, -1.5, 9.0});
  save_tns(dir / "d.tns", d);
  const auto dd = load_tns<double>(dir / "d.tns");
  CHECK(dd[1] == -1.5);
  fs::remove_all(dir);
}

TEST_CASE("tns1 rejects corrupt files naming the path") {
  const fs::path dir = fs::temp_directory_path() / "mtlab_tns_bad";
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "bad_magic.tns", std::ios::binary);
    f << "NOPE1234";
  }
  CHECK_THROWS_WITH(load_tns<float>(dir / "bad_magic.tns"), Catch::Matchers::ContainsSubstring("bad_magic.tns"));

  save_tns(dir / "trunc.tns", Tensor<float>({4, 4}));
  fs::resize_file(dir / "trunc.tns", 20);
  CHECK_THROWS_WITH(load_tns<float>(dir / "trunc.tns"), Catch::Matchers::ContainsSubstring("trunc.tns"));
  CHECK_THROWS_AS(load_tns<float>(dir / "missing.tns"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("rng streams are deterministic and label-derived") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(a.uniform() != c.uniform());
  CHECK(derive_seed(7, "enc/stem") != derive_seed(7, "enc/stem2"));
  CHECK(derive_seed(7, "x") == derive_seed(7, "x"));

  std::vector<int> v(10);
  for (int i = 0; i < 10; ++i) v[static_cast<size_t>(i)] = i;
  Rng s(5);
  s.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
}
