#include "doctest.h"

#include "cpgan/graph.hpp"
#include "cpgan/ops.hpp"
#include "cpgan/parallel.hpp"
#include "cpgan/random.hpp"
#include "cpgan/tensor.hpp"

using namespace cpgan;

TEST_CASE("tensor shape and data invariants") {
  auto t = Tensor<double>::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(shape_numel(t.shape()) == (index_t)t.values().size());

  CHECK_THROWS(Tensor<double>::zeros({2, 0}));
  CHECK_THROWS(Tensor<double>::zeros({-1, 3}));
  CHECK_THROWS(Tensor<double>::from_data({2, 2}, {1.0, 2.0, 3.0}));

  CHECK(t.grad().empty());
  t.set_requires_grad(true);
  CHECK(t.grad().size() == 6);
  t.set_requires_grad(false);
  CHECK(t.grad().empty());
}

TEST_CASE("tensor handles share storage") {
  auto a = Tensor<double>::full({2, 2}, 1.5);
  Tensor<double> b = a;
  b.data()[0] = 9.0;
  CHECK(a.data()[0] == 9.0);
  CHECK(a.same_storage(b));
}

TEST_CASE("scalar item and shape checks") {
  auto s = Tensor<double>::scalar(4.25);
  CHECK(s.item() == 4.25);
  auto m = Tensor<double>::zeros({2, 2});
  CHECK_THROWS(m.item());
}

TEST_CASE("rng state round-trip reproduces the stream") {
  Rng rng(77);
  for (int i = 0; i < 5; ++i) rng.next_u64();
  auto st = rng.state();
  std::vector<double> first;
  for (int i = 0; i < 20; ++i) first.push_back(rng.normal());
  rng.set_state(st);
  for (int i = 0; i < 20; ++i) CHECK(rng.normal() == first[(size_t)i]);
}

TEST_CASE("rng streams differ by tag but reproduce by tag") {
  Rng a = Rng::stream(123, "noise");
  Rng b = Rng::stream(123, "data");
  Rng a2 = Rng::stream(123, "noise");
  CHECK(a.next_u64() != b.next_u64());
  Rng a3 = Rng::stream(123, "noise");
  CHECK(a3.next_u64() == a2.next_u64());
}

TEST_CASE("uniform_int is in range and truncated_normal respects threshold") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    auto v = rng.uniform_int(7);
    CHECK(v >= 0);
    CHECK(v < 7);
  }
  for (int i = 0; i < 1000; ++i)
    CHECK(std::abs(rng.truncated_normal(2.0)) <= 2.0);
}

TEST_CASE("graph clear zeroes gradients but not values") {
  auto x = Tensor<double>::full({2}, 3.0);
  x.set_requires_grad(true);
  Graph<double> tape;
  {
    Graph<double>::Scope scope(tape);
    auto y = ops::sum_all(ops::mul(x, x));
    tape.backward(y);
  }
  CHECK(x.grad()[0] == 6.0);
  CHECK(x.grad()[1] == 6.0);
  tape.clear();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.data()[0] == 3.0);
}

TEST_CASE("gradient accumulates when a tensor is used twice") {
  // z = x*x + x at x = 3 gives dz/dx = 7.
  auto x = Tensor<double>::full({1}, 3.0);
  x.set_requires_grad(true);
  Graph<double> tape;
  Graph<double>::Scope scope(tape);
  auto z = ops::sum_all(ops::add(ops::mul(x, x), x));
  tape.backward(z);
  CHECK(z.item() == 12.0);
  CHECK(x.grad()[0] == 7.0);
}

TEST_CASE("no tape means no gradient tracking") {
  auto x = Tensor<double>::full({2}, 1.0);
  x.set_requires_grad(true);
  auto y = ops::mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("ops refuse tensors with mismatched shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 3});
  CHECK_THROWS(ops::add(a, b));
  CHECK_THROWS(ops::matmul(a, a));
  CHECK_THROWS(ops::softmax(a, 2));
}

TEST_CASE("seeded replay is bitwise identical, independent of thread count") {
  auto run = [](int threads) {
    set_num_threads(threads);
    Rng rng(2024);
    auto x = Tensor<double>::randn({2, 3, 6, 6}, rng);
    auto w = Tensor<double>::randn({4, 3, 3, 3}, rng);
    auto b = Tensor<double>::randn({4}, rng);
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    Graph<double> tape;
    Graph<double>::Scope scope(tape);
    auto y = ops::conv2d(x, w, b, 1, 1);
    auto up = ops::upsample_nearest2x(y);
    auto loss = ops::mean_all(ops::tanh(up));
    tape.backward(loss);
    std::vector<double> out;
    out.push_back(loss.item());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    set_num_threads(1);
    return out;
  };
  auto r1 = run(1);
  auto r2 = run(1);
  auto r4 = run(4);
  CHECK(r1 == r2);
  CHECK(r1 == r4);
}

TEST_CASE("parallel_for covers every index exactly once") {
  set_num_threads(4);
  std::vector<int> hits(1000, 0);
  parallel_for(1000, [&](index_t a, index_t b) {
    for (index_t i = a; i < b; ++i) hits[(size_t)i]++;
  });
  set_num_threads(1);
  for (int h : hits) CHECK(h == 1);
}
