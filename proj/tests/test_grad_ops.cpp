#include "doctest.h"

#include <cmath>
#include <vector>

#include "cpgan/grad_check.hpp"
#include "cpgan/ops.hpp"
#include "cpgan/random.hpp"

using namespace cpgan;

namespace {

constexpr double kH = 1e-4;
constexpr double kTol = 1e-5;
constexpr int kInstances = 100;

Tensor<double> rand_t(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<double>::zeros(std::move(s));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Entries with magnitude in [0.1+margin, 2]: keeps relu kinks, log domain
// and row norms away from the finite-difference step.
Tensor<double> rand_away_from_zero(Shape s, Rng& rng, double margin = 0.2) {
  auto t = Tensor<double>::zeros(std::move(s));
  for (auto& v : t.values()) {
    double mag = margin + rng.uniform(0.0, 2.0 - margin);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

index_t dim(Rng& rng, index_t hi) { return 1 + rng.uniform_int(hi); }

// Reduces an op output to a scalar against a fixed random projection so
// every output element gets a distinct cotangent.
Tensor<double> project(const Tensor<double>& out, const Tensor<double>& proj) {
  return ops::sum_all(ops::mul(out, proj));
}

void expect_pass(const GradCheckReport<double>& rep, int instance) {
  CAPTURE(instance);
  CAPTURE(rep.detail);
  CHECK(rep.pass);
}

}  // namespace

TEST_CASE("grad: matmul") {
  Rng rng(101);
  for (int it = 0; it < kInstances; ++it) {
    index_t m = dim(rng, 4), k = dim(rng, 4), n = dim(rng, 4);
    auto a = rand_t({m, k}, rng);
    auto b = rand_t({k, n}, rng);
    auto proj = rand_t({m, n}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::matmul(a, b), proj); }, {a, b}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: transpose and reshape") {
  Rng rng(102);
  for (int it = 0; it < kInstances; ++it) {
    index_t m = dim(rng, 4), n = dim(rng, 4);
    auto a = rand_t({m, n}, rng);
    auto pt = rand_t({n, m}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::transpose(a), pt); }, {a}, kH, kTol);
    expect_pass(rep, it);

    auto pr = rand_t({m * n}, rng);
    rep = grad_check<double>(
        [&] { return project(ops::reshape(a, {m * n}), pr); }, {a}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: concat and slice_axis") {
  Rng rng(103);
  for (int it = 0; it < kInstances; ++it) {
    int axis = (int)rng.uniform_int(2);
    index_t m = dim(rng, 3), n = dim(rng, 3);
    Shape sa = {m, n}, sb = {m, n};
    Shape& vary = sa;
    (void)vary;
    index_t extra = dim(rng, 3);
    if (axis == 0)
      sb[0] = extra;
    else
      sb[1] = extra;
    auto a = rand_t(sa, rng);
    auto b = rand_t(sb, rng);
    Shape so = sa;
    so[(size_t)axis] += sb[(size_t)axis];
    auto proj = rand_t(so, rng);
    auto rep = grad_check<double>(
        [&] {
          return project(ops::concat(axis, std::vector<Tensor<double>>{a, b}),
                         proj);
        },
        {a, b}, kH, kTol);
    expect_pass(rep, it);

    index_t full = so[(size_t)axis];
    index_t start = rng.uniform_int(full);
    index_t len = 1 + rng.uniform_int(full - start);
    Shape ss = so;
    ss[(size_t)axis] = len;
    auto c = rand_t(so, rng);
    auto projs = rand_t(ss, rng);
    rep = grad_check<double>(
        [&] { return project(ops::slice_axis(c, axis, start, len), projs); },
        {c}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: elementwise add sub mul") {
  Rng rng(104);
  for (int it = 0; it < kInstances; ++it) {
    index_t m = dim(rng, 4), n = dim(rng, 4);
    auto a = rand_t({m, n}, rng);
    auto b = rand_t({m, n}, rng);
    auto proj = rand_t({m, n}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::add(a, b), proj); }, {a, b}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::sub(a, b), proj); }, {a, b}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::mul(a, b), proj); }, {a, b}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: scalar ops") {
  Rng rng(105);
  for (int it = 0; it < kInstances; ++it) {
    index_t n = dim(rng, 6);
    auto a = rand_t({n}, rng);
    auto proj = rand_t({n}, rng);
    double c = rng.uniform(-2, 2);
    auto rep = grad_check<double>(
        [&] { return project(ops::add_scalar(a, c), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::mul_scalar(a, c), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: exp log tanh sigmoid") {
  Rng rng(106);
  for (int it = 0; it < kInstances; ++it) {
    index_t n = dim(rng, 6);
    auto a = rand_t({n}, rng, -2, 2);
    auto pos = rand_t({n}, rng, 0.5, 3.0);
    auto proj = rand_t({n}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::exp(a), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::log(pos), proj); }, {pos}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::tanh(a), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::sigmoid(a), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: relu and leaky_relu away from the kink") {
  Rng rng(107);
  for (int it = 0; it < kInstances; ++it) {
    index_t n = dim(rng, 6);
    auto a = rand_away_from_zero({n}, rng);
    auto proj = rand_t({n}, rng);
    double slope = rng.uniform(0.05, 0.5);
    auto rep = grad_check<double>(
        [&] { return project(ops::relu(a), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::leaky_relu(a, slope), proj); }, {a}, kH,
        kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: softmax and log_softmax both axes") {
  Rng rng(108);
  for (int it = 0; it < kInstances; ++it) {
    index_t m = dim(rng, 4), n = dim(rng, 4);
    int axis = (int)rng.uniform_int(2);
    auto a = rand_t({m, n}, rng, -3, 3);
    auto proj = rand_t({m, n}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::softmax(a, axis), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::log_softmax(a, axis), proj); }, {a}, kH,
        kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: reductions") {
  Rng rng(109);
  for (int it = 0; it < kInstances; ++it) {
    index_t m = dim(rng, 4), n = dim(rng, 4);
    int axis = (int)rng.uniform_int(2);
    auto a = rand_t({m, n}, rng);
    auto rep = grad_check<double>([&] { return ops::sum_all(a); }, {a}, kH,
                                  kTol);
    expect_pass(rep, it);
    rep = grad_check<double>([&] { return ops::mean_all(a); }, {a}, kH, kTol);
    expect_pass(rep, it);
    Shape so = axis == 1 ? Shape{m, 1} : Shape{1, n};
    auto proj = rand_t(so, rng);
    rep = grad_check<double>(
        [&] { return project(ops::sum_axis(a, axis), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::mean_axis(a, axis), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: broadcast helpers and diag_sum") {
  Rng rng(110);
  for (int it = 0; it < kInstances; ++it) {
    index_t m = dim(rng, 4), n = dim(rng, 4);
    auto a = rand_t({m, n}, rng);
    auto bias = rand_t({m, 1}, rng);
    auto proj = rand_t({m, n}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::add_bias_cols(a, bias), proj); }, {a, bias},
        kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::repeat_cols(bias, n), proj); }, {bias}, kH,
        kTol);
    expect_pass(rep, it);
    auto sq = rand_t({n, n}, rng);
    rep = grad_check<double>([&] { return ops::diag_sum(sq); }, {sq}, kH,
                             kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: rows_l2norm and cosine_rows") {
  Rng rng(111);
  for (int it = 0; it < kInstances; ++it) {
    index_t m = dim(rng, 4), k = dim(rng, 4);
    auto a = rand_away_from_zero({m, k}, rng);
    auto b = rand_away_from_zero({m, k}, rng);
    auto proj = rand_t({m, 1}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::rows_l2norm(a), proj); }, {a}, kH, kTol);
    expect_pass(rep, it);
    rep = grad_check<double>(
        [&] { return project(ops::cosine_rows(a, b), proj); }, {a, b}, kH,
        kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: gather_rows with duplicate indices") {
  Rng rng(112);
  for (int it = 0; it < kInstances; ++it) {
    index_t v = 2 + rng.uniform_int(4), d = dim(rng, 4);
    index_t n = 1 + rng.uniform_int(6);
    auto table = rand_t({v, d}, rng);
    std::vector<index_t> idx;
    for (index_t i = 0; i < n; ++i) idx.push_back(rng.uniform_int(v));
    auto proj = rand_t({n, d}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::gather_rows(table, idx), proj); }, {table},
        kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: conv2d with stride, padding and bias") {
  Rng rng(113);
  for (int it = 0; it < kInstances; ++it) {
    index_t n = dim(rng, 2), cin = dim(rng, 2);
    index_t h = 3 + rng.uniform_int(3), w = 3 + rng.uniform_int(3);
    index_t o = dim(rng, 2);
    index_t k = rng.uniform_int(2) == 0 ? 1 : 3;
    index_t stride = 1 + rng.uniform_int(2);
    index_t pad = rng.uniform_int(2);
    auto x = rand_t({n, cin, h, w}, rng);
    auto wt = rand_t({o, cin, k, k}, rng);
    auto b = rand_t({o}, rng);
    index_t ho = (h + 2 * pad - k) / stride + 1;
    index_t wo = (w + 2 * pad - k) / stride + 1;
    auto proj = rand_t({n, o, ho, wo}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::conv2d(x, wt, b, stride, pad), proj); },
        {x, wt, b}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: conv2d without bias") {
  Rng rng(114);
  for (int it = 0; it < 20; ++it) {
    auto x = rand_t({1, 2, 4, 4}, rng);
    auto wt = rand_t({2, 2, 3, 3}, rng);
    auto proj = rand_t({1, 2, 4, 4}, rng);
    Tensor<double> nobias;
    auto rep = grad_check<double>(
        [&] { return project(ops::conv2d(x, wt, nobias, 1, 1), proj); },
        {x, wt}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: upsample and avgpool") {
  Rng rng(115);
  for (int it = 0; it < kInstances; ++it) {
    index_t n = dim(rng, 2), c = dim(rng, 2);
    index_t h = dim(rng, 3), w = dim(rng, 3);
    auto x = rand_t({n, c, h, w}, rng);
    auto proj = rand_t({n, c, 2 * h, 2 * w}, rng);
    auto rep = grad_check<double>(
        [&] { return project(ops::upsample_nearest2x(x), proj); }, {x}, kH,
        kTol);
    expect_pass(rep, it);

    auto x2 = rand_t({n, c, 2 * h, 2 * w}, rng);
    auto proj2 = rand_t({n, c, h, w}, rng);
    rep = grad_check<double>(
        [&] { return project(ops::avgpool_box(x2, 2), proj2); }, {x2}, kH,
        kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad: crop_resize_bilinear") {
  Rng rng(116);
  for (int it = 0; it < kInstances; ++it) {
    index_t c = dim(rng, 2);
    index_t h = 3 + rng.uniform_int(4), w = 3 + rng.uniform_int(4);
    index_t oh = dim(rng, 4), ow = dim(rng, 4);
    double x0 = rng.uniform(0.0, 0.5), y0 = rng.uniform(0.0, 0.5);
    double x1 = x0 + rng.uniform(0.25, 0.5), y1 = y0 + rng.uniform(0.25, 0.5);
    auto x = rand_t({c, h, w}, rng);
    auto proj = rand_t({c, oh, ow}, rng);
    auto rep = grad_check<double>(
        [&] {
          return project(ops::crop_resize_bilinear(x, x0, y0, x1, y1, oh, ow),
                         proj);
        },
        {x}, kH, kTol);
    expect_pass(rep, it);
  }
}

TEST_CASE("grad_check meta: known analytic cases and failure reporting") {
  // f = x^2 at x = 3: both sides give 6.
  auto x = Tensor<double>::full({1}, 3.0);
  auto rep = grad_check<double>([&] { return ops::sum_all(ops::mul(x, x)); },
                                {x}, 1e-4, 1e-5);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err[0] <= 1e-9);

  // Constant function: gradient and finite differences are both zero.
  auto y = Tensor<double>::full({3}, 2.0);
  rep = grad_check<double>([&] { return ops::sum_all(ops::mul_scalar(y, 0.0)); },
                           {y}, 1e-4, 1e-5);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err[0] == 0.0);

  // Probe that walks into a log of a negative number must be reported, not
  // silently passed.
  auto z = Tensor<double>::full({1}, 5e-5);
  rep = grad_check<double>([&] { return ops::sum_all(ops::log(z)); }, {z},
                           1e-4, 1e-5);
  CHECK_FALSE(rep.pass);
  CHECK(rep.detail.find("param 0") != std::string::npos);
}

TEST_CASE("grad: full composite through attention-like pipeline") {
  // Deep composition touching matmul, softmax, concat, tanh and reductions;
  // the kind of graph the generator builds per pixel block.
  Rng rng(117);
  for (int it = 0; it < 20; ++it) {
    index_t d = 3, t = 2 + rng.uniform_int(3), p = 2 + rng.uniform_int(3);
    auto words = rand_t({d, t}, rng);
    auto pixels = rand_t({d, p}, rng);
    auto proj = rand_t({2 * d, p}, rng);
    auto rep = grad_check<double>(
        [&] {
          auto scores = ops::matmul(ops::transpose(words), pixels);
          auto attn = ops::softmax(scores, 0);
          auto ctx = ops::matmul(words, attn);
          auto both =
              ops::concat(0, std::vector<Tensor<double>>{ctx, pixels});
          return project(ops::tanh(both), proj);
        },
        {words, pixels}, kH, kTol);
    expect_pass(rep, it);
  }
}
