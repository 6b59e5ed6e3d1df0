#include <cmath>

#include "doctest.h"
#include "hqm/errors.hpp"
#include "hqm/numerics.hpp"
#include "test_helpers.hpp"

using namespace hqm;
using hqm::testing::random_tensor;

TEST_CASE("matmul small products") {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(hqm::testing::bit_equal(matmul(eye, m), m));
  CHECK(matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4})).item() == 11.0);
  CHECK_THROWS_AS(matmul(m, Tensor::matrix(1, 2, {1, 2})), ShapeError);
}

TEST_CASE("matmul gradient of sum is ones times b transposed") {
  Rng rng(11);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  GradientTape tape;
  const Tensor ta = tape.watch(a);
  const Gradients g = tape.backward(sum(matmul(ta, b)));
  const Tensor expected = matmul(Tensor::filled({3, 2}, 1.0), transpose(b));
  const Tensor got = g.of(ta);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  auto f = [&](std::span<const Tensor> p) { return sum(matmul(p[0], p[1])); };
  CHECK(finite_diff_check(f, {a, b}).max_rel_error < 1e-6);
}

TEST_CASE("softmax rows") {
  const Tensor s = softmax_rows(Tensor::matrix(3, 2, {0, 0, 1000, 1000, 0, std::log(3.0)}));
  CHECK(s.at(0, 0) == 0.5);
  CHECK(s.at(1, 0) == 0.5);
  CHECK(s.at(1, 1) == 0.5);
  CHECK(s.at(2, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s.at(2, 1) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one for large finite inputs") {
  Rng rng(5);
  for (double magnitude : {1.0, 1e3, 1e6}) {
    const Tensor x = random_tensor({6, 9}, rng, magnitude);
    const Tensor s = softmax_rows(x);
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(std::isfinite(s.at(r, c)));
        total += s.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("elementwise kinds") {
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  const Tensor m = mul(Tensor::vector({1, 2}), Tensor::vector({3, 4}));
  CHECK(m[0] == 3.0);
  CHECK(m[1] == 8.0);
  CHECK(relu(Tensor::vector({-1, 2}))[0] == 0.0);
  CHECK(scale(Tensor::vector({2}), 1.5)[0] == 3.0);
  CHECK(sub(Tensor::vector({2}), Tensor::vector({5}))[0] == -3.0);
  CHECK_THROWS_AS(add(Tensor::vector({1, 2}), Tensor::vector({1})), ShapeError);
}

TEST_CASE("linear") {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  CHECK(hqm::testing::bit_equal(linear(eye, eye, Tensor::zeros({2})), eye));
  const Tensor y = linear(Tensor::matrix(1, 2, {1, 1}), eye, Tensor::vector({1, 1}));
  CHECK(y.at(0, 0) == 2.0);
  CHECK(y.at(0, 1) == 2.0);
}

TEST_CASE("backward basics") {
  GradientTape tape;
  const Tensor x = tape.watch(Tensor::vector({1, 2, 3}));
  const Tensor gx = tape.backward(sum(x)).of(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(gx[i] == 1.0);

  GradientTape tape2;
  const Tensor y = tape2.watch(Tensor::vector({1, 2}));
  const Tensor unused = tape2.watch(Tensor::vector({7}));
  const Gradients g = tape2.backward(sum(mul(y, y)));
  CHECK(g.of(y)[0] == 2.0);
  CHECK(g.of(y)[1] == 4.0);
  CHECK(g.of(unused)[0] == 0.0);
  CHECK_THROWS_AS(tape2.backward(mul(y, y)), ContractError);
}

TEST_CASE("finite difference check on a quadratic") {
  auto f = [](std::span<const Tensor> p) { return mul(p[0], p[0]); };
  CHECK(finite_diff_check(f, {Tensor::scalar(3.0)}, 1e-6).max_rel_error < 1e-9);
}

TEST_CASE("composite gradients over many seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Tensor x = random_tensor({3, 6}, rng), w = random_tensor({6, 4}, rng, 0.5), b = random_tensor({4}, rng);
    const Tensor gain = random_tensor({4}, rng), bias = random_tensor({4}, rng), mix = random_tensor({3, 4}, rng);
    auto f = [&](std::span<const Tensor> p) {
      const Tensor h = layer_norm_rows(tanh(linear(p[0], p[1], p[2])), p[3], p[4]);
      const Tensor att = softmax_rows(matmul_nt(h, h));
      const Tensor parts[] = {slice_cols(h, 0, 2), slice_cols(sigmoid(h), 2, 4)};
      return sum(mul(matmul(att, concat_cols(parts)), mix));
    };
    const auto report = finite_diff_check(f, {x, w, b, gain, bias});
    CHECK_MESSAGE(report.max_rel_error < 1e-4, "seed " << seed);
  }
}

TEST_CASE("gather rows and slices") {
  const Tensor m = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const std::size_t rows[] = {2, 0};
  const Tensor g = gather_rows(m, rows);
  CHECK(g.at(0, 0) == 5.0);
  CHECK(g.at(1, 1) == 2.0);
  CHECK(slice_cols(m, 1, 2).at(2, 0) == 6.0);
  CHECK(mean(m).item() == 3.5);
}

TEST_CASE("operations are deterministic") {
  Rng a(3), b(3);
  const Tensor x = random_tensor({4, 5}, a), y = random_tensor({4, 5}, b);
  CHECK(hqm::testing::bit_equal(softmax_rows(matmul_nt(x, x)), softmax_rows(matmul_nt(y, y))));
}

TEST_CASE("tracked tensors refuse in-place writes") {
  GradientTape tape;
  Tensor x = tape.watch(Tensor::vector({1}));
  CHECK_THROWS_AS(x.mutable_data(), ContractError);
}
