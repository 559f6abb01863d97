#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gatta/error.hpp"
#include "gatta/ops.hpp"
#include "support.hpp"

using namespace gatta;
using gatta::test::random_tensor;

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK(shape_str({2, 3}) == "[2,3]");
  CHECK(t.all_finite());
  t[4] = std::numeric_limits<real>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("relu values and gradient") {
  Tape tape;
  Var x = tape.parameter(Tensor({2}, {-2, 3}));
  Var y = relu(x);
  CHECK(y.value() == Tensor({2}, {0, 3}));
  tape.backward(sum(y));
  CHECK(*tape.grad(x) == Tensor({2}, {0, 1}));
}

TEST_CASE("softmax cross-entropy of equal logits") {
  Tape tape;
  Tensor logits({3, 10}, 0.7f);
  const std::vector<int> labels{0, 4, 9};
  Var loss = softmax_cross_entropy(tape.constant(logits), labels);
  CHECK(loss.value()[0] == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  const Tensor p = softmax(logits);
  for (real v : p.data()) CHECK(v == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("softmax cross-entropy is stable for large logits") {
  Tape tape;
  Var loss = softmax_cross_entropy(tape.constant(Tensor({1, 3}, {1000, 0, -1000})), std::vector<int>{0});
  CHECK(loss.value()[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK_THROWS_AS(softmax_cross_entropy(tape.constant(Tensor({1, 3})), std::vector<int>{3}),
                  std::invalid_argument);
}

TEST_CASE("scale_add with zero gain is the identity") {
  Rng rng(2);
  Tape tape;
  Tensor x = random_tensor({2, 4, 4, 3}, rng, -5, 5);
  Var y = scale_add(tape.constant_ref(x), tape.constant(Tensor({2, 4, 4}, 0)));
  CHECK(y.value() == x);
  Var z = scale_add(tape.constant_ref(x), tape.constant(Tensor({2, 4, 4}, -1)));
  for (real v : z.value().data()) CHECK(v == 0);
  CHECK_THROWS_AS(scale_add(tape.constant_ref(x), tape.constant(Tensor({2, 5}))), std::invalid_argument);
}

TEST_CASE("scale_add clamp") {
  Tape tape;
  Var y = scale_add(tape.constant(Tensor({1, 2}, {2, 2})), tape.constant(Tensor({1, 2}, {-3, 0.5f})), true);
  CHECK(y.value() == Tensor({1, 2}, {0, 3}));
}

TEST_CASE("dropout") {
  Rng rng(9);
  Tape tape;
  Var x = tape.constant(Tensor({1000}, 1));
  CHECK(dropout(x, 0.5f, false, rng).id() == x.id());
  CHECK(dropout(x, 0, true, rng).id() == x.id());
  CHECK_THROWS_AS(dropout(x, 1, true, rng), std::invalid_argument);
  CHECK_THROWS_AS(dropout(x, -0.1f, true, rng), std::invalid_argument);
  const Tensor& y = dropout(x, 0.25f, true, rng).value();
  std::size_t zeros = 0;
  double total = 0;
  for (real v : y.data()) {
    if (v == 0) ++zeros;
    else CHECK(v == doctest::Approx(1 / 0.75));
    total += v;
  }
  CHECK(zeros > 180);
  CHECK(zeros < 320);
  CHECK(total / 1000 == doctest::Approx(1.0).epsilon(0.1));

  Rng a(4), b(4);
  Tape t2;
  Var x2 = t2.constant(Tensor({64}, 1));
  CHECK(dropout(x2, 0.5f, true, a).value() == dropout(x2, 0.5f, true, b).value());
}

TEST_CASE("elementwise arithmetic and reductions") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor({2, 2}, {4, 3, 2, 1}));
  CHECK(add(a, b).value() == Tensor({2, 2}, 5));
  CHECK(sub(a, b).value() == Tensor({2, 2}, {-3, -1, 1, 3}));
  CHECK(mul(a, b).value() == Tensor({2, 2}, {4, 6, 6, 4}));
  CHECK(scale(a, 2).value() == Tensor({2, 2}, {2, 4, 6, 8}));
  CHECK(add_scalar(a, 1).value() == Tensor({2, 2}, {2, 3, 4, 5}));
  CHECK(sum(a).value()[0] == 10);
  CHECK(mean(a).value()[0] == 2.5f);
  CHECK(sum_squares(a).value()[0] == 30);
  CHECK(matmul(a, b).value() == Tensor({2, 2}, {8, 5, 20, 13}));
  CHECK(add_bias(a, tape.constant(Tensor({2}, {10, 20}))).value() == Tensor({2, 2}, {11, 22, 13, 24}));
  CHECK(dense(a, b, tape.constant(Tensor({2}, {1, 1}))).value() == Tensor({2, 2}, {9, 6, 21, 14}));
  CHECK_THROWS_AS(add(a, tape.constant(Tensor({4}))), std::invalid_argument);
  CHECK_THROWS_AS(matmul(a, tape.constant(Tensor({3, 2}))), std::invalid_argument);
}

TEST_CASE("attention primitives on hand values") {
  Tape tape;
  // a[b=1,c=2] = {2, -1}, w rows {1,0,1}, {0,1,1}, bias {0, 0, 1}
  Var ro = row_outer(tape.constant(Tensor({1, 2}, {2, -1})), tape.constant(Tensor({2, 3}, {1, 0, 1, 0, 1, 1})),
                     tape.constant(Tensor({3}, {0, 0, 1})));
  CHECK(ro.value() == Tensor({1, 2, 3}, {2, 0, 3, 0, -1, 0}));
  Var m = mean_axis1(ro);
  CHECK(m.value() == Tensor({1, 3}, {1, -0.5f, 1.5f}));
  Var dot = batched_dot(ro, tape.constant(Tensor({1, 3}, {1, 1, 1})));
  CHECK(dot.value() == Tensor({1, 2}, {5, -1}));
  CHECK(mul_scalar(dot, tape.constant(Tensor({1}, 2))).value() == Tensor({1, 2}, {10, -2}));
}

TEST_CASE("tape rejects non-finite values and cross-tape inputs") {
  Tape tape, other;
  Var x = tape.constant(Tensor({1}, std::numeric_limits<real>::max()));
  CHECK_THROWS_AS(scale(x, 10), NumericError);
  Var y = other.constant(Tensor({1}, 1));
  CHECK_THROWS_AS(add(x, y), std::invalid_argument);
  Var v = tape.parameter(Tensor({2}, 1));
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
}

TEST_CASE("gradient accumulates across fan-out and constants get none") {
  Tape tape;
  Var x = tape.parameter(Tensor({3}, {1, 2, 3}));
  Var c = tape.constant(Tensor({3}, 2));
  Var loss = sum(add(mul(x, c), mul(x, x)));
  tape.backward(loss);
  CHECK(*tape.grad(x) == Tensor({3}, {4, 6, 8}));
  CHECK(tape.grad(c) == nullptr);
}
