#include <catch2/catch_amalgamated.hpp>

#include "pointagg/core/gradcheck.hpp"
#include "pointagg/core/ops.hpp"
#include "pointagg/net/sgd.hpp"

using namespace pointagg;

namespace {

Context no_tape() { return Context{nullptr, false}; }

TensorPtr random_tensor(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  auto t = make_tensor(rows, cols);
  for (Index i = 0; i < t->size(); ++i) (*t)[i] = static_cast<Scalar>(rng.normal(0.0, scale));
  return t;
}

}  // namespace

TEST_CASE("linear_forward counts one mac per multiply") {
  Rng rng(7);
  auto x = random_tensor(8, 6, rng);
  LinearLayer lin(6, 3, true);
  lin.he_init(rng);
  auto ctx = no_tape();
  Tensor::reset_mac_counter();
  auto y = linear_forward(ctx, x, lin);
  CHECK(Tensor::mac_counter() == 144);
  CHECK(y->rows() == 8);
  CHECK(y->cols() == 3);
}

TEST_CASE("linear_forward matches a hand-rolled product") {
  auto x = std::make_shared<Tensor>(Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6}));
  LinearLayer lin(3, 2, true);
  *lin.weight = Tensor::from_rows(2, 3, {1, 0, -1, 2, 1, 0});
  (*lin.bias)[0] = 10;
  (*lin.bias)[1] = -1;
  auto ctx = no_tape();
  auto y = linear_forward(ctx, x, lin);
  CHECK((*y)(0, 0) == Catch::Approx(1 - 3 + 10));
  CHECK((*y)(0, 1) == Catch::Approx(2 + 2 - 1));
  CHECK((*y)(1, 0) == Catch::Approx(4 - 6 + 10));
  CHECK((*y)(1, 1) == Catch::Approx(8 + 5 - 1));
}

TEST_CASE("linear_forward rejects mismatched widths") {
  auto x = make_tensor(4, 5);
  LinearLayer lin(6, 3, false);
  auto ctx = no_tape();
  CHECK_THROWS_AS(linear_forward(ctx, x, lin), DimensionError);
}

TEST_CASE("batchnorm training normalizes with batch statistics") {
  // columns engineered to mean 3 / var 4 and mean 3 / var 1
  auto x = std::make_shared<Tensor>(Tensor::from_rows(2, 2, {1, 2, 5, 4}));
  BatchNormLayer bn(2);
  (*bn.scale)[0] = 2;
  (*bn.scale)[1] = -1;
  (*bn.shift)[0] = 1;
  (*bn.shift)[1] = 0.5;
  Context ctx{nullptr, true};
  auto y = batchnorm_forward(ctx, x, bn);
  CHECK((*y)(0, 0) == Catch::Approx(-0.9999975000046875).epsilon(1e-12));
  CHECK((*y)(1, 0) == Catch::Approx(2.9999975000046875).epsilon(1e-12));
  CHECK((*y)(0, 1) == Catch::Approx(1.4999950000374997).epsilon(1e-12));
  CHECK((*y)(1, 1) == Catch::Approx(-0.49999500003749975).epsilon(1e-12));
  CHECK((*bn.running_mean)[0] == Catch::Approx(0.9 * 0 + 0.1 * 3));
  CHECK((*bn.running_var)[0] == Catch::Approx(0.9 * 1 + 0.1 * 4));
}

TEST_CASE("batchnorm maps identical rows to the shift") {
  auto x = make_tensor(5, 3);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 3; ++j) (*x)(i, j) = Scalar(2.5);
  BatchNormLayer bn(3);
  (*bn.shift)[1] = 7;
  Context ctx{nullptr, true};
  auto y = batchnorm_forward(ctx, x, bn);
  for (Index i = 0; i < 5; ++i) {
    CHECK((*y)(i, 0) == 0);
    CHECK((*y)(i, 1) == 7);
  }
}

TEST_CASE("batchnorm training rejects single-row batches") {
  auto x = make_tensor(1, 3);
  BatchNormLayer bn(3);
  Context ctx{nullptr, true};
  CHECK_THROWS_AS(batchnorm_forward(ctx, x, bn), DegenerateInputError);
}

TEST_CASE("batchnorm eval uses running buffers only") {
  auto x = std::make_shared<Tensor>(Tensor::from_rows(1, 1, {3}));
  BatchNormLayer bn(1);
  (*bn.running_mean)[0] = 1;
  (*bn.running_var)[0] = 4;
  auto ctx = no_tape();
  auto y = batchnorm_forward(ctx, x, bn);
  CHECK((*y)(0, 0) == Catch::Approx((3.0 - 1.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("relu clamps negatives and keeps positives") {
  auto x = std::make_shared<Tensor>(Tensor::from_rows(1, 4, {-2, -0.5, 0, 3}));
  auto ctx = no_tape();
  auto y = relu(ctx, x);
  CHECK((*y)[0] == 0);
  CHECK((*y)[1] == 0);
  CHECK((*y)[2] == 0);
  CHECK((*y)[3] == 3);
}

TEST_CASE("reduce_neighbors sum equals count times avg on power-of-two slices") {
  Rng rng(11);
  auto edges = random_tensor(12, 5, rng);
  const std::vector<Index> offsets = {0, 4, 6, 12};  // counts 4, 2, 6
  auto ctx = no_tape();
  auto s = reduce_neighbors(ctx, edges, offsets, Reduction::SUM);
  auto a = reduce_neighbors(ctx, edges, offsets, Reduction::AVG);
  const Index counts[] = {4, 2, 6};
  for (Index q = 0; q < 3; ++q)
    for (Index c = 0; c < 5; ++c) {
      const Scalar lhs = (*s)(q, c);
      const Scalar rhs = static_cast<Scalar>(counts[q]) * (*a)(q, c);
      if (counts[q] == 4 || counts[q] == 2) {
        CHECK(lhs == rhs);
      } else {
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
      }
    }
}

TEST_CASE("reduce_neighbors max routes tied gradients to the lowest edge") {
  auto edges = std::make_shared<Tensor>(Tensor::from_rows(3, 1, {5, 5, 2}));
  const std::vector<Index> offsets = {0, 3};
  Tape tape;
  Context ctx{&tape, false};
  auto y = reduce_neighbors(ctx, edges, offsets, Reduction::MAX);
  auto loss = sum_all(ctx, y);
  tape.backward(loss);
  CHECK((*y)(0, 0) == 5);
  CHECK(edges->grad_at(0) == 1);
  CHECK(edges->grad_at(1) == 0);
  CHECK(edges->grad_at(2) == 0);
}

TEST_CASE("reduce_neighbors rejects empty slices for max and avg") {
  auto edges = make_tensor(2, 3);
  const std::vector<Index> offsets = {0, 2, 2};
  auto ctx = no_tape();
  CHECK_THROWS_AS(reduce_neighbors(ctx, edges, offsets, Reduction::MAX), DegenerateInputError);
  CHECK_THROWS_AS(reduce_neighbors(ctx, edges, offsets, Reduction::AVG), DegenerateInputError);
  auto s = reduce_neighbors(ctx, edges, offsets, Reduction::SUM);
  CHECK((*s)(1, 0) == 0);
}

TEST_CASE("gradient check covers every core op") {
  Rng rng(23);
  auto x = random_tensor(6, 4, rng);
  LinearLayer lin(4, 3, true);
  lin.he_init(rng);
  BatchNormLayer bn(3);
  for (Index j = 0; j < 3; ++j) {
    (*bn.scale)[j] = static_cast<Scalar>(rng.uniform(0.5, 1.5));
    (*bn.shift)[j] = static_cast<Scalar>(rng.normal(0.0, 0.2));
  }
  auto w = random_tensor(6, 3, rng);  // fixed mixing weights, not differentiated
  const std::vector<Index> offsets = {0, 2, 5, 6};

  auto closure = [&](Context& ctx) {
    Context train{ctx.tape, true};
    auto h = linear_forward(train, x, lin);
    h = batchnorm_forward(train, h, bn);
    h = relu(train, h);
    h = mul_elem(train, h, w);
    auto r = reduce_neighbors(train, h, offsets, Reduction::AVG);
    return sum_all(train, r);
  };
  const double err = grad_check(closure, {x, lin.weight, lin.bias, bn.scale, bn.shift}, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("gradient check covers gather, concat and neighbor softmax") {
  Rng rng(31);
  auto a = random_tensor(5, 3, rng);
  auto b = random_tensor(5, 2, rng);
  const std::vector<Index> rows = {0, 2, 2, 4, 1, 3};
  const std::vector<Index> offsets = {0, 3, 6};
  auto closure = [&](Context& ctx) {
    auto ga = gather_rows(ctx, a, rows);
    auto gb = gather_rows(ctx, b, rows);
    auto cat = concat_cols(ctx, {ga, gb});
    auto sm = neighbor_softmax(ctx, cat, offsets);
    auto r = reduce_neighbors(ctx, sm, offsets, Reduction::SUM);
    return sum_all(ctx, mul_elem(ctx, r, r));
  };
  const double err = grad_check(closure, {a, b}, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("gradient check covers the classification loss") {
  Rng rng(37);
  auto logits = random_tensor(7, 4, rng);
  const std::vector<int> labels = {0, 3, 2, -1, 1, 1, 0};
  auto closure = [&](Context& ctx) { return softmax_cross_entropy_mean(ctx, logits, labels); };
  const double err = grad_check(closure, {logits}, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check rejects out-of-range eps") {
  auto x = make_tensor(1, 1);
  auto closure = [&](Context& ctx) { return sum_all(ctx, x); };
  CHECK_THROWS_AS(grad_check(closure, {x}, 1e-8), ValidationError);
  CHECK_THROWS_AS(grad_check(closure, {x}, 1e-2), ValidationError);
}

TEST_CASE("forward passes are bitwise deterministic") {
  Rng rng1(99), rng2(99);
  auto x1 = random_tensor(32, 8, rng1);
  auto x2 = random_tensor(32, 8, rng2);
  LinearLayer l1(8, 8, true), l2(8, 8, true);
  Rng pr1(5), pr2(5);
  l1.he_init(pr1);
  l2.he_init(pr2);
  auto ctx = no_tape();
  auto y1 = linear_forward(ctx, x1, l1);
  auto y2 = linear_forward(ctx, x2, l2);
  for (Index i = 0; i < y1->size(); ++i) CHECK((*y1)[i] == (*y2)[i]);
}

TEST_CASE("sgd_step follows the velocity recurrence") {
  ParamStore store;
  auto theta = make_tensor(1, 1);
  store.add("theta", theta);
  SgdState state(store);
  theta->ensure_grad();
  for (int step = 0; step < 2; ++step) {
    theta->zero_grad();
    theta->grad()[0] = 1;
    sgd_step(store, state, Scalar(0.1), Scalar(0.9), Scalar(0));
  }
  CHECK((*theta)[0] == Catch::Approx(-0.29).epsilon(1e-12));
}

TEST_CASE("sgd_step applies weight decay through the velocity") {
  ParamStore store;
  auto theta = make_tensor(1, 1);
  (*theta)[0] = 2;
  store.add("theta", theta);
  SgdState state(store);
  theta->ensure_grad();
  theta->zero_grad();
  sgd_step(store, state, Scalar(0.5), Scalar(0.9), Scalar(0.1));
  // v = 0 + 0 + 0.1*2 = 0.2 ; theta = 2 - 0.5*0.2
  CHECK((*theta)[0] == Catch::Approx(1.9).epsilon(1e-12));
  CHECK_THROWS_AS(sgd_step(store, state, Scalar(-1), Scalar(0.9), Scalar(0)), ValidationError);
}
