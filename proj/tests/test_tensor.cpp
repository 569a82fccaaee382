#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flagcns/autodiff.hpp"
#include "flagcns/common.hpp"
#include "flagcns/tensor.hpp"
#include "support.hpp"

using namespace flagcns;
using namespace flagcns::ad;
using testsupport::central_differences;
using testsupport::max_rel_err;
using testsupport::random_tensor;

namespace {

// Generic gradient check: `build` assembles the graph from param nodes created
// out of `inits`; the output is scalarized against a fixed random functional.
void check_gradients(const std::vector<Tensor>& inits,
                     const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
                     uint64_t seed = 7, double tol = 1e-4) {
  Rng rng(seed);
  Tensor probe;
  {
    Tape t;
    std::vector<NodeId> ps;
    for (const auto& x : inits) ps.push_back(t.param(x));
    NodeId out = build(t, ps);
    probe = random_tensor(t.value(out).shape(), rng);
  }
  auto run = [&](const std::vector<double>& flat, std::vector<std::vector<double>>* grads) {
    Tape t;
    std::vector<NodeId> ps;
    size_t off = 0;
    for (const auto& x : inits) {
      Tensor v = x;
      for (int64_t i = 0; i < v.numel(); ++i) v.at(i) = flat[off++];
      ps.push_back(t.param(std::move(v)));
    }
    NodeId out = build(t, ps);
    NodeId loss = t.sum_all(t.hadamard(out, t.constant(probe)));
    if (grads) {
      t.backward(loss);
      grads->clear();
      for (NodeId p : ps) grads->push_back(t.grad(p).values());
    }
    return t.value(loss).at(0);
  };
  std::vector<double> flat;
  for (const auto& x : inits) flat.insert(flat.end(), x.values().begin(), x.values().end());

  std::vector<std::vector<double>> analytic;
  run(flat, &analytic);
  std::vector<double> analytic_flat;
  for (auto& g : analytic) analytic_flat.insert(analytic_flat.end(), g.begin(), g.end());
  std::vector<double> fd =
      central_differences([&](const std::vector<double>& x) { return run(x, nullptr); }, flat);
  CHECK(max_rel_err(analytic_flat, fd) < tol);
}

SparseMatrix path2_normalized() {
  // 2-node path with self loops, symmetric normalization; both degrees 2.
  return SparseMatrix::from_triplets(2, 2, {{0, 0, 0.5}, {0, 1, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}});
}

}  // namespace

TEST_CASE("matmul basics") {
  Tape t;
  NodeId eye = t.constant(Tensor::row_major(2, 2, {1, 0, 0, 1}));
  NodeId b = t.constant(Tensor::row_major(2, 2, {3, 4, 5, 6}));
  CHECK(t.value(t.matmul(eye, b)) == t.value(b));

  NodeId a = t.constant(Tensor::row_major(2, 2, {1, 2, 3, 4}));
  NodeId v = t.constant(Tensor::row_major(2, 1, {0, 1}));
  CHECK(t.value(t.matmul(a, v)) == Tensor::row_major(2, 1, {2, 4}));

  NodeId zero = t.constant(Tensor({2, 2}));
  CHECK(t.value(t.matmul(zero, b)) == Tensor({2, 2}));

  NodeId bad = t.constant(Tensor({3, 2}));
  CHECK_THROWS_AS(t.matmul(a, bad), DimensionError);
}

TEST_CASE("spmm basics") {
  Rng rng(1);
  Tensor x = random_tensor({4, 3}, rng);
  SparseMatrix eye = SparseMatrix::identity(4);
  Tape t;
  CHECK(t.value(t.spmm(&eye, t.constant(x))) == x);

  SparseMatrix empty;
  empty.rows = empty.cols = 4;
  empty.row_ptr.assign(5, 0);
  CHECK(t.value(t.spmm(&empty, t.constant(x))) == Tensor({4, 3}));

  SparseMatrix p2 = path2_normalized();
  Tensor ones = Tensor::full({2, 3}, 1.0);
  Tensor out = t.value(t.spmm(&p2, t.constant(ones)));
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(1.0).epsilon(1e-12));

  SparseMatrix wide = SparseMatrix::identity(3);
  CHECK_THROWS_AS(t.spmm(&wide, t.constant(x)), DimensionError);
}

TEST_CASE("spmm agrees with densified matmul") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::tuple<int64_t, int64_t, double>> trips;
    for (int64_t r = 0; r < 20; ++r)
      for (int64_t c = 0; c < 20; ++c)
        if (rng.uniform() < 0.15) trips.emplace_back(r, c, rng.uniform(-2, 2));
    SparseMatrix s = SparseMatrix::from_triplets(20, 20, trips);
    Tensor x = random_tensor({20, 6}, rng);
    Tape t;
    Tensor sparse_out = t.value(t.spmm(&s, t.constant(x)));
    Tensor dense_out = t.value(t.matmul(t.constant(s.to_dense()), t.constant(x)));
    for (int64_t i = 0; i < sparse_out.numel(); ++i)
      CHECK(sparse_out.at(i) == doctest::Approx(dense_out.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("activations") {
  Rng rng(3);
  Tensor x = random_tensor({3, 4}, rng);
  Tape t;
  NodeId xn = t.constant(x);
  CHECK(t.value(t.activation(xn, Act::kIdentity)) == x);

  NodeId z = t.constant(Tensor({1, 1}));
  CHECK(t.value(t.activation(z, Act::kSigmoid)).at(0) == doctest::Approx(0.5).epsilon(1e-15));

  NodeId zr = t.constant(Tensor({1, 5}));
  Tensor sm = t.value(t.activation(zr, Act::kSoftmaxRows));
  for (int64_t i = 0; i < 5; ++i) CHECK(sm.at(i) == doctest::Approx(0.2).epsilon(1e-15));

  CHECK_THROWS_AS(t.activation(t.constant(Tensor({4})), Act::kSoftmaxRows), DimensionError);
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({5, 7}, rng, -30, 30);
    Tape t;
    Tensor y = t.value(t.activation(t.constant(x), Act::kSoftmaxRows));
    for (int64_t r = 0; r < 5; ++r) {
      double sum = 0;
      for (int64_t c = 0; c < 7; ++c) {
        CHECK(y.at(r, c) > 0.0);
        sum += y.at(r, c);
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("mean_stack") {
  Rng rng(5);
  Tensor x = random_tensor({2, 2}, rng);
  Tape t;
  NodeId xn = t.param(x);
  CHECK(t.value(t.mean_stack({xn})) == x);
  CHECK(t.value(t.mean_stack({xn, t.scale(xn, -1.0)})) == Tensor({2, 2}));
  NodeId a = t.constant(Tensor({1, 2}, {1, 3}));
  NodeId b = t.constant(Tensor({1, 2}, {3, 5}));
  CHECK(t.value(t.mean_stack({a, b})) == Tensor({1, 2}, {2, 4}));
  CHECK_THROWS_AS(t.mean_stack({}), DimensionError);
}

TEST_CASE("masked cross entropy values") {
  int64_t n = 4, c = 7;
  Tape t;
  NodeId logits = t.constant(Tensor({n, c}));
  std::vector<int> labels{0, 3, 6, 2};
  NodeId loss = t.masked_cross_entropy(logits, labels, {0, 1, 2, 3});
  CHECK(std::fabs(t.value(loss).at(0) - std::log(7.0)) <= 1e-12);

  Tensor hot({1, 3});
  hot.at(0, 1) = 50.0;
  Tape t2;
  NodeId l2 = t2.masked_cross_entropy(t2.constant(hot), {1}, {0});
  CHECK(t2.value(l2).at(0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(t2.value(l2).at(0) >= 0.0);

  Tape t3;
  NodeId l3 = t3.masked_cross_entropy(t3.constant(Tensor({1, 2})), {0}, {0});
  CHECK(t3.value(l3).at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tape t4;
  CHECK_THROWS_AS(t4.masked_cross_entropy(t4.constant(Tensor({2, 2})), {0, 1}, {}),
                  DimensionError);
  Tape t5;
  CHECK_THROWS_AS(t5.masked_cross_entropy(t5.constant(Tensor({2, 2})), {0, 2}, {0}),
                  DimensionError);
}

TEST_CASE("cross entropy is nonnegative") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor({6, 4}, rng, -5, 5);
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) labels.push_back(rng.uniform_int(0, 4));
    Tape t;
    CHECK(t.value(t.masked_cross_entropy(t.constant(logits), labels, {0, 2, 4})).at(0) >= 0.0);
  }
}

TEST_CASE("backward on simple closed forms") {
  Rng rng(7);
  Tensor w = random_tensor({3, 2}, rng);
  {
    Tape t;
    NodeId wn = t.param(w);
    t.backward(t.sum_all(wn));
    CHECK(t.grad(wn) == Tensor::full({3, 2}, 1.0));
  }
  {
    Tape t;
    NodeId wn = t.param(w);
    NodeId loss = t.scale(t.sum_all(t.hadamard(wn, wn)), 0.5);
    t.backward(loss);
    for (int64_t i = 0; i < w.numel(); ++i)
      CHECK(t.grad(wn).at(i) == doctest::Approx(w.at(i)).epsilon(1e-14));
  }
  {
    Tape t;
    NodeId wn = t.param(w);
    CHECK_THROWS_AS(t.backward(wn), DimensionError);
  }
  {
    // leaf unreachable from the loss gets a zero gradient
    Tape t;
    NodeId used = t.param(w);
    NodeId unused = t.param(w);
    t.backward(t.sum_all(used));
    CHECK(t.grad(unused) == Tensor({3, 2}));
  }
}

TEST_CASE("backward matches finite differences on a two-layer net") {
  Rng rng(8);
  Tensor x = random_tensor({5, 3}, rng);
  std::vector<Tensor> inits = {random_tensor({3, 4}, rng), random_tensor({4}, rng),
                               random_tensor({4, 2}, rng), random_tensor({2}, rng)};
  check_gradients(inits, [&](Tape& t, const std::vector<NodeId>& p) {
    NodeId h = t.activation(t.add_bias(t.matmul(t.constant(x), p[0]), p[1]), Act::kTanh);
    return t.add_bias(t.matmul(h, p[2]), p[3]);
  });
}

TEST_CASE("per-op gradients match finite differences") {
  Rng rng(9);
  SUBCASE("matmul") {
    std::vector<Tensor> inits = {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
    check_gradients(inits, [](Tape& t, const std::vector<NodeId>& p) {
      return t.matmul(p[0], p[1]);
    });
  }
  SUBCASE("spmm") {
    SparseMatrix s = SparseMatrix::from_triplets(
        3, 3, {{0, 1, 0.7}, {1, 0, 0.7}, {1, 2, -0.4}, {2, 2, 1.1}});
    std::vector<Tensor> inits = {random_tensor({3, 2}, rng)};
    check_gradients(inits, [&](Tape& t, const std::vector<NodeId>& p) {
      return t.spmm(&s, p[0]);
    });
  }
  SUBCASE("sigmoid tanh softmax identity") {
    for (Act a : {Act::kSigmoid, Act::kTanh, Act::kSoftmaxRows, Act::kIdentity}) {
      std::vector<Tensor> inits = {random_tensor({2, 3}, rng)};
      check_gradients(inits, [a](Tape& t, const std::vector<NodeId>& p) {
        return t.activation(p[0], a);
      });
    }
  }
  SUBCASE("relu and leaky away from the kink") {
    Tensor x({2, 3}, {0.4, -0.6, 1.2, -0.9, 0.3, 0.8});
    check_gradients({x}, [](Tape& t, const std::vector<NodeId>& p) {
      return t.activation(p[0], Act::kRelu);
    });
    check_gradients({x}, [](Tape& t, const std::vector<NodeId>& p) {
      return t.leaky_relu(p[0], 0.2);
    });
  }
  SUBCASE("add add_bias scale hadamard concat") {
    std::vector<Tensor> inits = {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng),
                                 random_tensor({3}, rng)};
    check_gradients(inits, [](Tape& t, const std::vector<NodeId>& p) {
      NodeId u = t.add(p[0], t.scale(p[1], -1.7));
      NodeId v = t.add_bias(t.hadamard(u, p[0]), p[2]);
      return t.concat_cols(v, p[1]);
    });
  }
  SUBCASE("mean_stack") {
    std::vector<Tensor> inits = {random_tensor({2, 2}, rng), random_tensor({2, 2}, rng),
                                 random_tensor({2, 2}, rng)};
    check_gradients(inits, [](Tape& t, const std::vector<NodeId>& p) {
      return t.mean_stack({p[0], p[1], p[2]});
    });
  }
  SUBCASE("gather segment_softmax scatter") {
    std::vector<int64_t> src{0, 2, 1, 2, 0};
    std::vector<int64_t> dst{0, 0, 1, 2, 2};
    std::vector<Tensor> inits = {random_tensor({3, 2}, rng), random_tensor({5, 1}, rng)};
    check_gradients(inits, [&](Tape& t, const std::vector<NodeId>& p) {
      NodeId vals = t.gather_rows(p[0], src);
      NodeId alpha = t.segment_softmax(p[1], dst, 3);
      return t.scatter_weighted_rows(alpha, vals, dst, 3);
    });
  }
  SUBCASE("gin_combine") {
    std::vector<Tensor> inits = {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng),
                                 Tensor({1}, {0.3})};
    check_gradients(inits, [](Tape& t, const std::vector<NodeId>& p) {
      return t.gin_combine(p[0], p[1], p[2]);
    });
  }
  SUBCASE("masked cross entropy") {
    std::vector<Tensor> inits = {random_tensor({4, 3}, rng)};
    check_gradients(inits, [](Tape& t, const std::vector<NodeId>& p) {
      return t.masked_cross_entropy(p[0], {0, 2, 1, 1}, {0, 1, 3});
    });
  }
}

TEST_CASE("sgd_step") {
  Tensor p = Tensor::full({2, 2}, 1.0);
  Tensor g = Tensor::full({2, 2}, 1.0);
  Tensor p0 = p;
  sgd_step(p, g, 0.0);
  CHECK(p == p0);
  sgd_step(p, g, 0.1);
  for (int64_t i = 0; i < p.numel(); ++i) CHECK(p.at(i) == doctest::Approx(0.9).epsilon(1e-15));

  // two steps with g1 then g2 equal one step with g1+g2
  Rng rng(10);
  Tensor q1 = random_tensor({3}, rng), q2 = q1;
  Tensor g1 = random_tensor({3}, rng), g2 = random_tensor({3}, rng);
  sgd_step(q1, g1, 0.05);
  sgd_step(q1, g2, 0.05);
  Tensor gsum = g1;
  for (int64_t i = 0; i < 3; ++i) gsum.at(i) += g2.at(i);
  sgd_step(q2, gsum, 0.05);
  for (int64_t i = 0; i < 3; ++i) CHECK(q1.at(i) == doctest::Approx(q2.at(i)).epsilon(1e-15));

  CHECK_THROWS_AS(sgd_step(p, Tensor({3}), 0.1), DimensionError);
}

TEST_CASE("non-finite forward values are an error state") {
  Tape t;
  NodeId x = t.param(Tensor({1, 1}, {1e308}));
  NodeId y = t.sum_all(t.hadamard(x, x));  // overflows to inf
  CHECK_THROWS_AS(t.backward(y), NumericError);
}

TEST_CASE("sparse matrix invariants are validated") {
  SparseMatrix s;
  s.rows = s.cols = 2;
  s.row_ptr = {0, 1, 2};
  s.col_idx = {0, 5};  // out of range
  s.values = {1.0, 1.0};
  CHECK_THROWS_AS(s.validate(), DimensionError);
}
