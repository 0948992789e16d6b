#include <doctest.h>

#include <cmath>
#include <set>

#include "angrymtl/errors.hpp"
#include "angrymtl/graph.hpp"
#include "angrymtl/params.hpp"
#include "test_support.hpp"

using namespace angrymtl;
using testsupport::max_rel_grad_err;

namespace {

Tensor& add_random(ParamStore& store, const std::string& name, int rows, int cols,
                   uint64_t seed) {
  Tensor& t = store.add(name, rows, cols);
  fill_normal(t, 0.0, 0.5, seed);
  return t;
}

}  // namespace

TEST_CASE("graph forward values") {
  ParamStore store;
  Tensor& a = store.add("a", 2, 2);
  a.value << 1.0, 2.0, 3.0, 4.0;

  ag::Graph g;
  ag::Expr x = g.param(a);

  SUBCASE("elementwise add and subtract") {
    ag::Expr y = x + x;
    CHECK(y.value()(1, 1) == doctest::Approx(8.0));
    ag::Expr z = y - x;
    CHECK(z.value()(0, 1) == doctest::Approx(2.0));
  }
  SUBCASE("hadamard and scale") {
    ag::Expr y = x * x;
    CHECK(y.value()(1, 0) == doctest::Approx(9.0));
    CHECK(ag::scale(x, -2.0).value()(0, 0) == doctest::Approx(-2.0));
    CHECK(ag::ones_minus(x).value()(1, 1) == doctest::Approx(-3.0));
  }
  SUBCASE("matmul, transpose, dot") {
    ag::Expr y = ag::matmul(x, ag::transpose(x));
    CHECK(y.value()(0, 0) == doctest::Approx(5.0));
    CHECK(y.value()(0, 1) == doctest::Approx(11.0));
    Mat v(2, 1);
    v << 1.0, -1.0;
    ag::Expr c = g.constant(v);
    CHECK(ag::dot(c, c).value()(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("activations") {
    CHECK(ag::sigmoid(x).value()(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(ag::tanh_(x).value()(0, 0) == doctest::Approx(std::tanh(1.0)));
    Mat v(2, 1);
    v << -3.0, 2.0;
    ag::Expr r = ag::relu(g.constant(v));
    CHECK(r.value()(0, 0) == 0.0);
    CHECK(r.value()(1, 0) == 2.0);
  }
  SUBCASE("softmax column sums to one and is monotone") {
    Mat v(3, 1);
    v << 0.0, std::log(2.0), std::log(3.0);
    ag::Expr s = ag::softmax_vec(g.constant(v));
    CHECK(s.value().sum() == doctest::Approx(1.0));
    CHECK(s.value()(0, 0) == doctest::Approx(1.0 / 6.0));
    CHECK(s.value()(1, 0) == doctest::Approx(2.0 / 6.0));
    CHECK(s.value()(2, 0) == doctest::Approx(3.0 / 6.0));
  }
  SUBCASE("softmax_rows normalizes each row") {
    ag::Expr s = ag::softmax_rows(x);
    CHECK(s.value().row(0).sum() == doctest::Approx(1.0));
    CHECK(s.value().row(1).sum() == doctest::Approx(1.0));
  }
  SUBCASE("shape ops") {
    ag::Expr rc = ag::row_as_col(x, 1);
    CHECK(rc.rows() == 2);
    CHECK(rc.cols() == 1);
    CHECK(rc.value()(0, 0) == 3.0);
    CHECK(ag::slice_rows(x, 1, 1).value()(0, 1) == 4.0);
    CHECK(ag::slice_cols(x, 1, 1).value()(1, 0) == 4.0);
    ag::Expr cat = ag::concat_rows({x, x});
    CHECK(cat.rows() == 4);
    ag::Expr catc = ag::concat_cols({x, x});
    CHECK(catc.cols() == 4);
    CHECK(ag::sum_all(x).value()(0, 0) == doctest::Approx(10.0));
  }
  SUBCASE("bias and column scaling broadcast over rows") {
    Mat b(2, 1);
    b << 10.0, 20.0;
    ag::Expr y = ag::add_bias_rows(x, g.constant(b));
    CHECK(y.value()(0, 0) == doctest::Approx(11.0));
    CHECK(y.value()(1, 1) == doctest::Approx(24.0));
    ag::Expr z = ag::scale_cols(x, g.constant(b));
    CHECK(z.value()(0, 1) == doctest::Approx(40.0));
  }
  SUBCASE("layer_norm_rows gives zero mean unit variance rows") {
    ag::Expr y = ag::layer_norm_rows(x);
    CHECK(y.value().row(0).mean() == doctest::Approx(0.0));
    const double var = y.value().row(0).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("loss op values match closed forms") {
  ag::Graph g;
  SUBCASE("uniform cross entropy is log K") {
    Mat z = Mat::Zero(3, 1);
    CHECK(ag::cross_entropy_logits(g.constant(z), 1).scalar() == doctest::Approx(std::log(3.0)));
  }
  SUBCASE("cross entropy rejects out-of-range gold") {
    Mat z = Mat::Zero(3, 1);
    CHECK_THROWS_AS(ag::cross_entropy_logits(g.constant(z), 3), InvalidGold);
    CHECK_THROWS_AS(ag::cross_entropy_logits(g.constant(z), -1), InvalidGold);
  }
  SUBCASE("bce mean matches hand value") {
    Mat z(2, 1);
    z << std::log(9.0), std::log(0.25);
    const double expected = -(std::log(0.9) + std::log(0.8)) / 2.0;
    CHECK(ag::bce_mean_logits(g.constant(z), {0}).scalar() == doctest::Approx(expected));
    CHECK(expected == doctest::Approx(0.164252033486018));
  }
  SUBCASE("bce handles empty gold set") {
    Mat z(2, 1);
    z << -40.0, -40.0;
    CHECK(ag::bce_mean_logits(g.constant(z), {}).scalar() == doctest::Approx(0.0));
  }
}

TEST_CASE("backward requires scalar loss") {
  ParamStore store;
  Tensor& a = add_random(store, "a", 2, 2, 1);
  ag::Graph g;
  ag::Expr x = g.param(a);
  CHECK_THROWS_AS(g.backward(x + x), DimensionMismatch);
}

TEST_CASE("gradcheck elementary ops") {
  ParamStore store;
  add_random(store, "a", 3, 2, 11);
  add_random(store, "b", 3, 2, 12);
  add_random(store, "w", 2, 3, 13);

  SUBCASE("add, hadamard, scale, ones_minus") {
    auto build = [&](ag::Graph& g) {
      ag::Expr a = g.param(store.get("a"));
      ag::Expr b = g.param(store.get("b"));
      ag::Expr y = ag::scale(a * b + a - b, 1.7);
      return ag::sum_all(ag::ones_minus(y) * y);
    };
    CHECK(max_rel_grad_err(store, build) < 1e-4);
  }
  SUBCASE("matmul, transpose, dot") {
    auto build = [&](ag::Graph& g) {
      ag::Expr a = g.param(store.get("a"));
      ag::Expr w = g.param(store.get("w"));
      ag::Expr m = ag::matmul(w, a);  // 2x2
      ag::Expr c0 = ag::slice_cols(m, 0, 1);
      ag::Expr c1 = ag::slice_cols(m, 1, 1);
      return ag::dot(c0, c1) + ag::sum_all(ag::transpose(m));
    };
    CHECK(max_rel_grad_err(store, build) < 1e-4);
  }
  SUBCASE("activations and softmax") {
    auto build = [&](ag::Graph& g) {
      ag::Expr a = g.param(store.get("a"));
      ag::Expr s = ag::sigmoid(a);
      ag::Expr t = ag::tanh_(a);
      ag::Expr r = ag::relu(a);
      ag::Expr col = ag::row_as_col(ag::transpose(a), 0);  // first column of a
      ag::Expr sm = ag::softmax_vec(col);
      Mat probe(3, 1);
      probe << 0.2, -0.5, 1.3;
      return ag::sum_all(s * t + r) + ag::dot(sm, g.constant(probe));
    };
    CHECK(max_rel_grad_err(store, build) < 1e-4);
  }
  SUBCASE("softmax_rows") {
    auto build = [&](ag::Graph& g) {
      ag::Expr w = g.param(store.get("w"));
      ag::Expr sm = ag::softmax_rows(w);
      Mat probe(2, 3);
      probe << 0.3, -1.0, 0.7, 1.1, 0.2, -0.4;
      return ag::sum_all(sm * g.constant(probe));
    };
    CHECK(max_rel_grad_err(store, build) < 1e-4);
  }
  SUBCASE("slices, concats, row extraction") {
    auto build = [&](ag::Graph& g) {
      ag::Expr a = g.param(store.get("a"));
      ag::Expr b = g.param(store.get("b"));
      ag::Expr top = ag::slice_rows(a, 0, 2);
      ag::Expr cat = ag::concat_rows({top, ag::slice_rows(b, 1, 2)});  // 4x2
      ag::Expr wide = ag::concat_cols({cat, cat});                     // 4x4
      ag::Expr r = ag::row_as_col(wide, 2);
      Mat probe(4, 1);
      probe << 1.0, -2.0, 0.5, 0.25;
      return ag::dot(r, g.constant(probe));
    };
    CHECK(max_rel_grad_err(store, build) < 1e-4);
  }
  SUBCASE("bias, column scale, layer norm") {
    ParamStore s2;
    add_random(s2, "x", 3, 4, 21);
    add_random(s2, "bias", 4, 1, 22);
    add_random(s2, "gain", 4, 1, 23);
    auto build = [&](ag::Graph& g) {
      ag::Expr x = g.param(s2.get("x"));
      ag::Expr b = g.param(s2.get("bias"));
      ag::Expr gain = g.param(s2.get("gain"));
      ag::Expr y = ag::add_bias_rows(ag::scale_cols(ag::layer_norm_rows(x), gain), b);
      Mat probe = Mat::Ones(3, 4);
      probe(0, 0) = -1.5;
      probe(2, 3) = 2.0;
      return ag::sum_all(y * g.constant(probe));
    };
    CHECK(max_rel_grad_err(s2, build) < 1e-4);
  }
  SUBCASE("cross entropy and bce") {
    ParamStore s2;
    add_random(s2, "z", 4, 1, 31);
    auto build = [&](ag::Graph& g) {
      ag::Expr z = g.param(s2.get("z"));
      return ag::cross_entropy_logits(z, 2) + ag::bce_mean_logits(z, {0, 3});
    };
    CHECK(max_rel_grad_err(s2, build) < 1e-4);
  }
}

TEST_CASE("lookup accumulates gradients per row") {
  ParamStore store;
  Tensor& emb = store.add("emb", 5, 3);
  fill_normal(emb, 0.0, 1.0, 42);

  auto build = [&](ag::Graph& g) {
    ag::Expr rows = g.lookup(emb, {1, 3, 1});
    Mat probe(3, 3);
    probe << 1, 2, 3, 4, 5, 6, 7, 8, 9;
    return ag::sum_all(rows * g.constant(probe));
  };
  CHECK(max_rel_grad_err(store, build) < 1e-4);

  store.zero_grads();
  ag::Graph g;
  ag::Expr loss = build(g);
  g.backward(loss);
  // Row 1 appears twice: its gradient is the sum of both occurrences.
  CHECK(emb.grad(1, 0) == doctest::Approx(1.0 + 7.0));
  CHECK(emb.grad(3, 1) == doctest::Approx(5.0));
  CHECK(emb.grad(0, 0) == 0.0);
  CHECK(emb.grad(2, 0) == 0.0);
}

TEST_CASE("lookup rejects out-of-range rows") {
  ParamStore store;
  Tensor& emb = store.add("emb", 4, 2);
  ag::Graph g;
  CHECK_THROWS_AS(g.lookup(emb, {0, 4}), DimensionMismatch);
  CHECK_THROWS_AS(g.lookup(emb, {-1}), DimensionMismatch);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  ParamStore store;
  Tensor& a = store.add("a", 1, 1);
  a.value(0, 0) = 2.0;

  auto run = [&]() {
    ag::Graph g;
    ag::Expr x = g.param(a);
    g.backward(ag::sum_all(x * x));  // d/da a^2 = 4
  };
  run();
  CHECK(a.grad(0, 0) == doctest::Approx(4.0));
  run();
  CHECK(a.grad(0, 0) == doctest::Approx(8.0));
  store.zero_grads();
  CHECK(a.grad(0, 0) == 0.0);
}

TEST_CASE("dropout") {
  ParamStore store;
  Tensor& a = store.add("a", 10, 10);
  a.value.setOnes();

  SUBCASE("rate zero is identity") {
    Rng rng(1);
    ag::Graph g;
    ag::Expr x = g.param(a);
    ag::Expr y = ag::dropout(x, 0.0, rng);
    CHECK(y.id == x.id);
  }
  SUBCASE("rate outside [0,1) rejected") {
    Rng rng(1);
    ag::Graph g;
    ag::Expr x = g.param(a);
    CHECK_THROWS_AS(ag::dropout(x, 1.0, rng), ConfigError);
    CHECK_THROWS_AS(ag::dropout(x, -0.1, rng), ConfigError);
  }
  SUBCASE("surviving entries are scaled by 1/(1-rate)") {
    Rng rng(7);
    ag::Graph g;
    ag::Expr x = g.param(a);
    ag::Expr y = ag::dropout(x, 0.4, rng);
    int zeros = 0;
    for (long r = 0; r < 10; ++r) {
      for (long c = 0; c < 10; ++c) {
        const double v = y.value()(r, c);
        if (v == 0.0) {
          ++zeros;
        } else {
          CHECK(v == doctest::Approx(1.0 / 0.6));
        }
      }
    }
    CHECK(zeros > 10);
    CHECK(zeros < 90);
  }
  SUBCASE("backward flows only through kept entries") {
    Rng rng(9);
    store.zero_grads();
    ag::Graph g;
    ag::Expr x = g.param(a);
    ag::Expr y = ag::dropout(x, 0.5, rng);
    g.backward(ag::sum_all(y));
    for (long r = 0; r < 10; ++r) {
      for (long c = 0; c < 10; ++c) {
        const double v = y.value()(r, c);
        const double gr = a.grad(r, c);
        if (v == 0.0) {
          CHECK(gr == 0.0);
        } else {
          CHECK(gr == doctest::Approx(2.0));
        }
      }
    }
  }
}
