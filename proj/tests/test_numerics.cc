#include "milsed/grad_check.h"
#include "milsed/graph.h"

#include "oracles.h"

#include <doctest.h>

#include <cmath>

using namespace milsed;
using testutil::random_matrix;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(Index(rows.size()), Index(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Scalar loss <a, op(x)> with fixed random a, so every output entry matters.
GradCheckReport check_unary(const std::function<Var(Var)>& op, Matrix x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet ps;
  ps.add("x", std::move(x));
  Graph probe;
  const Matrix out = op(probe.constant(ps.at("x").value)).value();
  const Matrix a = random_matrix(out.rows(), out.cols(), rng);
  return grad_check(
      [&](Graph& g) { return sum_all(cwise_mul(op(g.parameter(ps.at("x"))), g.constant(a))); }, ps);
}

}  // namespace

TEST_CASE("forward examples") {
  Graph g;
  CHECK(sigmoid(g.constant(Matrix::Zero(1, 1))).value()(0, 0) == 0.5);
  const Matrix s = softmax_rows(g.constant(Matrix::Zero(3, 1))).value();
  for (Index i = 0; i < 3; ++i) CHECK(s(i, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Matrix m = max_rows(g.constant(mat({{1, 5}, {3, 2}}))).value();
  CHECK(m(0, 0) == 3.0);
  CHECK(m(0, 1) == 5.0);
}

TEST_CASE("backward examples") {
  SUBCASE("sigmoid at zero") {
    ParameterSet ps;
    ps.add("x", Matrix::Zero(1, 1));
    Graph g;
    Var y = sigmoid(g.parameter(ps.at("x")));
    g.backward(y);
    CHECK(ps.at("x").grad(0, 0) == 0.25);
  }
  SUBCASE("mean") {
    ParameterSet ps;
    ps.add("x", Matrix::Constant(5, 1, 2.0));
    Graph g;
    g.backward(mean_rows(g.parameter(ps.at("x"))));
    CHECK(ps.at("x").grad.isApprox(Matrix::Constant(5, 1, 0.2)));
  }
  SUBCASE("attention-pooled sigmoid against central differences") {
    std::mt19937_64 rng(3);
    const Matrix x = random_matrix(4, 3, rng);
    ParameterSet ps;
    ps.add("w", random_matrix(3, 1, rng));
    auto build = [&](Graph& g) {
      Var xv = g.constant(x);
      Var a = softmax_rows(scale(matmul(xv, g.parameter(ps.at("w"))), 1.0 / 3.0));
      Var h = matmul(transpose(a), xv);
      return sum_all(sigmoid(h));
    };
    ps.zero_grad();
    {
      Graph g;
      g.backward(build(g));
    }
    const Matrix analytic = ps.at("w").grad;
    for (Index i = 0; i < 3; ++i) {
      const double saved = ps.at("w").value(i);
      ps.at("w").value(i) = saved + 1e-5;
      Graph gp;
      const double up = build(gp).value()(0, 0);
      ps.at("w").value(i) = saved - 1e-5;
      Graph gm;
      const double dn = build(gm).value()(0, 0);
      ps.at("w").value(i) = saved;
      const double numeric = (up - dn) / 2e-5;
      CHECK(std::abs(analytic(i) - numeric) <= 1e-4 * std::max(std::abs(numeric), 1e-8));
    }
  }
}

TEST_CASE("grad_check report") {
  std::mt19937_64 rng(11);
  SUBCASE("linear layer passes") {
    const Matrix x = random_matrix(3, 2, rng);
    ParameterSet ps;
    ps.add("w", random_matrix(2, 2, rng));
    ps.add("b", random_matrix(1, 2, rng));
    GradCheckReport r = grad_check(
        [&](Graph& g) {
          return sum_all(sigmoid(add_row(matmul(g.constant(x), g.parameter(ps.at("w"))),
                                         g.parameter(ps.at("b")))));
        },
        ps, 1e-5, 1e-4);
    CHECK(r.passed);
    CHECK(r.entries.size() == 2);
    CHECK(r.entries[0].status == GradCheckStatus::kChecked);
  }
  SUBCASE("frozen tensor is skipped") {
    ParameterSet ps;
    ps.add("frozen", Matrix::Ones(2, 2), false);
    ps.add("w", Matrix::Ones(2, 2));
    GradCheckReport r = grad_check(
        [&](Graph& g) {
          return sum_all(cwise_mul(g.parameter(ps.at("frozen")), tanh(g.parameter(ps.at("w")))));
        },
        ps);
    CHECK(r.entries[0].status == GradCheckStatus::kSkipped);
    CHECK(r.entries[1].status == GradCheckStatus::kChecked);
    CHECK(r.passed);
  }
  SUBCASE("max at a tie is unreliable and excluded") {
    ParameterSet ps;
    ps.add("x", mat({{1.0}, {1.0}, {0.0}}));
    GradCheckReport r =
        grad_check([&](Graph& g) { return sum_all(max_rows(g.parameter(ps.at("x")))); }, ps);
    CHECK(r.entries[0].status == GradCheckStatus::kUnreliableAtTie);
    CHECK(r.passed);
  }
  SUBCASE("non-scalar loss and bad step are rejected") {
    ParameterSet ps;
    ps.add("x", Matrix::Ones(2, 1));
    CHECK_THROWS_AS(grad_check([&](Graph& g) { return g.parameter(ps.at("x")); }, ps), ShapeError);
    CHECK_THROWS_AS(
        grad_check([&](Graph& g) { return sum_all(g.parameter(ps.at("x"))); }, ps, 0.0), Error);
  }
}

TEST_CASE("every op passes central differences over 20 seeds") {
  const std::vector<std::pair<const char*, std::function<Var(Var)>>> unary = {
      {"sigmoid", [](Var a) { return sigmoid(a); }},
      {"tanh", [](Var a) { return tanh(a); }},
      {"relu", [](Var a) { return relu(a); }},
      {"softmax_rows", [](Var a) { return softmax_rows(a); }},
      {"max_rows", [](Var a) { return max_rows(a); }},
      {"mean_rows", [](Var a) { return mean_rows(a); }},
      {"sum_rows", [](Var a) { return sum_rows(a); }},
      {"sum_cols", [](Var a) { return sum_cols(a); }},
      {"mean_all", [](Var a) { return mean_all(a); }},
      {"transpose", [](Var a) { return transpose(a); }},
      {"scale", [](Var a) { return scale(a, -1.7); }},
      {"row_block", [](Var a) { return row_block(a, 1, 3); }},
      {"col_block", [](Var a) { return col_block(a, 1, 2); }},
      {"max_pool_rows", [](Var a) { return max_pool_rows(a, 2); }},
      {"fold_rows", [](Var a) { return fold_rows(a, 2); }},
      {"self product", [](Var a) { return cwise_mul(a, a); }},
      {"matmul", [](Var a) { return matmul(a, transpose(a)); }},
      {"add/sub", [](Var a) { return sub(add(a, a), scale(a, 0.5)); }},
      {"row broadcast", [](Var a) {
         Var r = row_block(a, 0, 1);
         return div_row(mul_row(add_row(a, r), r), add_row(scale(sigmoid(r), 1.0), sigmoid(r)));
       }},
      {"vcat", [](Var a) {
         std::vector<Var> parts{row_block(a, 0, 2), sigmoid(a)};
         return vcat(parts);
       }},
  };
  for (const auto& [name, op] : unary) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const Matrix x = random_matrix(6, 4, rng);
      GradCheckReport r = check_unary(op, x, seed + 1000);
      INFO(name << " seed " << seed << "\n" << to_string(r));
      CHECK(r.passed);
    }
  }
}

TEST_CASE("binary cross entropy gradient and clamp") {
  std::mt19937_64 rng(5);
  for (int seed = 0; seed < 20; ++seed) {
    ParameterSet ps;
    ps.add("z", random_matrix(3, 4, rng, -3, 3));
    Matrix y = (random_matrix(3, 4, rng).array() > 0).cast<double>();
    GradCheckReport r = grad_check(
        [&](Graph& g) { return binary_cross_entropy(sigmoid(g.parameter(ps.at("z"))), y); }, ps);
    CHECK(r.passed);
  }
  Graph g;
  const double loss = binary_cross_entropy(g.constant(mat({{1.0, 0.0}})), mat({{1.0, 0.0}}))
                          .value()(0, 0);
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-6);
}

TEST_CASE("batch norm and im2col gradients") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    ParameterSet ps;
    ps.add("x", random_matrix(8, 3, rng));
    ps.add("gamma", random_matrix(1, 3, rng, 0.5, 1.5));
    ps.add("beta", random_matrix(1, 3, rng));
    const Matrix a = random_matrix(8, 3, rng);
    GradCheckReport r = grad_check(
        [&](Graph& g) {
          Var y = batch_norm(g.parameter(ps.at("x")), g.parameter(ps.at("gamma")),
                             g.parameter(ps.at("beta")), 1e-5);
          return sum_all(cwise_mul(tanh(y), g.constant(a)));
        },
        ps);
    INFO(to_string(r));
    CHECK(r.passed);

    ParameterSet qs;
    qs.add("x", random_matrix(2 * 3 * 4, 2, rng));  // two clips, T=3, F=4, 2 channels
    const std::vector<Index> lengths{3, 3};
    const Matrix b = random_matrix(24, 18, rng);
    GradCheckReport r2 = grad_check(
        [&](Graph& g) {
          return sum_all(cwise_mul(im2col3x3(g.parameter(qs.at("x")), lengths, 4), g.constant(b)));
        },
        qs);
    CHECK(r2.passed);
  }
}

TEST_CASE("softmax is a distribution and forward is pure") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const Matrix x = random_matrix(7, 3, rng, -50, 50);
    Graph g1, g2;
    const Matrix s1 = softmax_rows(g1.constant(x)).value();
    const Matrix s2 = softmax_rows(g2.constant(x)).value();
    CHECK((s1.array() == s2.array()).all());
    CHECK((s1.array() > 0.0).all());
    for (Index c = 0; c < 3; ++c) CHECK(std::abs(s1.col(c).sum() - 1.0) <= 1e-12);
  }
  Graph g;
  Matrix big(2, 1);
  big << 1000.0, 0.0;
  const Matrix s = softmax_rows(g.constant(big)).value();
  CHECK(std::isfinite(s(0, 0)));
  CHECK(s(0, 0) == 1.0);
  const VectorX<double> v = softmax(Vector::Zero(4));
  CHECK(v.sum() == doctest::Approx(1.0));
}

TEST_CASE("max ties go to the lowest index") {
  ParameterSet ps;
  ps.add("x", mat({{2.0}, {2.0}, {1.0}}));
  Graph g;
  g.backward(sum_all(max_rows(g.parameter(ps.at("x")))));
  CHECK(ps.at("x").grad(0, 0) == 1.0);
  CHECK(ps.at("x").grad(1, 0) == 0.0);
}

TEST_CASE("graph misuse") {
  Graph g;
  CHECK_THROWS_AS(g.backward(Var()), Error);
  CHECK_THROWS_AS(matmul(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(2, 3))),
                  ShapeError);
  CHECK_THROWS_AS(g.backward(g.constant(Matrix::Ones(2, 1))), ShapeError);
  Var l = sum_all(g.constant(Matrix::Ones(2, 1)));
  g.backward(l);
  CHECK_THROWS_AS(g.backward(l), Error);
}

TEST_CASE("parameter set") {
  ParameterSet ps;
  ps.add("a", Matrix::Ones(2, 2));
  CHECK_THROWS_AS(ps.add("a", Matrix::Ones(1, 1)), Error);
  CHECK_THROWS_AS(ps.at("missing"), Error);
  ParameterSet other;
  other.add("a", Matrix::Zero(2, 2));
  CHECK_FALSE(ps.values_equal(other));
  ps.assign_values(other);
  CHECK(ps.values_equal(other));
  ParameterSet wrong;
  wrong.add("a", Matrix::Zero(3, 2));
  CHECK_THROWS(ps.assign_values(wrong));
}
