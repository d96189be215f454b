#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "rise/autodiff.hpp"
#include "rise/errors.hpp"

using namespace rise;
using namespace rise::ad;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

Eigen::VectorXd flat(const Matrix& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Matrix shaped(const Eigen::VectorXd& v, Eigen::Index r, Eigen::Index c) {
    return Eigen::Map<const Matrix>(v.data(), r, c);
}

// Differentiates `build` with respect to a single leaf `x0` and compares with central differences.
template <typename Build>
double check_unary(const Matrix& x0, Build build) {
    Tape tape;
    Var x = tape.leaf(x0);
    Var out = build(x);
    const Matrix g = tape.backward(out).wrt(x);
    auto f = [&](const Eigen::VectorXd& v) {
        Tape t;
        Var y = t.leaf(shaped(v, x0.rows(), x0.cols()));
        return build(y).scalar();
    };
    return finite_diff_check(f, flat(x0), flat(g), 1e-6);
}

template <typename Build>
double check_binary(const Matrix& a0, const Matrix& b0, Build build) {
    Tape tape;
    Var a = tape.leaf(a0);
    Var b = tape.leaf(b0);
    const Gradients g = tape.backward(build(a, b));
    auto fa = [&](const Eigen::VectorXd& v) {
        Tape t;
        return build(t.leaf(shaped(v, a0.rows(), a0.cols())), t.leaf(b0)).scalar();
    };
    auto fb = [&](const Eigen::VectorXd& v) {
        Tape t;
        return build(t.leaf(a0), t.leaf(shaped(v, b0.rows(), b0.cols()))).scalar();
    };
    return std::max(finite_diff_check(fa, flat(a0), flat(g.wrt(a)), 1e-6),
                    finite_diff_check(fb, flat(b0), flat(g.wrt(b)), 1e-6));
}

}  // namespace

TEST_CASE("square at three has slope six") {
    Tape tape;
    Var x = tape.leaf_scalar(3.0);
    Var y = x * x;
    CHECK(y.scalar() == 9.0);
    CHECK(tape.backward(y).wrt(x)(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("sigmoid edge gate has slope k/4 at its midpoint") {
    for (double k : {10.0, 50.0, 200.0}) {
        Tape tape;
        Var r = tape.leaf_scalar(1.25);
        Var d = tape.constant_scalar(1.25);
        Var gate = sigmoid((r - d) * tape.constant_scalar(k));
        CHECK(gate.scalar() == 0.5);
        CHECK(tape.backward(gate).wrt(r)(0, 0) == doctest::Approx(k / 4.0).epsilon(1e-14));
    }
}

TEST_CASE("every primitive matches central differences") {
    std::mt19937_64 rng(5);
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(3, 4, rng);
    const Matrix pos = random_matrix(3, 4, rng, 0.2, 2.0);
    const Matrix unit = random_matrix(3, 4, rng, 0.05, 0.95);
    const Matrix col = random_matrix(3, 1, rng);
    const Matrix row = random_matrix(1, 4, rng);
    const Matrix w = random_matrix(4, 2, rng);

    CHECK(check_binary(a, b, [](Var x, Var y) { return sum(x + y * y); }) < 1e-7);
    CHECK(check_binary(a, b, [](Var x, Var y) { return sum((x - y) * (x - y)); }) < 1e-7);
    CHECK(check_binary(a, pos, [](Var x, Var y) { return sum(x / y); }) < 1e-7);
    CHECK(check_binary(a, col, [](Var x, Var y) { return sum(square(x * y)); }) < 1e-7);
    CHECK(check_binary(a, row, [](Var x, Var y) { return sum(square(x + y)); }) < 1e-7);
    CHECK(check_binary(a, w, [](Var x, Var y) { return sum(square(matmul(x, y))); }) < 1e-7);
    CHECK(check_unary(a, [](Var x) { return sum(square(affine(x, -2.5, 0.75))); }) < 1e-7);
    CHECK(check_unary(a, [](Var x) { return sum(exp(x)); }) < 1e-7);
    CHECK(check_unary(pos, [](Var x) { return sum(log(x)); }) < 1e-7);
    CHECK(check_unary(a, [](Var x) { return sum(square(sigmoid(x))); }) < 1e-7);
    CHECK(check_unary(a, [](Var x) { return sum(square(shifted_softplus(x))); }) < 1e-7);
    CHECK(check_unary(pos, [](Var x) { return sum(pow(x, -1.7)); }) < 1e-7);
    CHECK(check_unary(unit, [](Var x) { return sum(binary_entropy(x)); }) < 1e-7);

    const IndexList gather_idx = make_index({2, 0, 0, 1, 2});
    CHECK(check_unary(a, [&](Var x) { return sum(square(gather_rows(x, gather_idx))); }) < 1e-7);
    const IndexList scatter_idx = make_index({1, 1, 0});
    CHECK(check_unary(a, [&](Var x) { return sum(square(scatter_add_rows(x, scatter_idx, 4))); }) < 1e-7);
}

TEST_CASE("scatter accumulates into the addressed rows") {
    Tape tape;
    Matrix m(3, 1);
    m << 1.0, 2.0, 4.0;
    Var x = tape.leaf(m);
    Var s = scatter_add_rows(x, make_index({2, 0, 2}), 3);
    CHECK(s.value()(0, 0) == 2.0);
    CHECK(s.value()(1, 0) == 0.0);
    CHECK(s.value()(2, 0) == 5.0);
}

TEST_CASE("backward rejects non-scalar outputs") {
    Tape tape;
    Var x = tape.leaf(Matrix::Ones(2, 1));
    CHECK_THROWS_AS(tape.backward(x * x), ContractError);
}

TEST_CASE("a non-finite adjoint names the primitive") {
    Tape tape;
    Var x = tape.leaf(Matrix::Zero(1, 1));
    Var y = sum(pow(x, 0.5));
    try {
        (void)tape.backward(y);
        FAIL("expected a numeric failure");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("pow") != std::string::npos);
    }
}

TEST_CASE("inputs off every path to the output get exactly zero gradient") {
    Tape tape;
    Var used = tape.leaf(Matrix::Constant(2, 2, 0.3));
    Var unused = tape.leaf(Matrix::Constant(3, 1, 1.0));
    Var side = exp(unused);
    (void)side;
    const Gradients g = tape.backward(sum(square(used)));
    CHECK(g.wrt(unused).isZero(0.0));
    CHECK(g.wrt(unused).rows() == 3);
}

TEST_CASE("gradient of a sum is the sum of gradients") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x0 = random_matrix(4, 3, rng);
        const Matrix w0 = random_matrix(3, 2, rng);
        auto f = [&](Var x) { return sum(sigmoid(matmul(x, x.tape()->constant(w0)))); };
        auto g = [](Var x) { return sum(exp(affine(x, 0.5))); };
        Tape t1, t2, t3;
        Var a = t1.leaf(x0), b = t2.leaf(x0), c = t3.leaf(x0);
        const Matrix ga = t1.backward(f(a)).wrt(a);
        const Matrix gb = t2.backward(g(b)).wrt(b);
        const Matrix gc = t3.backward(f(c) + g(c)).wrt(c);
        CHECK((gc - (ga + gb)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("replay after set_value matches a fresh recording") {
    std::mt19937_64 rng(2);
    const Matrix x0 = random_matrix(5, 2, rng), x1 = random_matrix(5, 2, rng);
    auto build = [](Tape& t, Var x) { return sum(log(affine(sigmoid(x), 1.0, 0.1)) * t.constant_scalar(2.0)); };
    Tape tape;
    Var x = tape.leaf(x0);
    Var y = build(tape, x);
    tape.set_value(x, x1);
    tape.replay();
    Tape fresh;
    Var x_fresh = fresh.leaf(x1);
    Var z = build(fresh, x_fresh);
    CHECK(y.scalar() == z.scalar());
    CHECK(tape.backward(y).wrt(x) == fresh.backward(z).wrt(x_fresh));
}

TEST_CASE("backward is reproducible bit for bit") {
    std::mt19937_64 rng(3);
    const Matrix x0 = random_matrix(6, 4, rng);
    Tape tape;
    Var x = tape.leaf(x0);
    Var y = sum(square(scatter_add_rows(sigmoid(x), make_index({0, 1, 0, 2, 1, 0}), 3)));
    CHECK(tape.backward(y).wrt(x) == tape.backward(y).wrt(x));
}

TEST_CASE("finite-difference check is exact for linear maps") {
    Eigen::VectorXd c(3);
    c << 2.0, -1.0, 0.5;
    auto f = [&](const Eigen::VectorXd& v) { return c.dot(v) + 4.0; };
    CHECK(finite_diff_check(f, Eigen::VectorXd::Ones(3), c, 1e-5) < 1e-10);
}

TEST_CASE("finite-difference check surfaces NaN probes") {
    auto f = [](const Eigen::VectorXd& v) { return std::log(v(0)); };
    CHECK_THROWS_AS(finite_diff_check(f, Eigen::VectorXd::Constant(1, 1e-6), Eigen::VectorXd::Ones(1), 1e-5),
                    NumericError);
}

TEST_CASE("scalar helpers are stable in the tails") {
    CHECK(sigmoid(-800.0) == 0.0);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(softplus(800.0) == 800.0);
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(binary_entropy(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("Adam drives a quadratic to its minimum") {
    Matrix x = Matrix::Constant(2, 1, 3.0);
    Adam adam(0.1);
    Matrix* params[] = {&x};
    for (int i = 0; i < 2000; ++i) {
        const Matrix grad = 2.0 * (x.array() - 1.0).matrix();
        const Matrix grads[] = {grad};
        adam.step(params, grads);
    }
    CHECK(std::abs(x(0, 0) - 1.0) < 1e-3);
    CHECK(std::abs(x(1, 0) - 1.0) < 1e-3);
}
