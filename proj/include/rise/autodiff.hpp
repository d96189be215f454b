#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records primitives in creation order, so parents always precede
// children. Values are Eigen matrices; scalars are 1x1. Elementwise binary
// primitives broadcast along any dimension of size 1 (bias rows, mask
// columns, 1x1 scalars).

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace rise::ad {

using Matrix = Eigen::MatrixXd;
using IndexList = std::shared_ptr<const std::vector<int>>;

enum class Op {
    leaf,
    constant,
    add,
    sub,
    mul,
    div,
    matmul,
    affine,
    exp,
    log,
    sigmoid,
    softplus,
    pow,
    sum,
    gather_rows,
    scatter_add_rows,
    binary_entropy,
};

std::string_view op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    double scalar() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Adjoints of every node reached by a backward pass.
class Gradients {
public:
    /// Gradient with respect to `v`; zeros of v's shape if v is not upstream of the output.
    Matrix wrt(Var v) const;

private:
    friend class Tape;
    std::vector<Matrix> adjoints_;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input.
    Var leaf(Matrix value);
    Var leaf_scalar(double value) { return leaf(Matrix::Constant(1, 1, value)); }
    /// Non-differentiable input; nothing downstream of constants alone is backpropagated.
    Var constant(Matrix value);
    Var constant_scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

    std::size_t size() const { return nodes_.size(); }
    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    Op op(std::size_t id) const { return nodes_[id].op; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Overwrites a leaf or constant value; call replay() to propagate.
    void set_value(Var input, Matrix value);

    /// Recomputes every derived node from the leaves and constants, in order.
    void replay();

    /// Reverse pass from a 1x1 node. Throws ContractError for non-scalar
    /// outputs and NumericError naming the primitive that produced a
    /// non-finite adjoint.
    Gradients backward(Var output) const;

    // Primitive recording; the free functions below are the public spelling.
    Var record(Op op, std::initializer_list<Var> parents, double s0 = 0.0, double s1 = 0.0,
               IndexList index = nullptr, Eigen::Index out_rows = 0);

private:
    struct Node {
        Op op = Op::constant;
        std::array<std::size_t, 2> parents{};
        int arity = 0;
        double s0 = 0.0;
        double s1 = 0.0;
        IndexList index;
        Eigen::Index out_rows = 0;
        bool requires_grad = false;
        Matrix value;
    };

    Matrix compute(const Node& node) const;
    void accumulate(std::vector<Matrix>& adjoints, std::size_t target, const Matrix& contribution,
                    Op via) const;

    std::vector<Node> nodes_;
};

// Elementwise arithmetic with size-1 broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

/// scale * a + shift with constant scalars.
Var affine(Var a, double scale, double shift = 0.0);
inline Var operator-(Var a) { return affine(a, -1.0); }
inline Var operator*(double s, Var a) { return affine(a, s); }
inline Var operator+(Var a, double s) { return affine(a, 1.0, s); }
inline Var operator-(Var a, double s) { return affine(a, 1.0, -s); }

Var matmul(Var a, Var b);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
/// softplus(x) - ln 2, zero at the origin.
Var shifted_softplus(Var a);
Var pow(Var a, double exponent);
Var square(Var a);
/// Sum of all entries, as a 1x1 node.
Var sum(Var a);

/// out.row(e) = a.row(index[e]).
Var gather_rows(Var a, IndexList index);
/// out.row(index[e]) += a.row(e), accumulated in increasing e. Output has `rows` rows.
Var scatter_add_rows(Var a, IndexList index, Eigen::Index rows);

/// Elementwise -x ln x - (1-x) ln(1-x), with 0 ln 0 := 0.
Var binary_entropy(Var a);

IndexList make_index(std::vector<int> values);

/// Numerically stable logistic function.
double sigmoid(double x);
double softplus(double x);
double binary_entropy(double x);

/// Adam on a list of parameter matrices; moments are keyed by list position.
class Adam {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                  double epsilon = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(std::span<Matrix* const> params, std::span<const Matrix> grads);
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    long step_count_ = 0;
    std::vector<Matrix> m_, v_;
};

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate.
Eigen::VectorXd central_differences(const ScalarFunction& f, const Eigen::VectorXd& x,
                                    double epsilon);

/// max_i |analytic_i - fd_i| / max(|analytic_i|, 1e-8).
double finite_diff_check(const ScalarFunction& f, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& analytic, double epsilon);

}  // namespace rise::ad
