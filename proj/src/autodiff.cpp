#include "rise/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rise/errors.hpp"

namespace rise::ad {

namespace {

// Adjoints of entries exactly at 0 or 1 would be infinite; clamp before the log.
constexpr double kEntropyClamp = 1e-12;

void check_broadcast(const Matrix& a, const Matrix& b, Op op) {
    const bool rows_ok = a.rows() == b.rows() || a.rows() == 1 || b.rows() == 1;
    const bool cols_ok = a.cols() == b.cols() || a.cols() == 1 || b.cols() == 1;
    if (!rows_ok || !cols_ok)
        throw ContractError(std::string("shape mismatch in ") + std::string(op_name(op)) + ": " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() == rows && m.cols() == cols) return m;
    return m.replicate(rows / m.rows(), cols / m.cols());
}

/// Sums `g` down to `rows` x `cols` along broadcast dimensions.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    Matrix out = g;
    if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
    if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
    return out;
}

}  // namespace

std::string_view op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::constant: return "constant";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::div: return "div";
        case Op::matmul: return "matmul";
        case Op::affine: return "affine";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::sigmoid: return "sigmoid";
        case Op::softplus: return "softplus";
        case Op::pow: return "pow";
        case Op::sum: return "sum";
        case Op::gather_rows: return "gather_rows";
        case Op::scatter_add_rows: return "scatter_add_rows";
        case Op::binary_entropy: return "binary_entropy";
    }
    return "unknown";
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double binary_entropy(double x) {
    double h = 0.0;
    if (x > 0.0) h -= x * std::log(x);
    if (x < 1.0) h -= (1.0 - x) * std::log1p(-x);
    return h;
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw ContractError("node is not a scalar");
    return v(0, 0);
}

Matrix Gradients::wrt(Var v) const {
    const auto id = v.id();
    if (id < adjoints_.size() && adjoints_[id].size() != 0) return adjoints_[id];
    const auto [r, c] = shapes_.at(id);
    return Matrix::Zero(r, c);
}

Var Tape::leaf(Matrix value) {
    Node node;
    node.op = Op::leaf;
    node.requires_grad = true;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
    Node node;
    node.op = Op::constant;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::set_value(Var input, Matrix value) {
    Node& node = nodes_.at(input.id());
    if (node.op != Op::leaf && node.op != Op::constant)
        throw ContractError("only leaves and constants can be reassigned");
    if (value.rows() != node.value.rows() || value.cols() != node.value.cols())
        throw ContractError("reassigned value changes shape");
    node.value = std::move(value);
}

Var Tape::record(Op op, std::initializer_list<Var> parents, double s0, double s1,
                 IndexList index, Eigen::Index out_rows) {
    Node node;
    node.op = op;
    node.s0 = s0;
    node.s1 = s1;
    node.index = std::move(index);
    node.out_rows = out_rows;
    for (const Var& p : parents) {
        if (p.tape() != this) throw ContractError("operand belongs to a different tape");
        node.parents[static_cast<std::size_t>(node.arity++)] = p.id();
        node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
    }
    node.value = compute(node);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Matrix Tape::compute(const Node& node) const {
    const Matrix& a = nodes_[node.parents[0]].value;
    switch (node.op) {
        case Op::leaf:
        case Op::constant:
            return node.value;
        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div: {
            const Matrix& b = nodes_[node.parents[1]].value;
            check_broadcast(a, b, node.op);
            const Eigen::Index r = std::max(a.rows(), b.rows());
            const Eigen::Index c = std::max(a.cols(), b.cols());
            const Matrix ea = expand(a, r, c);
            const Matrix eb = expand(b, r, c);
            switch (node.op) {
                case Op::add: return ea + eb;
                case Op::sub: return ea - eb;
                case Op::mul: return ea.cwiseProduct(eb);
                default: return ea.cwiseQuotient(eb);
            }
        }
        case Op::matmul: {
            const Matrix& b = nodes_[node.parents[1]].value;
            if (a.cols() != b.rows())
                throw ContractError("matmul inner dimensions differ: " + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()));
            return a * b;
        }
        case Op::affine:
            return (node.s0 * a.array() + node.s1).matrix();
        case Op::exp:
            return a.array().exp().matrix();
        case Op::log:
            return a.array().log().matrix();
        case Op::sigmoid:
            return a.unaryExpr([](double x) { return sigmoid(x); });
        case Op::softplus:
            return a.unaryExpr([](double x) { return softplus(x); });
        case Op::pow: {
            const double p = node.s0;
            return a.unaryExpr([p](double x) { return std::pow(x, p); });
        }
        case Op::sum:
            return Matrix::Constant(1, 1, a.sum());
        case Op::gather_rows: {
            const auto& idx = *node.index;
            Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
            for (std::size_t e = 0; e < idx.size(); ++e) {
                if (idx[e] < 0 || idx[e] >= a.rows()) throw ContractError("gather index out of range");
                out.row(static_cast<Eigen::Index>(e)) = a.row(idx[e]);
            }
            return out;
        }
        case Op::scatter_add_rows: {
            const auto& idx = *node.index;
            if (static_cast<Eigen::Index>(idx.size()) != a.rows())
                throw ContractError("scatter index length does not match rows");
            Matrix out = Matrix::Zero(node.out_rows, a.cols());
            for (std::size_t e = 0; e < idx.size(); ++e) {
                if (idx[e] < 0 || idx[e] >= node.out_rows)
                    throw ContractError("scatter index out of range");
                out.row(idx[e]) += a.row(static_cast<Eigen::Index>(e));
            }
            return out;
        }
        case Op::binary_entropy:
            return a.unaryExpr([](double x) { return binary_entropy(x); });
    }
    throw ContractError("unknown primitive");
}

void Tape::replay() {
    for (auto& node : nodes_) {
        if (node.op == Op::leaf || node.op == Op::constant) continue;
        node.value = compute(node);
    }
}

void Tape::accumulate(std::vector<Matrix>& adjoints, std::size_t target, const Matrix& contribution,
                      Op via) const {
    if (!nodes_[target].requires_grad) return;
    if (!contribution.allFinite())
        throw NumericError("non-finite gradient produced by primitive '" +
                           std::string(op_name(via)) + "'");
    Matrix& slot = adjoints[target];
    if (slot.size() == 0)
        slot = contribution;
    else
        slot += contribution;
}

Gradients Tape::backward(Var output) const {
    if (output.tape() != this) throw ContractError("output belongs to a different tape");
    const Matrix& out_value = nodes_[output.id()].value;
    if (out_value.rows() != 1 || out_value.cols() != 1)
        throw ContractError("backward requires a scalar (1x1) output");
    if (!out_value.allFinite())
        throw NumericError("non-finite output value from primitive '" +
                           std::string(op_name(nodes_[output.id()].op)) + "'");

    Gradients grads;
    grads.adjoints_.resize(output.id() + 1);
    grads.shapes_.reserve(nodes_.size());
    for (const auto& n : nodes_) grads.shapes_.emplace_back(n.value.rows(), n.value.cols());
    auto& adj = grads.adjoints_;
    adj[output.id()] = Matrix::Ones(1, 1);

    for (std::size_t id = output.id() + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!node.requires_grad || adj[id].size() == 0) continue;
        const Matrix& g = adj[id];
        const std::size_t pa = node.parents[0];
        const std::size_t pb = node.parents[1];
        switch (node.op) {
            case Op::leaf:
            case Op::constant:
                break;
            case Op::add:
            case Op::sub:
            case Op::mul:
            case Op::div: {
                const Matrix& a = nodes_[pa].value;
                const Matrix& b = nodes_[pb].value;
                const Eigen::Index r = g.rows();
                const Eigen::Index c = g.cols();
                if (node.op == Op::add || node.op == Op::sub) {
                    accumulate(adj, pa, reduce_to(g, a.rows(), a.cols()), node.op);
                    Matrix gb = reduce_to(g, b.rows(), b.cols());
                    if (node.op == Op::sub) gb = -gb;
                    accumulate(adj, pb, gb, node.op);
                } else if (node.op == Op::mul) {
                    if (nodes_[pa].requires_grad)
                        accumulate(adj, pa,
                                   reduce_to(g.cwiseProduct(expand(b, r, c)), a.rows(), a.cols()),
                                   node.op);
                    if (nodes_[pb].requires_grad)
                        accumulate(adj, pb,
                                   reduce_to(g.cwiseProduct(expand(a, r, c)), b.rows(), b.cols()),
                                   node.op);
                } else {
                    const Matrix eb = expand(b, r, c);
                    if (nodes_[pa].requires_grad)
                        accumulate(adj, pa, reduce_to(g.cwiseQuotient(eb), a.rows(), a.cols()),
                                   node.op);
                    if (nodes_[pb].requires_grad) {
                        const Matrix ea = expand(a, r, c);
                        const Matrix d = -(g.array() * ea.array() / (eb.array() * eb.array())).matrix();
                        accumulate(adj, pb, reduce_to(d, b.rows(), b.cols()), node.op);
                    }
                }
                break;
            }
            case Op::matmul: {
                const Matrix& a = nodes_[pa].value;
                const Matrix& b = nodes_[pb].value;
                if (nodes_[pa].requires_grad) accumulate(adj, pa, g * b.transpose(), node.op);
                if (nodes_[pb].requires_grad) accumulate(adj, pb, a.transpose() * g, node.op);
                break;
            }
            case Op::affine:
                accumulate(adj, pa, node.s0 * g, node.op);
                break;
            case Op::exp:
                accumulate(adj, pa, g.cwiseProduct(node.value), node.op);
                break;
            case Op::log:
                accumulate(adj, pa, g.cwiseQuotient(nodes_[pa].value), node.op);
                break;
            case Op::sigmoid: {
                const auto& s = node.value.array();
                accumulate(adj, pa, (g.array() * s * (1.0 - s)).matrix(), node.op);
                break;
            }
            case Op::softplus: {
                const Matrix s = nodes_[pa].value.unaryExpr([](double x) { return sigmoid(x); });
                accumulate(adj, pa, g.cwiseProduct(s), node.op);
                break;
            }
            case Op::pow: {
                const double p = node.s0;
                const Matrix d =
                    nodes_[pa].value.unaryExpr([p](double x) { return p * std::pow(x, p - 1.0); });
                accumulate(adj, pa, g.cwiseProduct(d), node.op);
                break;
            }
            case Op::sum: {
                const Matrix& a = nodes_[pa].value;
                accumulate(adj, pa, Matrix::Constant(a.rows(), a.cols(), g(0, 0)), node.op);
                break;
            }
            case Op::gather_rows: {
                const Matrix& a = nodes_[pa].value;
                const auto& idx = *node.index;
                Matrix d = Matrix::Zero(a.rows(), a.cols());
                for (std::size_t e = 0; e < idx.size(); ++e)
                    d.row(idx[e]) += g.row(static_cast<Eigen::Index>(e));
                accumulate(adj, pa, d, node.op);
                break;
            }
            case Op::scatter_add_rows: {
                const auto& idx = *node.index;
                Matrix d(static_cast<Eigen::Index>(idx.size()), g.cols());
                for (std::size_t e = 0; e < idx.size(); ++e)
                    d.row(static_cast<Eigen::Index>(e)) = g.row(idx[e]);
                accumulate(adj, pa, d, node.op);
                break;
            }
            case Op::binary_entropy: {
                const Matrix d = nodes_[pa].value.unaryExpr([](double x) {
                    const double c = std::clamp(x, kEntropyClamp, 1.0 - kEntropyClamp);
                    return std::log1p(-c) - std::log(c);
                });
                accumulate(adj, pa, g.cwiseProduct(d), node.op);
                break;
            }
        }
    }
    return grads;
}

namespace {
Tape& tape_of(Var a) {
    if (!a.valid()) throw ContractError("operation on an unbound variable");
    return *a.tape();
}
}  // namespace

Var add(Var a, Var b) { return tape_of(a).record(Op::add, {a, b}); }
Var sub(Var a, Var b) { return tape_of(a).record(Op::sub, {a, b}); }
Var mul(Var a, Var b) { return tape_of(a).record(Op::mul, {a, b}); }
Var div(Var a, Var b) { return tape_of(a).record(Op::div, {a, b}); }
Var affine(Var a, double scale, double shift) {
    return tape_of(a).record(Op::affine, {a}, scale, shift);
}
Var matmul(Var a, Var b) { return tape_of(a).record(Op::matmul, {a, b}); }
Var exp(Var a) { return tape_of(a).record(Op::exp, {a}); }
Var log(Var a) { return tape_of(a).record(Op::log, {a}); }
Var sigmoid(Var a) { return tape_of(a).record(Op::sigmoid, {a}); }
Var softplus(Var a) { return tape_of(a).record(Op::softplus, {a}); }
Var shifted_softplus(Var a) { return affine(softplus(a), 1.0, -std::log(2.0)); }
Var pow(Var a, double exponent) { return tape_of(a).record(Op::pow, {a}, exponent); }
Var square(Var a) { return mul(a, a); }
Var sum(Var a) { return tape_of(a).record(Op::sum, {a}); }
Var gather_rows(Var a, IndexList index) {
    if (!index) throw ContractError("gather_rows needs an index");
    return tape_of(a).record(Op::gather_rows, {a}, 0.0, 0.0, std::move(index));
}
Var scatter_add_rows(Var a, IndexList index, Eigen::Index rows) {
    if (!index) throw ContractError("scatter_add_rows needs an index");
    return tape_of(a).record(Op::scatter_add_rows, {a}, 0.0, 0.0, std::move(index), rows);
}
Var binary_entropy(Var a) { return tape_of(a).record(Op::binary_entropy, {a}); }

IndexList make_index(std::vector<int> values) {
    return std::make_shared<const std::vector<int>>(std::move(values));
}

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size()) throw ContractError("Adam: params/grads length mismatch");
    if (m_.empty()) {
        for (const Matrix* p : params) {
            m_.push_back(Matrix::Zero(p->rows(), p->cols()));
            v_.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
    }
    if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed");
    ++step_count_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
        params[i]->array() -=
            lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

Eigen::VectorXd central_differences(const ScalarFunction& f, const Eigen::VectorXd& x,
                                    double epsilon) {
    Eigen::VectorXd out(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + epsilon;
        const double up = f(probe);
        probe(i) = x(i) - epsilon;
        const double down = f(probe);
        probe(i) = x(i);
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("function is not finite at probe coordinate " + std::to_string(i));
        out(i) = (up - down) / (2.0 * epsilon);
    }
    return out;
}

double finite_diff_check(const ScalarFunction& f, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& analytic, double epsilon) {
    if (analytic.size() != x.size()) throw ContractError("analytic gradient has the wrong length");
    const Eigen::VectorXd fd = central_differences(f, x, epsilon);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double err = std::abs(analytic(i) - fd(i)) / std::max(std::abs(analytic(i)), 1e-8);
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace rise::ad
