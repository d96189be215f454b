#include "rise/explainers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include <json.hpp>

#include "rise/errors.hpp"
#include "rise/parallel.hpp"
#include "rise/rng.hpp"

namespace rise {

using ad::Matrix;
using ad::Var;

namespace {

std::vector<double> to_vector(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

void check_ratio(double budget_ratio) {
    if (!std::isfinite(budget_ratio) || budget_ratio < 0.0)
        throw ContractError("budget ratio must be a finite nonnegative number");
}

void check_alignment(const MolecularGraph& graph, const DirectedEdgeSet& edges) {
    if (edges.node_count != static_cast<int>(graph.node_count()))
        throw ContractError("edge set and graph disagree on node count");
}

Eigen::VectorXd gaussian_jitter(Eigen::Index n, double sigma, Rng& rng) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    if (sigma <= 0.0) return v;
    std::normal_distribution<double> g(0.0, sigma);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

ad::IndexList sources(const DirectedEdgeSet& edges) {
    std::vector<int> s;
    s.reserve(edges.size());
    for (const auto& e : edges.edges) s.push_back(e.source);
    return ad::make_index(std::move(s));
}

ad::IndexList targets(const DirectedEdgeSet& edges) {
    std::vector<int> t;
    t.reserve(edges.size());
    for (const auto& e : edges.edges) t.push_back(e.target);
    return ad::make_index(std::move(t));
}

Matrix edge_distances(const DirectedEdgeSet& edges) {
    Matrix d(static_cast<Eigen::Index>(edges.size()), 1);
    for (std::size_t e = 0; e < edges.size(); ++e) d(static_cast<Eigen::Index>(e), 0) = edges.edges[e].distance;
    return d;
}

/// ((pred − Y)/s)^2 on the tape.
Var scaled_squared_error(Var prediction, double target, double scale) {
    return ad::square(ad::affine(prediction, 1.0 / scale, -target / scale));
}

double safe_scale(const BackboneParams& params) {
    return params.target_scale > 0.0 ? params.target_scale : 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Radius construction

Eigen::VectorXd rise_radii(const Eigen::VectorXd& theta, const Eigen::VectorXd& omega, double budget) {
    if (theta.size() != omega.size() || theta.size() == 0) throw ContractError("theta and omega must match in length");
    if (!theta.allFinite() || !omega.allFinite()) throw ContractError("theta and omega must be finite");
    if (!(budget >= 0.0) || !std::isfinite(budget)) throw ContractError("budget must be finite and nonnegative");
    const Eigen::ArrayXd e = (theta.array() - theta.maxCoeff()).exp();
    const Eigen::ArrayXd softmax = e / e.sum();
    const Eigen::ArrayXd gate = omega.unaryExpr([](double x) { return ad::sigmoid(x); }).array();
    return (budget * softmax * gate).matrix();
}

double rise_budget(const MolecularGraph& graph, double budget_ratio, BudgetUnits units) {
    check_ratio(budget_ratio);
    return units == BudgetUnits::angstrom ? budget_ratio * graph.construction_radii.sum()
                                          : budget_ratio * static_cast<double>(graph.node_count());
}

Eigen::VectorXd effective_radii(const Eigen::VectorXd& m_r, const MolecularGraph& graph, BudgetUnits units) {
    if (m_r.size() != static_cast<Eigen::Index>(graph.node_count()))
        throw ContractError("radius mask length does not match the node count");
    if (units == BudgetUnits::angstrom) return m_r;
    return m_r.cwiseProduct(graph.construction_radii);
}

EdgeMask rise_edge_mask(const Eigen::VectorXd& radii, const DistanceMatrix& distances, const DirectedEdgeSet& edges,
                        double k) {
    if (!(k > 0.0)) throw ContractError("sharpness k must be positive");
    if (radii.size() != static_cast<Eigen::Index>(distances.size()))
        throw ContractError("radius vector does not match the distance matrix");
    EdgeMask mask{MaskKind::soft, {}};
    mask.values.reserve(edges.size());
    for (const auto& e : edges.edges)
        mask.values.push_back(ad::sigmoid(k * (radii(e.source) - distances(e.source, e.target))));
    return mask;
}

EdgeMask dpg_hard_mask(const Eigen::VectorXd& radii, const DirectedEdgeSet& edges) {
    if (radii.size() != edges.node_count) throw ContractError("radius vector does not match the node count");
    EdgeMask mask{MaskKind::hard, {}};
    mask.values.reserve(edges.size());
    for (const auto& e : edges.edges) mask.values.push_back(e.distance < radii(e.source) ? 1.0 : 0.0);
    return mask;
}

// ---------------------------------------------------------------------------
// Results

namespace {

ExplanationResult make_result(std::string explainer, const DirectedEdgeSet& edges, EdgeMask soft, EdgeMask hard) {
    ExplanationResult r;
    r.explainer = std::move(explainer);
    r.original_edge_count = edges.size();
    r.kept = edges.select(hard.values);
    r.edges_preserved_fraction =
        edges.empty() ? 1.0 : static_cast<double>(r.kept.size()) / static_cast<double>(edges.size());
    r.soft = std::move(soft);
    r.hard = std::move(hard);
    return r;
}

void attach_predictions(ExplanationResult& r, const MaskedForward& model) {
    r.soft_prediction = model.predict(r.soft.values);
    r.hard_prediction = model.predict(r.hard.values);
}

}  // namespace

std::string explanation_json(const ExplanationResult& r, const std::string& molecule_id) {
    nlohmann::ordered_json j;
    j["schema_version"] = kExplanationSchemaVersion;
    j["explainer"] = r.explainer;
    if (!molecule_id.empty()) j["molecule"] = molecule_id;
    j["original_edge_count"] = r.original_edge_count;
    j["kept_edge_count"] = r.kept.size();
    j["edges_preserved_fraction"] = r.edges_preserved_fraction;
    auto kept = nlohmann::ordered_json::array();
    for (const auto& e : r.kept.edges) kept.push_back({e.source, e.target});
    j["kept_edges"] = kept;
    if (r.radii) j["radii"] = to_vector(*r.radii);
    j["soft_mask"] = r.soft.values;
    j["soft_prediction"] = r.soft_prediction;
    j["hard_prediction"] = r.hard_prediction;
    j["trace"] = r.trace;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// RISE

double RiseConfig::k_at(int epoch) const {
    if (!k_ramp) return k;
    if (epochs <= 1) return k_end;
    const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return k_start + t * (k_end - k_start);
}

void RiseConfig::validate() const {
    if (!(k > 0.0) || !(k_start > 0.0) || !(k_end > 0.0)) throw ContractError("sharpness must be positive");
    if (epochs < 0) throw ContractError("epochs must be nonnegative");
    if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    if (restarts < 1) throw ContractError("restarts must be at least 1");
    if (!(restart_noise >= 0.0)) throw ContractError("restart noise must be nonnegative");
    if (budget && !(*budget >= 0.0)) throw ContractError("budget must be nonnegative");
}

double prediction_loss(double prediction, double target, const BackboneParams& params) {
    const double r = (prediction - target) / safe_scale(params);
    return r * r;
}

namespace {

/// Tape of the RISE objective; theta/omega, the softmax shift and k are
/// updated in place and replayed.
class RiseTape {
public:
    RiseTape(const MaskedForward& model, const BackboneParams& params, const MolecularGraph& graph,
             const DirectedEdgeSet& edges, double target, double budget, BudgetUnits units) {
        const auto n = static_cast<Eigen::Index>(graph.node_count());
        theta_ = tape_.leaf(Matrix::Zero(n, 1));
        omega_ = tape_.leaf(Matrix::Zero(n, 1));
        shift_ = tape_.constant_scalar(0.0);
        k_ = tape_.constant_scalar(1.0);
        const Var e = ad::exp(theta_ - shift_);
        const Var softmax = e / ad::sum(e);
        Var radii = ad::affine(softmax * ad::sigmoid(omega_), budget);
        if (units == BudgetUnits::fractional) radii = radii * tape_.constant(graph.construction_radii);
        radii_ = radii;
        const Var d = tape_.constant(edge_distances(edges));
        mask_ = ad::sigmoid((ad::gather_rows(radii, sources(edges)) - d) * k_);
        prediction_ = model.prediction(tape_, mask_);
        loss_ = scaled_squared_error(prediction_, target, safe_scale(params));
    }

    double evaluate(const Eigen::VectorXd& theta, const Eigen::VectorXd& omega, double k) {
        tape_.set_value(theta_, theta);
        tape_.set_value(omega_, omega);
        tape_.set_value(shift_, Matrix::Constant(1, 1, theta.maxCoeff()));
        tape_.set_value(k_, Matrix::Constant(1, 1, k));
        tape_.replay();
        return loss_.scalar();
    }

    std::pair<Matrix, Matrix> gradients() const {
        const ad::Gradients g = tape_.backward(loss_);
        return {g.wrt(theta_), g.wrt(omega_)};
    }

    std::vector<double> mask() const { return to_vector(mask_.value()); }
    double prediction() const { return prediction_.scalar(); }

private:
    ad::Tape tape_;
    Var theta_, omega_, shift_, k_, radii_, mask_, prediction_, loss_;
};

}  // namespace

RiseObjective rise_objective(const MaskedForward& model, const BackboneParams& params, const MolecularGraph& graph,
                             const DirectedEdgeSet& edges, double target, const RadiusMask& mask) {
    check_alignment(graph, edges);
    if (edges.empty()) {
        const double loss = prediction_loss(model.predict_full(), target, params);
        const auto n = static_cast<Eigen::Index>(graph.node_count());
        return {loss, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    }
    RiseTape tape(model, params, graph, edges, target, mask.budget, mask.units);
    RiseObjective out;
    out.loss = tape.evaluate(mask.theta, mask.omega, mask.k);
    auto [gt, go] = tape.gradients();
    out.grad_theta = gt.col(0);
    out.grad_omega = go.col(0);
    return out;
}

ExplanationResult rise_extract(const MolecularGraph& graph, const DirectedEdgeSet& edges, const Eigen::VectorXd& m_r,
                               BudgetUnits units) {
    check_alignment(graph, edges);
    if (!m_r.allFinite() || (m_r.array() < 0.0).any()) throw ContractError("radius mask must be finite and nonnegative");
    const Eigen::VectorXd radii = effective_radii(m_r, graph, units);
    EdgeMask hard = dpg_hard_mask(radii, edges);
    EdgeMask soft = hard;
    ExplanationResult r = make_result("rise", edges, std::move(soft), std::move(hard));
    r.radii = radii;
    return r;
}

RiseOutcome rise_optimize(const BackboneParams& params, const MolecularGraph& graph, const DirectedEdgeSet& edges,
                          double target, double budget_ratio, const RiseConfig& config) {
    config.validate();
    check_ratio(budget_ratio);
    check_alignment(graph, edges);
    if (!std::isfinite(target)) throw ContractError("target must be finite");
    const auto n = static_cast<Eigen::Index>(graph.node_count());
    const MaskedForward model(params, graph, edges);

    RiseOutcome out;
    out.mask.units = config.units;
    out.mask.budget = config.budget ? *config.budget : rise_budget(graph, budget_ratio, config.units);
    out.mask.k = config.k_at(std::max(0, config.epochs - 1));
    Rng rng(config.seed);
    out.mask.theta = Eigen::VectorXd::Constant(n, config.theta_init) + gaussian_jitter(n, config.init_noise, rng);
    out.mask.omega = Eigen::VectorXd::Constant(n, config.omega_init) + gaussian_jitter(n, config.init_noise, rng);

    const bool full = !config.budget && budget_ratio >= 1.0;
    if (full || edges.empty() || out.mask.budget == 0.0) {
        const Eigen::VectorXd radii =
            full ? graph.construction_radii : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
        EdgeMask hard = full ? EdgeMask::ones(edges.size()) : EdgeMask::zeros(edges.size());
        out.result = make_result("rise", edges, hard, hard);
        out.result.soft.kind = MaskKind::soft;
        out.result.radii = radii;
        attach_predictions(out.result, model);
        return out;
    }

    RiseTape tape(model, params, graph, edges, target, out.mask.budget, config.units);
    const Eigen::VectorXd theta0 = out.mask.theta;
    const Eigen::VectorXd omega0 = out.mask.omega;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int start = 0; start < config.restarts; ++start) {
        Matrix theta = theta0;
        Matrix omega = omega0;
        if (start > 0) {
            Rng jitter(derive_seed(config.seed, static_cast<std::uint64_t>(start)));
            theta += gaussian_jitter(n, config.restart_noise, jitter);
            omega += gaussian_jitter(n, config.restart_noise, jitter);
        }
        auto consider = [&](const Eigen::VectorXd& t, const Eigen::VectorXd& o) {
            const EdgeMask hard = dpg_hard_mask(effective_radii(rise_radii(t, o, out.mask.budget), graph, config.units),
                                                edges);
            const double loss = prediction_loss(model.predict(hard.values), target, params);
            if (loss < best_loss) {
                best_loss = loss;
                out.mask.theta = t;
                out.mask.omega = o;
            }
        };
        ad::Adam adam(config.learning_rate);
        std::array<Matrix*, 2> state{&theta, &omega};
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            const double loss = tape.evaluate(theta.col(0), omega.col(0), config.k_at(epoch));
            if (!std::isfinite(loss)) throw OptimizationError("RISE loss is not finite", static_cast<std::size_t>(epoch));
            if (start == 0) out.result.trace.push_back(loss);
            if (config.keep_best_hard) consider(theta.col(0), omega.col(0));
            auto [gt, go] = tape.gradients();
            const std::array<Matrix, 2> grads{std::move(gt), std::move(go)};
            adam.step(state, grads);
        }
        consider(theta.col(0), omega.col(0));
    }

    tape.evaluate(out.mask.theta, out.mask.omega, out.mask.k);
    std::vector<double> soft = tape.mask();
    const std::vector<double> trace = std::move(out.result.trace);
    out.result = rise_extract(graph, edges, out.mask.m_r(), config.units);
    out.result.trace = trace;
    out.result.soft = EdgeMask{MaskKind::soft, std::move(soft)};
    attach_predictions(out.result, model);
    return out;
}

// ---------------------------------------------------------------------------
// Baselines

void BaselineLossWeights::validate() const {
    if (!(lambda_pred > 0.0)) throw ContractError("lambda_pred must be positive");
    if (!(lambda_size >= 0.0) || !(lambda_ent >= 0.0)) throw ContractError("loss weights must be nonnegative");
}

void BaselineConfig::validate() const {
    weights.validate();
    if (epochs < 0) throw ContractError("epochs must be nonnegative");
    if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    if (scorer_hidden < 1) throw ContractError("scorer width must be positive");
}

double entropy(const EdgeMask& mask) {
    double h = 0.0;
    for (double m : mask.values) {
        if (!(m >= 0.0 && m <= 1.0)) throw ContractError("entropy needs mask values in [0, 1]");
        h += ad::binary_entropy(m);
    }
    return h;
}

std::vector<std::size_t> top_k(std::span<const double> values, std::size_t count) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    count = std::min(count, values.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                      [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

std::size_t budget_edge_count(double budget_ratio, std::size_t edge_count) {
    check_ratio(budget_ratio);
    const double raw = std::floor(budget_ratio * static_cast<double>(edge_count) + 1e-9);
    return static_cast<std::size_t>(std::clamp(raw, 0.0, static_cast<double>(edge_count)));
}

ExplanationResult extract_top_k(std::string explainer, const DirectedEdgeSet& edges, EdgeMask soft,
                                std::size_t keep) {
    if (soft.size() != edges.size()) throw ContractError("soft mask is not aligned with the edge set");
    EdgeMask hard = EdgeMask::zeros(edges.size());
    for (std::size_t e : top_k(soft.values, keep)) hard.values[e] = 1.0;
    return make_result(std::move(explainer), edges, std::move(soft), std::move(hard));
}

namespace {

Var regularized_loss(Var prediction, Var soft, double target, double scale, const BaselineLossWeights& w) {
    const double inv_e = 1.0 / static_cast<double>(soft.rows());
    Var loss = ad::affine(scaled_squared_error(prediction, target, scale), w.lambda_pred);
    if (w.lambda_size > 0.0) loss = loss + ad::affine(ad::sum(soft), w.lambda_size * inv_e);
    if (w.lambda_ent > 0.0) loss = loss + ad::affine(ad::sum(ad::binary_entropy(soft)), w.lambda_ent * inv_e);
    return loss;
}

/// Runs Adam on a single leaf whose soft mask is `soft`; returns the final soft values.
std::vector<double> fit_logits(ad::Tape& tape, Var logits, Var soft, Var loss, const BaselineConfig& config,
                               std::vector<double>& trace) {
    ad::Adam adam(config.learning_rate);
    Matrix state = logits.value();
    std::array<Matrix*, 1> params{&state};
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        tape.set_value(logits, state);
        tape.replay();
        const double value = loss.scalar();
        if (!std::isfinite(value)) throw OptimizationError("explainer loss is not finite", static_cast<std::size_t>(epoch));
        trace.push_back(value);
        const std::array<Matrix, 1> grads{tape.backward(loss).wrt(logits)};
        adam.step(params, grads);
    }
    tape.set_value(logits, state);
    tape.replay();
    return to_vector(soft.value());
}

std::size_t resolve_keep(double budget_ratio, std::size_t edge_count, std::optional<std::size_t> keep_count) {
    return keep_count ? std::min(*keep_count, edge_count) : budget_edge_count(budget_ratio, edge_count);
}

}  // namespace

ExplanationResult gnnexplainer_optimize(const BackboneParams& params, const MolecularGraph& graph,
                                        const DirectedEdgeSet& edges, double target, double budget_ratio,
                                        const BaselineConfig& config, std::optional<std::size_t> keep_count) {
    config.validate();
    check_ratio(budget_ratio);
    check_alignment(graph, edges);
    const MaskedForward model(params, graph, edges);
    const std::size_t keep = resolve_keep(budget_ratio, edges.size(), keep_count);
    if (edges.empty()) {
        ExplanationResult r = extract_top_k("gnnexplainer", edges, EdgeMask{MaskKind::soft, {}}, 0);
        attach_predictions(r, model);
        return r;
    }
    Rng rng(config.seed);
    const auto e_count = static_cast<Eigen::Index>(edges.size());
    ad::Tape tape;
    const Var logits = tape.leaf(Matrix::Constant(e_count, 1, config.init_logit) +
                                 Matrix(gaussian_jitter(e_count, config.init_noise, rng)));
    const Var soft = ad::sigmoid(logits);
    const Var loss = regularized_loss(model.prediction(tape, soft), soft, target, safe_scale(params), config.weights);
    std::vector<double> trace;
    std::vector<double> values = fit_logits(tape, logits, soft, loss, config, trace);
    ExplanationResult r = extract_top_k("gnnexplainer", edges, EdgeMask{MaskKind::soft, std::move(values)}, keep);
    r.trace = std::move(trace);
    attach_predictions(r, model);
    return r;
}

EdgeMask node_product_mask(const Eigen::VectorXd& node_mask, const DirectedEdgeSet& edges) {
    if (node_mask.size() != edges.node_count) throw ContractError("node mask does not match the node count");
    EdgeMask m{MaskKind::soft, {}};
    m.values.reserve(edges.size());
    for (const auto& e : edges.edges) m.values.push_back(node_mask(e.source) * node_mask(e.target));
    return m;
}

ExplanationResult lri_bernoulli_optimize(const BackboneParams& params, const MolecularGraph& graph,
                                         const DirectedEdgeSet& edges, double target, double budget_ratio,
                                         const BaselineConfig& config, std::optional<std::size_t> keep_count) {
    config.validate();
    check_ratio(budget_ratio);
    check_alignment(graph, edges);
    const MaskedForward model(params, graph, edges);
    const std::size_t keep = resolve_keep(budget_ratio, edges.size(), keep_count);
    if (edges.empty()) {
        ExplanationResult r = extract_top_k("lri_bernoulli", edges, EdgeMask{MaskKind::soft, {}}, 0);
        attach_predictions(r, model);
        return r;
    }
    Rng rng(config.seed);
    const auto n = static_cast<Eigen::Index>(graph.node_count());
    ad::Tape tape;
    const Var logits =
        tape.leaf(Matrix::Constant(n, 1, config.init_logit) + Matrix(gaussian_jitter(n, config.init_noise, rng)));
    const Var node = ad::sigmoid(logits);
    const Var soft = ad::gather_rows(node, sources(edges)) * ad::gather_rows(node, targets(edges));
    const Var loss = regularized_loss(model.prediction(tape, soft), soft, target, safe_scale(params), config.weights);
    std::vector<double> trace;
    std::vector<double> values = fit_logits(tape, logits, soft, loss, config, trace);
    ExplanationResult r = extract_top_k("lri_bernoulli", edges, EdgeMask{MaskKind::soft, std::move(values)}, keep);
    r.trace = std::move(trace);
    attach_predictions(r, model);
    return r;
}

// ---------------------------------------------------------------------------
// PGExplainer

EdgeScorer EdgeScorer::initialize(int input_dim, int hidden, std::uint64_t seed) {
    if (input_dim < 1 || hidden < 1) throw ContractError("scorer dimensions must be positive");
    EdgeScorer s;
    Rng rng(seed);
    const double limit = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
    std::uniform_real_distribution<double> u(-limit, limit);
    s.w1 = Matrix(input_dim, hidden);
    for (Eigen::Index i = 0; i < s.w1.size(); ++i) s.w1.data()[i] = u(rng);
    s.b1 = Matrix::Zero(1, hidden);
    s.w2 = Matrix::Zero(hidden, 1);
    s.b2 = Matrix::Zero(1, 1);
    return s;
}

Matrix scorer_inputs(const MaskedForward& model, const DirectedEdgeSet& edges) {
    const Matrix states = model.node_states();
    const Matrix& rbf = model.inputs().rbf;
    const Eigen::Index h = states.cols();
    Matrix x(static_cast<Eigen::Index>(edges.size()), 2 * h + rbf.cols());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto row = static_cast<Eigen::Index>(e);
        x.row(row) << states.row(edges.edges[e].source), states.row(edges.edges[e].target), rbf.row(row);
    }
    return x;
}

EdgeMask score_edges(const EdgeScorer& s, const Matrix& inputs) {
    const double ln2 = std::log(2.0);
    Matrix hidden = (inputs * s.w1).rowwise() + s.b1.row(0);
    hidden = hidden.unaryExpr([ln2](double v) { return ad::softplus(v) - ln2; });
    const Matrix logits = (hidden * s.w2).array() + s.b2(0, 0);
    EdgeMask m{MaskKind::soft, {}};
    for (Eigen::Index e = 0; e < logits.rows(); ++e) m.values.push_back(ad::sigmoid(logits(e, 0)));
    return m;
}

namespace {

struct ScorerTape {
    ad::Tape tape;
    std::array<Var, 4> weights;
    Var soft, loss;
};

}  // namespace

PgExplainerOutcome pgexplainer_optimize(const BackboneParams& params, std::span<const ExplainTask> tasks,
                                        double budget_ratio, const BaselineConfig& config) {
    config.validate();
    check_ratio(budget_ratio);
    if (tasks.empty()) throw ContractError("PGExplainer needs at least one graph");
    const int input_dim = 2 * params.config.hidden + params.config.num_rbf;
    PgExplainerOutcome out;
    out.scorer = EdgeScorer::initialize(input_dim, config.scorer_hidden, config.seed);

    std::vector<std::unique_ptr<MaskedForward>> models(tasks.size());
    std::vector<Matrix> inputs(tasks.size());
    std::vector<std::unique_ptr<ScorerTape>> tapes(tasks.size());
    const double scale = safe_scale(params);
    parallel_for(tasks.size(), [&](std::size_t t) {
        const ExplainTask& task = tasks[t];
        if (!task.graph || !task.edges) throw ContractError("incomplete explanation task");
        check_alignment(*task.graph, *task.edges);
        models[t] = std::make_unique<MaskedForward>(params, *task.graph, *task.edges);
        inputs[t] = scorer_inputs(*models[t], *task.edges);
        if (task.edges->empty()) return;
        auto st = std::make_unique<ScorerTape>();
        const EdgeScorer& s = out.scorer;
        st->weights = {st->tape.leaf(s.w1), st->tape.leaf(s.b1), st->tape.leaf(s.w2), st->tape.leaf(s.b2)};
        const Var x = st->tape.constant(inputs[t]);
        const Var hidden = ad::shifted_softplus(ad::matmul(x, st->weights[0]) + st->weights[1]);
        st->soft = ad::sigmoid(ad::matmul(hidden, st->weights[2]) + st->weights[3]);
        st->loss = regularized_loss(models[t]->prediction(st->tape, st->soft), st->soft, task.target, scale,
                                    config.weights);
        tapes[t] = std::move(st);
    });

    std::size_t active = 0;
    for (const auto& t : tapes) active += t ? 1 : 0;
    ad::Adam adam(config.learning_rate);
    std::vector<Matrix*> state = out.scorer.tensors();
    std::vector<double> trace;
    for (int epoch = 0; epoch < config.epochs && active > 0; ++epoch) {
        std::vector<std::array<Matrix, 4>> grads(tasks.size());
        std::vector<double> losses(tasks.size(), 0.0);
        parallel_for(tasks.size(), [&](std::size_t t) {
            if (!tapes[t]) return;
            ScorerTape& st = *tapes[t];
            for (std::size_t w = 0; w < 4; ++w) st.tape.set_value(st.weights[w], *state[w]);
            st.tape.replay();
            losses[t] = st.loss.scalar();
            if (!std::isfinite(losses[t])) return;
            const ad::Gradients g = st.tape.backward(st.loss);
            for (std::size_t w = 0; w < 4; ++w) grads[t][w] = g.wrt(st.weights[w]);
        });
        std::array<Matrix, 4> total;
        for (std::size_t w = 0; w < 4; ++w) total[w] = Matrix::Zero(state[w]->rows(), state[w]->cols());
        double epoch_loss = 0.0;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (!tapes[t]) continue;
            if (!std::isfinite(losses[t])) throw OptimizationError("PGExplainer loss is not finite", static_cast<std::size_t>(epoch));
            epoch_loss += losses[t];
            for (std::size_t w = 0; w < 4; ++w) total[w] += grads[t][w];
        }
        for (auto& g : total) g /= static_cast<double>(active);
        trace.push_back(epoch_loss / static_cast<double>(active));
        adam.step(state, total);
    }

    out.results.resize(tasks.size());
    parallel_for(tasks.size(), [&](std::size_t t) {
        const ExplainTask& task = tasks[t];
        const std::size_t keep = resolve_keep(budget_ratio, task.edges->size(), task.keep_count);
        ExplanationResult r = extract_top_k("pgexplainer", *task.edges, score_edges(out.scorer, inputs[t]), keep);
        r.trace = trace;
        attach_predictions(r, *models[t]);
        out.results[t] = std::move(r);
    });
    return out;
}

// ---------------------------------------------------------------------------

ConsistencyGap consistency_gap(const BackboneParams& params, const MolecularGraph& graph, const DirectedEdgeSet& edges,
                               const EdgeMask& soft, const EdgeMask& hard, double target) {
    if (soft.size() != edges.size() || hard.size() != edges.size())
        throw ContractError("masks are not aligned with the edge set");
    const MaskedForward model(params, graph, edges);
    ConsistencyGap g;
    g.soft_prediction = model.predict(soft.values);
    g.hard_prediction = model.predict(hard.values);
    g.prediction_gap = std::abs(g.soft_prediction - g.hard_prediction);
    g.relative_gap = g.prediction_gap / std::max(std::abs(g.hard_prediction), 1e-12);
    g.loss_gap = std::abs(prediction_loss(g.soft_prediction, target, params) -
                          prediction_loss(g.hard_prediction, target, params));
    return g;
}

}  // namespace rise
