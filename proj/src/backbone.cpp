#include "rise/backbone.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "rise/errors.hpp"
#include "rise/molecule_io.hpp"
#include "rise/parallel.hpp"
#include "rise/rng.hpp"

namespace rise {

using ad::Matrix;
using ad::Var;
using nlohmann::json;

namespace {

constexpr int kTensorsPerLayer = 7;  // W1 b1 W2 b2 W_in W_o1 W_o2
constexpr int kReadoutTensors = 4;   // R1 rb1 R2 rb2

int readout_base(const BackboneConfig& c) { return 1 + kTensorsPerLayer * c.layers; }

struct Shape {
    Eigen::Index rows, cols;
};

std::vector<Shape> tensor_shapes(const BackboneConfig& c) {
    const Eigen::Index h = c.hidden;
    const Eigen::Index k = c.num_rbf;
    const Eigen::Index t = static_cast<Eigen::Index>(c.elements.size());
    const Eigen::Index half = std::max<Eigen::Index>(1, h / 2);
    std::vector<Shape> s{{t, h}};
    for (int l = 0; l < c.layers; ++l) {
        s.insert(s.end(), {{k, h}, {1, h}, {h, h}, {1, h}, {h, h}, {h, h}, {h, h}});
    }
    s.insert(s.end(), {{h, half}, {1, half}, {half, 1}, {1, 1}});
    return s;
}

Matrix shifted_softplus(const Matrix& m) {
    const double ln2 = std::log(2.0);
    return m.unaryExpr([ln2](double x) { return ad::softplus(x) - ln2; });
}

Matrix cosine_envelope(double d, double cutoff) {
    return Matrix::Constant(1, 1, d < cutoff ? 0.5 * (std::cos(std::numbers::pi * d / cutoff) + 1.0) : 0.0);
}

}  // namespace

void BackboneConfig::validate() const {
    if (hidden < 1 || layers < 1 || num_rbf < 2) throw ContractError("backbone dimensions must be positive");
    if (!(gamma > 0.0) || !(cutoff > 0.0)) throw ContractError("gamma and cut-off must be positive");
    if (elements.empty()) throw ContractError("backbone needs an element table");
}

BackboneParams BackboneParams::initialize(const BackboneConfig& config, std::uint64_t seed) {
    config.validate();
    BackboneParams p;
    p.config = config;
    Rng rng(seed);
    const auto shapes = tensor_shapes(config);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto [r, c] = shapes[i];
        Matrix m = Matrix::Zero(r, c);
        if (r > 1 || i == 0) {  // weights; biases (1×c rows other than the embedding) stay zero
            const double limit = std::sqrt(6.0 / static_cast<double>(r + c));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (Eigen::Index a = 0; a < r; ++a)
                for (Eigen::Index b = 0; b < c; ++b) m(a, b) = u(rng);
        }
        p.tensors.push_back(std::move(m));
    }
    p.type_offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.elements.size()));
    return p;
}

std::vector<std::string> BackboneParams::tensor_names() const {
    std::vector<std::string> names{"embedding"};
    const char* per_layer[] = {"filter_w1", "filter_b1", "filter_w2", "filter_b2",
                               "input_w",   "update_w1", "update_w2"};
    for (int l = 0; l < config.layers; ++l)
        for (const char* n : per_layer) names.push_back("layer" + std::to_string(l) + "." + n);
    for (const char* n : {"readout_w1", "readout_b1", "readout_w2", "readout_b2"}) names.emplace_back(n);
    return names;
}

void BackboneParams::validate() const {
    config.validate();
    const auto shapes = tensor_shapes(config);
    if (tensors.size() != shapes.size()) throw ContractError("backbone tensor count does not match layout");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (tensors[i].rows() != shapes[i].rows || tensors[i].cols() != shapes[i].cols)
            throw ContractError("backbone tensor " + tensor_names()[i] + " has the wrong shape");
        if (!tensors[i].allFinite()) throw ContractError("backbone tensor " + tensor_names()[i] + " is not finite");
    }
    if (type_offset.size() != static_cast<Eigen::Index>(config.elements.size()) || !type_offset.allFinite())
        throw ContractError("type offsets do not match the element table");
    if (!std::isfinite(target_scale)) throw ContractError("target scale is not finite");
}

std::size_t BackboneParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
}

Eigen::VectorXd rbf_centers(const BackboneConfig& config) {
    return Eigen::VectorXd::LinSpaced(config.num_rbf, 0.0, config.cutoff);
}

Eigen::VectorXd rbf_expand(double distance, const BackboneParams& params) {
    const auto& c = params.config;
    if (!(distance >= 0.0) || distance > c.cutoff)
        throw ContractError("distance " + std::to_string(distance) + " outside [0, cut-off]");
    const Eigen::VectorXd centers = rbf_centers(c);
    return (-c.gamma * (centers.array() - distance).square()).exp().matrix();
}

EdgeInputs EdgeInputs::build(const MolecularGraph& graph, const DirectedEdgeSet& edges,
                             const BackboneConfig& config) {
    if (edges.node_count != static_cast<int>(graph.node_count()))
        throw ContractError("edge set and graph disagree on node count");
    if (graph.node_features.cols() != static_cast<Eigen::Index>(config.elements.size()))
        throw ContractError("node features do not match the backbone element table");
    EdgeInputs in;
    in.nodes = static_cast<Eigen::Index>(graph.node_count());
    in.features = graph.node_features;
    const auto e_count = static_cast<Eigen::Index>(edges.size());
    in.rbf.resize(e_count, config.num_rbf);
    in.envelope.resize(e_count, 1);
    std::vector<int> src, dst;
    src.reserve(edges.size());
    dst.reserve(edges.size());
    const Eigen::VectorXd centers = rbf_centers(config);
    for (Eigen::Index e = 0; e < e_count; ++e) {
        const auto& edge = edges.edges[static_cast<std::size_t>(e)];
        if (edge.distance > config.cutoff)
            throw ContractError("edge longer than the backbone cut-off");
        in.rbf.row(e) = (-config.gamma * (centers.array() - edge.distance).square()).exp().matrix().transpose();
        in.envelope(e, 0) = cosine_envelope(edge.distance, config.cutoff)(0, 0);
        src.push_back(edge.source);
        dst.push_back(edge.target);
    }
    in.source = ad::make_index(std::move(src));
    in.target = ad::make_index(std::move(dst));
    return in;
}

BoundParams bind(ad::Tape& tape, const BackboneParams& params, bool trainable) {
    BoundParams b;
    b.config = &params.config;
    b.target_scale = params.target_scale;
    for (const auto& t : params.tensors) b.tensors.push_back(trainable ? tape.leaf(t) : tape.constant(t));
    b.type_offset = tape.constant(params.type_offset);
    return b;
}

ForwardOutputs forward_on_tape(ad::Tape& tape, const BoundParams& p, const EdgeInputs& in, Var edge_mask,
                               const std::vector<Matrix>* filters) {
    const BackboneConfig& c = *p.config;
    if (edge_mask.valid() && (edge_mask.rows() != in.edge_count() || edge_mask.cols() != 1))
        throw ContractError("edge mask is not aligned with the edge set");
    if (filters && filters->size() != static_cast<std::size_t>(c.layers))
        throw ContractError("filter cache does not match the layer count");

    const Var features = tape.constant(in.features);
    Var h = ad::matmul(features, p.tensors[0]);
    if (in.edge_count() > 0) {
        const Var rbf = tape.constant(in.rbf);
        const Var envelope = tape.constant(in.envelope);
        for (int l = 0; l < c.layers; ++l) {
            const auto base = static_cast<std::size_t>(1 + kTensorsPerLayer * l);
            Var filter;
            if (filters) {
                filter = tape.constant((*filters)[static_cast<std::size_t>(l)]);
            } else {
                const Var hidden = ad::shifted_softplus(ad::matmul(rbf, p.tensors[base]) + p.tensors[base + 1]);
                filter = (ad::matmul(hidden, p.tensors[base + 2]) + p.tensors[base + 3]) * envelope;
            }
            const Var x = ad::matmul(h, p.tensors[base + 4]);
            Var message = ad::gather_rows(x, in.target) * filter;
            if (edge_mask.valid()) message = message * edge_mask;
            const Var aggregated = ad::scatter_add_rows(message, in.source, in.nodes);
            const Var update =
                ad::matmul(ad::shifted_softplus(ad::matmul(aggregated, p.tensors[base + 5])), p.tensors[base + 6]);
            h = h + update;
        }
    }
    const auto r = static_cast<std::size_t>(readout_base(c));
    const Var hidden = ad::shifted_softplus(ad::matmul(h, p.tensors[r]) + p.tensors[r + 1]);
    const Var raw = ad::matmul(hidden, p.tensors[r + 2]) + p.tensors[r + 3];
    const Var contributions = ad::affine(raw, p.target_scale) + ad::matmul(features, p.type_offset);
    return {contributions, ad::sum(contributions), h};
}

namespace {

Prediction to_prediction(const ForwardOutputs& out) {
    Prediction pred;
    pred.contributions = out.contributions.value().col(0);
    pred.value = out.value.scalar();
    return pred;
}

/// Per-layer filter values for fixed parameters (E×h each).
std::vector<Matrix> compute_filters(const BackboneParams& params, const EdgeInputs& in) {
    std::vector<Matrix> out;
    for (int l = 0; l < params.config.layers; ++l) {
        const auto base = static_cast<std::size_t>(1 + kTensorsPerLayer * l);
        const Matrix hidden =
            shifted_softplus((in.rbf * params.tensors[base]).rowwise() + params.tensors[base + 1].row(0));
        Matrix filter = (hidden * params.tensors[base + 2]).rowwise() + params.tensors[base + 3].row(0);
        filter.array().colwise() *= in.envelope.col(0).array();
        out.push_back(std::move(filter));
    }
    return out;
}

}  // namespace

Prediction forward(const MolecularGraph& graph, const DirectedEdgeSet& edges, const EdgeMask& edge_mask,
                   const BackboneParams& params) {
    if (edge_mask.size() != edges.size()) throw ContractError("edge mask is not aligned with the edge set");
    for (double v : edge_mask.values)
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("edge mask values must lie in [0, 1]");
    const EdgeInputs in = EdgeInputs::build(graph, edges, params.config);
    ad::Tape tape;
    const BoundParams bound = bind(tape, params, false);
    const Var mask = tape.constant(Eigen::Map<const Matrix>(edge_mask.values.data(),
                                                            static_cast<Eigen::Index>(edge_mask.size()), 1));
    return to_prediction(forward_on_tape(tape, bound, in, mask));
}

Prediction forward(const MolecularGraph& graph, const DirectedEdgeSet& edges, const BackboneParams& params) {
    const EdgeInputs in = EdgeInputs::build(graph, edges, params.config);
    ad::Tape tape;
    const BoundParams bound = bind(tape, params, false);
    return to_prediction(forward_on_tape(tape, bound, in, Var{}));
}

MaskedForward::MaskedForward(const BackboneParams& params, const MolecularGraph& graph,
                             const DirectedEdgeSet& edges)
    : params_(&params), inputs_(EdgeInputs::build(graph, edges, params.config)),
      filters_(compute_filters(params, inputs_)) {}

Var MaskedForward::prediction(ad::Tape& tape, Var edge_mask) const {
    const BoundParams bound = bind(tape, *params_, false);
    return forward_on_tape(tape, bound, inputs_, edge_mask, &filters_).value;
}

double MaskedForward::predict(std::span<const double> edge_mask) const {
    if (edge_mask.size() != edge_count()) throw ContractError("edge mask is not aligned with the edge set");
    ad::Tape tape;
    const Var mask =
        tape.constant(Eigen::Map<const Matrix>(edge_mask.data(), static_cast<Eigen::Index>(edge_mask.size()), 1));
    return prediction(tape, mask).scalar();
}

double MaskedForward::predict_full() const {
    ad::Tape tape;
    const BoundParams bound = bind(tape, *params_, false);
    return forward_on_tape(tape, bound, inputs_, Var{}, &filters_).value.scalar();
}

Matrix MaskedForward::node_states() const {
    ad::Tape tape;
    const BoundParams bound = bind(tape, *params_, false);
    return forward_on_tape(tape, bound, inputs_, Var{}, &filters_).node_states.value();
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct PreparedMolecule {
    EdgeInputs inputs;
    double target = 0.0;
};

std::vector<PreparedMolecule> prepare(std::span<const LabeledMolecule> corpus, const BackboneConfig& config) {
    std::vector<PreparedMolecule> out(corpus.size());
    parallel_for(corpus.size(), [&](std::size_t i) {
        const auto& m = corpus[i];
        const DirectedEdgeSet edges = build_cutoff_graph(m.graph, config.cutoff);
        out[i] = {EdgeInputs::build(m.graph, edges, config), m.target};
    });
    return out;
}

double predict_prepared(const BackboneParams& params, const PreparedMolecule& m) {
    ad::Tape tape;
    const BoundParams bound = bind(tape, params, false);
    return forward_on_tape(tape, bound, m.inputs, Var{}).value.scalar();
}

double prepared_mae(const BackboneParams& params, const std::vector<PreparedMolecule>& set) {
    if (set.empty()) return 0.0;
    std::vector<double> err(set.size());
    parallel_for(set.size(), [&](std::size_t i) { err[i] = std::abs(predict_prepared(params, set[i]) - set[i].target); });
    double total = 0.0;
    for (double e : err) total += e;
    return total / static_cast<double>(set.size());
}

/// Least-squares per-element offsets from element counts.
Eigen::VectorXd fit_offsets(const std::vector<PreparedMolecule>& set, Eigen::Index types, double ridge) {
    Matrix counts(static_cast<Eigen::Index>(set.size()), types);
    Eigen::VectorXd y(static_cast<Eigen::Index>(set.size()));
    for (std::size_t i = 0; i < set.size(); ++i) {
        counts.row(static_cast<Eigen::Index>(i)) = set[i].inputs.features.colwise().sum();
        y(static_cast<Eigen::Index>(i)) = set[i].target;
    }
    const Matrix normal = counts.transpose() * counts + ridge * Matrix::Identity(types, types);
    return normal.ldlt().solve(counts.transpose() * y);
}

}  // namespace

TrainResult train(std::span<const LabeledMolecule> train_set, std::span<const LabeledMolecule> validation_set,
                  const BackboneConfig& config, const TrainConfig& tc) {
    config.validate();
    if (train_set.empty()) throw ContractError("training corpus is empty");
    for (const auto& m : train_set)
        if (!std::isfinite(m.target)) throw ContractError("training targets must be finite");
    if (tc.epochs < 1 || tc.batch_size < 1 || !(tc.learning_rate > 0.0))
        throw ContractError("invalid training configuration");

    const auto train_data = prepare(train_set, config);
    const auto val_data = prepare(validation_set, config);

    BackboneParams params = BackboneParams::initialize(config, tc.seed);
    if (tc.fit_offsets)
        params.type_offset =
            fit_offsets(train_data, static_cast<Eigen::Index>(config.elements.size()), tc.offset_ridge);
    {
        double sq = 0.0;
        for (const auto& m : train_data) {
            const double r = m.target - m.inputs.features.colwise().sum().dot(params.type_offset.transpose());
            sq += r * r;
        }
        const double rms = std::sqrt(sq / static_cast<double>(train_data.size()));
        params.target_scale = rms > 1e-8 ? rms : 1.0;
    }

    const double scale = params.target_scale;
    ad::Adam adam(tc.learning_rate);
    std::vector<Matrix*> param_ptrs;
    for (auto& t : params.tensors) param_ptrs.push_back(&t);

    TrainResult result;
    BackboneParams best = params;
    double best_metric = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::size_t step = 0;

    std::vector<std::size_t> order(train_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        Rng rng(derive_seed(tc.shuffle_seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(rng)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            const std::size_t batch = stop - start;
            std::vector<std::vector<Matrix>> grads(batch);
            std::vector<double> losses(batch);
            parallel_for(batch, [&](std::size_t b) {
                const auto& m = train_data[order[start + b]];
                ad::Tape tape;
                const BoundParams bound = bind(tape, params, true);
                const Var pred = forward_on_tape(tape, bound, m.inputs, Var{}).value;
                const Var residual = ad::affine(pred, 1.0 / scale, -m.target / scale);
                const Var loss = ad::square(residual);
                losses[b] = loss.scalar();
                if (!std::isfinite(losses[b])) return;
                const ad::Gradients g = tape.backward(loss);
                grads[b].reserve(bound.tensors.size());
                for (const Var& t : bound.tensors) grads[b].push_back(g.wrt(t));
            });
            std::vector<Matrix> total;
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                if (!std::isfinite(losses[b])) throw OptimizationError("training loss diverged", step);
                batch_loss += losses[b];
                if (total.empty())
                    total = grads[b];
                else
                    for (std::size_t t = 0; t < total.size(); ++t) total[t] += grads[b][t];
            }
            for (auto& t : total) t /= static_cast<double>(batch);
            adam.step(param_ptrs, total);
            epoch_loss += batch_loss;
            ++step;
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss)) throw OptimizationError("training loss diverged", step);
        result.report.train_loss.push_back(epoch_loss);

        const double metric = val_data.empty() ? prepared_mae(params, train_data) : prepared_mae(params, val_data);
        result.report.validation_mae_trace.push_back(metric);
        result.report.epochs_run = epoch + 1;
        if (metric < best_metric) {
            best_metric = metric;
            best = params;
            result.report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
        adam.set_learning_rate(adam.learning_rate() * tc.lr_decay);
    }

    result.params = std::move(best);
    result.report.train_mae = prepared_mae(result.params, train_data);
    result.report.validation_mae = val_data.empty() ? result.report.train_mae : prepared_mae(result.params, val_data);
    return result;
}

double mean_absolute_error(const BackboneParams& params, std::span<const LabeledMolecule> corpus) {
    return prepared_mae(params, prepare(corpus, params.config));
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_json(const BackboneParams& params) {
    params.validate();
    json j;
    j["format"] = "rise-backbone";
    j["version"] = kCheckpointVersion;
    const auto& c = params.config;
    j["config"] = {{"hidden", c.hidden}, {"layers", c.layers}, {"num_rbf", c.num_rbf},
                   {"gamma", c.gamma},   {"cutoff", c.cutoff}, {"elements", c.elements}};
    json tensors = json::array();
    const auto names = params.tensor_names();
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const Matrix& m = params.tensors[i];
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index col = 0; col < m.cols(); ++col) data.push_back(m(r, col));
        tensors.push_back({{"name", names[i]}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", data}});
    }
    j["tensors"] = tensors;
    j["type_offset"] = std::vector<double>(params.type_offset.data(), params.type_offset.data() + params.type_offset.size());
    j["target_scale"] = params.target_scale;
    return j.dump();
}

BackboneParams checkpoint_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("format", "") != "rise-backbone") throw ContractError("not a backbone checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw ContractError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
    BackboneParams p;
    const auto& c = j.at("config");
    p.config.hidden = c.at("hidden").get<int>();
    p.config.layers = c.at("layers").get<int>();
    p.config.num_rbf = c.at("num_rbf").get<int>();
    p.config.gamma = c.at("gamma").get<double>();
    p.config.cutoff = c.at("cutoff").get<double>();
    p.config.elements = c.at("elements").get<std::vector<std::string>>();
    for (const auto& t : j.at("tensors")) {
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        const auto data = t.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols)
            throw ContractError("tensor " + t.at("name").get<std::string>() + " has inconsistent shape metadata");
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index col = 0; col < cols; ++col) m(r, col) = data[static_cast<std::size_t>(r * cols + col)];
        p.tensors.push_back(std::move(m));
    }
    const auto offsets = j.at("type_offset").get<std::vector<double>>();
    p.type_offset = Eigen::Map<const Eigen::VectorXd>(offsets.data(), static_cast<Eigen::Index>(offsets.size()));
    p.target_scale = j.at("target_scale").get<double>();
    p.validate();
    return p;
}

void save_checkpoint(const BackboneParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << checkpoint_json(params) << "\n";
}

BackboneParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return checkpoint_from_json(buffer.str());
}

}  // namespace rise
