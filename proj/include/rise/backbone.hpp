#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rise/autodiff.hpp"
#include "rise/geometry.hpp"

namespace rise {

struct LabeledMolecule;

struct BackboneConfig {
    int hidden = 32;
    int layers = 3;
    int num_rbf = 32;
    double gamma = 10.0;  ///< Å^-2
    double cutoff = 5.0;  ///< Å
    /// Element order of the one-hot node features and embedding rows.
    std::vector<std::string> elements;

    void validate() const;
};

/// Weights of a continuous-filter message-passing regressor.
///
/// Per layer: filter = ssp(rbf·W1 + b1)·W2 + b2, scaled by a cosine cut-off
/// envelope; message j→i = (h_j·W_in) ⊙ filter_ij ⊙ mask_ij, summed at i, then
/// h_i += ssp(agg·W_o1)·W_o2, so a node with no surviving messages keeps its
/// state. The readout maps each node state
/// to a scalar; a per-element offset is added and the node scalars are summed.
struct BackboneParams {
    BackboneConfig config;
    std::vector<ad::Matrix> tensors;  ///< layout given by tensor_names()
    Eigen::VectorXd type_offset;      ///< per element, in target units
    double target_scale = 1.0;

    static BackboneParams initialize(const BackboneConfig& config, std::uint64_t seed);
    std::vector<std::string> tensor_names() const;
    void validate() const;
    std::size_t parameter_count() const;
};

struct Prediction {
    double value = 0.0;
    Eigen::VectorXd contributions;  ///< per node; sums to value
};

/// Gaussian RBF features exp(-gamma (d - c_k)^2) on centers evenly spaced over [0, cutoff].
Eigen::VectorXd rbf_expand(double distance, const BackboneParams& params);
Eigen::VectorXd rbf_centers(const BackboneConfig& config);

/// Per-(graph, edge set) inputs reused across forward passes.
struct EdgeInputs {
    Eigen::Index nodes = 0;
    ad::IndexList source;  ///< receiving node i of edge i→j
    ad::IndexList target;  ///< sending node j of edge i→j
    ad::Matrix rbf;        ///< E×K
    ad::Matrix envelope;   ///< E×1 cosine cut-off
    ad::Matrix features;   ///< n×T

    static EdgeInputs build(const MolecularGraph& graph, const DirectedEdgeSet& edges,
                            const BackboneConfig& config);
    Eigen::Index edge_count() const { return rbf.rows(); }
};

/// Parameters placed on a tape, as leaves (trainable) or constants.
struct BoundParams {
    std::vector<ad::Var> tensors;
    ad::Var type_offset;
    double target_scale = 1.0;
    const BackboneConfig* config = nullptr;
};

BoundParams bind(ad::Tape& tape, const BackboneParams& params, bool trainable);

struct ForwardOutputs {
    ad::Var contributions;  ///< n×1
    ad::Var value;          ///< 1×1
    ad::Var node_states;    ///< n×h after the last layer
};

/// Records the forward pass. `edge_mask` is an E×1 node or unbound (all ones).
/// `filters`, when given, replaces the filter network with precomputed E×h
/// per-layer constants (only valid when the parameters are not being trained).
ForwardOutputs forward_on_tape(ad::Tape& tape, const BoundParams& params, const EdgeInputs& inputs,
                               ad::Var edge_mask, const std::vector<ad::Matrix>* filters = nullptr);

/// Masked prediction: the message on edge i→j is scaled by mask(i→j) at every layer.
Prediction forward(const MolecularGraph& graph, const DirectedEdgeSet& edges,
                   const EdgeMask& edge_mask, const BackboneParams& params);
Prediction forward(const MolecularGraph& graph, const DirectedEdgeSet& edges,
                   const BackboneParams& params);

/// A frozen model bound to one molecule and edge set; used by the explainers.
class MaskedForward {
public:
    MaskedForward(const BackboneParams& params, const MolecularGraph& graph,
                  const DirectedEdgeSet& edges);

    std::size_t edge_count() const { return static_cast<std::size_t>(inputs_.edge_count()); }
    const EdgeInputs& inputs() const { return inputs_; }

    /// Records the masked forward pass on `tape`; returns the 1×1 prediction.
    ad::Var prediction(ad::Tape& tape, ad::Var edge_mask) const;
    double predict(std::span<const double> edge_mask) const;
    double predict_full() const;
    /// Final-layer node states of the unmasked graph (n×h).
    ad::Matrix node_states() const;

private:
    const BackboneParams* params_;
    EdgeInputs inputs_;
    std::vector<ad::Matrix> filters_;
};

struct TrainConfig {
    int epochs = 300;
    int batch_size = 32;
    double learning_rate = 3e-3;
    double lr_decay = 0.995;   ///< per epoch
    int patience = 40;         ///< epochs without validation improvement
    std::uint64_t seed = 0;    ///< weight initialization
    std::uint64_t shuffle_seed = 0;
    double offset_ridge = 1e-6;
    /// Fit per-element offsets before training; otherwise they stay zero.
    bool fit_offsets = true;
};

struct TrainReport {
    double train_mae = 0.0;
    double validation_mae = 0.0;
    int epochs_run = 0;
    int best_epoch = 0;
    std::vector<double> train_loss;
    std::vector<double> validation_mae_trace;
};

struct TrainResult {
    BackboneParams params;
    TrainReport report;
};

/// Mini-batch Adam on mean squared error. Element offsets are fitted first by
/// least squares on element counts; the network learns the scaled residual.
/// Returns the parameters with the best validation MAE (train MAE when the
/// validation set is empty). Throws OptimizationError on a non-finite loss.
TrainResult train(std::span<const LabeledMolecule> train_set,
                  std::span<const LabeledMolecule> validation_set, const BackboneConfig& config,
                  const TrainConfig& train_config);

double mean_absolute_error(const BackboneParams& params, std::span<const LabeledMolecule> corpus);

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const BackboneParams& params, const std::filesystem::path& path);
BackboneParams load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_json(const BackboneParams& params);
BackboneParams checkpoint_from_json(const std::string& text);

}  // namespace rise
