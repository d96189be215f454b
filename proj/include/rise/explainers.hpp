#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rise/backbone.hpp"
#include "rise/geometry.hpp"

namespace rise {

/// How m_r relates to a length. In `angstrom` units B = rho·sum(R) and the
/// effective radius of node i is m_r_i itself; in `fractional` units B = rho·n
/// and the effective radius is m_r_i·R_i.
enum class BudgetUnits { angstrom, fractional };

/// m_r_i = B · softmax(theta)_i · sigmoid(omega_i). The softmax is max-shifted.
Eigen::VectorXd rise_radii(const Eigen::VectorXd& theta, const Eigen::VectorXd& omega, double budget);

double rise_budget(const MolecularGraph& graph, double budget_ratio, BudgetUnits units);
Eigen::VectorXd effective_radii(const Eigen::VectorXd& m_r, const MolecularGraph& graph, BudgetUnits units);

/// Learnable radius-of-influence state.
struct RadiusMask {
    Eigen::VectorXd theta;
    Eigen::VectorXd omega;
    double budget = 0.0;
    double k = 50.0;
    BudgetUnits units = BudgetUnits::angstrom;

    Eigen::VectorXd m_r() const { return rise_radii(theta, omega, budget); }
};

/// Soft value sigmoid(k·(rho_i − d_ij)) for every directed edge i→j.
EdgeMask rise_edge_mask(const Eigen::VectorXd& effective_radii, const DistanceMatrix& distances,
                        const DirectedEdgeSet& edges, double k);

/// Hard mask of edge i→j: d_ij < rho_i.
EdgeMask dpg_hard_mask(const Eigen::VectorXd& effective_radii, const DirectedEdgeSet& edges);

struct ExplanationResult {
    std::string explainer;
    std::size_t original_edge_count = 0;
    DirectedEdgeSet kept;           ///< hard subgraph, a subset of the input edges
    EdgeMask hard;                  ///< aligned with the input edges
    EdgeMask soft;                  ///< final soft mask, aligned with the input edges
    double edges_preserved_fraction = 0.0;
    std::optional<Eigen::VectorXd> radii;  ///< effective radii in Å (RISE only)
    std::vector<double> trace;             ///< per-epoch objective
    double soft_prediction = 0.0;
    double hard_prediction = 0.0;
};

inline constexpr int kExplanationSchemaVersion = 1;
std::string explanation_json(const ExplanationResult& result, const std::string& molecule_id = "");

struct RiseConfig {
    double k = 50.0;
    /// Linear schedule from k_start to k_end over the epochs instead of a fixed k.
    bool k_ramp = false;
    double k_start = 10.0;
    double k_end = 200.0;
    int epochs = 300;
    double learning_rate = 0.05;
    double theta_init = 0.0;
    double omega_init = 2.0;
    double init_noise = 0.0;  ///< gaussian jitter on the initial theta and omega
    std::uint64_t seed = 0;
    /// Extra runs start from the initial point plus N(0, restart_noise) jitter.
    int restarts = 1;
    double restart_noise = 1.0;
    /// Return the visited radii with the lowest hard-subgraph loss rather than the last iterate.
    bool keep_best_hard = false;
    BudgetUnits units = BudgetUnits::angstrom;
    /// Overrides rho·sum(R) (or rho·n) when set.
    std::optional<double> budget;

    double k_at(int epoch) const;
    void validate() const;
};

/// Normalized objective ((prediction − Y)/s)^2, where s is the model's target scale.
double prediction_loss(double prediction, double target, const BackboneParams& params);

struct RiseOutcome {
    RadiusMask mask;
    ExplanationResult result;
};

/// Differentiable RISE objective for fixed parameters (theta, omega); the
/// value and gradients are exposed for verification.
struct RiseObjective {
    double loss = 0.0;
    Eigen::VectorXd grad_theta;
    Eigen::VectorXd grad_omega;
};
RiseObjective rise_objective(const MaskedForward& model, const BackboneParams& params,
                             const MolecularGraph& graph, const DirectedEdgeSet& edges, double target,
                             const RadiusMask& mask);

/// Optimizes (theta, omega) by Adam on the squared prediction error of the
/// soft-masked model, then extracts the hard DPG. With several restarts the
/// run whose final (or, with keep_best_hard, visited) radii give the lowest
/// hard loss wins; the soft mask is reported for those radii at the final k. Budget ratios at or above 1
/// return the full edge set; a ratio of 0 returns the empty set.
RiseOutcome rise_optimize(const BackboneParams& params, const MolecularGraph& graph,
                          const DirectedEdgeSet& edges, double target, double budget_ratio,
                          const RiseConfig& config);

/// Hard extraction for given m_r: build_dpg on the effective radii, restricted to `edges`.
ExplanationResult rise_extract(const MolecularGraph& graph, const DirectedEdgeSet& edges,
                               const Eigen::VectorXd& m_r, BudgetUnits units = BudgetUnits::angstrom);

struct BaselineLossWeights {
    double lambda_pred = 1.0;
    double lambda_size = 0.5;
    double lambda_ent = 0.1;

    void validate() const;
};

struct BaselineConfig {
    BaselineLossWeights weights;
    int epochs = 100;
    double learning_rate = 0.05;
    double init_logit = 1.0;
    double init_noise = 0.1;
    std::uint64_t seed = 0;
    int scorer_hidden = 64;  ///< PGExplainer MLP width

    void validate() const;
};

/// Sum of binary entropies, with 0·ln 0 = 0.
double entropy(const EdgeMask& mask);

/// Indices of the `count` largest values, ties to the smaller index; returned ascending.
std::vector<std::size_t> top_k(std::span<const double> values, std::size_t count);

/// floor(rho·|E|), clamped to [0, |E|].
std::size_t budget_edge_count(double budget_ratio, std::size_t edge_count);

/// Hard result keeping `keep` edges of a soft mask by top-k.
ExplanationResult extract_top_k(std::string explainer, const DirectedEdgeSet& edges, EdgeMask soft,
                                std::size_t keep);

/// Per-edge logits → sigmoid; objective λ_pred·L + λ_size·mean(M) + λ_ent·mean(H(M)).
/// Keeps `keep_count` edges when given, otherwise floor(rho·|E|).
ExplanationResult gnnexplainer_optimize(const BackboneParams& params, const MolecularGraph& graph,
                                        const DirectedEdgeSet& edges, double target, double budget_ratio,
                                        const BaselineConfig& config,
                                        std::optional<std::size_t> keep_count = std::nullopt);

/// Per-node logits → sigmoid; edge value is the product of its endpoint masks.
ExplanationResult lri_bernoulli_optimize(const BackboneParams& params, const MolecularGraph& graph,
                                         const DirectedEdgeSet& edges, double target, double budget_ratio,
                                         const BaselineConfig& config,
                                         std::optional<std::size_t> keep_count = std::nullopt);

/// LRI edge values from node masks.
EdgeMask node_product_mask(const Eigen::VectorXd& node_mask, const DirectedEdgeSet& edges);

struct ExplainTask {
    const MolecularGraph* graph = nullptr;
    const DirectedEdgeSet* edges = nullptr;
    double target = 0.0;
    std::optional<std::size_t> keep_count;
};

/// Shared edge scorer: [h_i, h_j, rbf(d_ij)] → hidden (ssp) → logit.
struct EdgeScorer {
    ad::Matrix w1, b1, w2, b2;

    /// Xavier first layer, zero output layer (all soft values start at 0.5).
    static EdgeScorer initialize(int input_dim, int hidden, std::uint64_t seed);
    std::vector<ad::Matrix*> tensors() { return {&w1, &b1, &w2, &b2}; }
};

/// Scorer inputs (E × (2h + K)) for one graph.
ad::Matrix scorer_inputs(const MaskedForward& model, const DirectedEdgeSet& edges);
EdgeMask score_edges(const EdgeScorer& scorer, const ad::Matrix& inputs);

struct PgExplainerOutcome {
    EdgeScorer scorer;
    std::vector<ExplanationResult> results;  ///< one per task, in task order
};

/// Trains one scorer across all tasks (full-batch Adam), then extracts each graph by top-k.
PgExplainerOutcome pgexplainer_optimize(const BackboneParams& params, std::span<const ExplainTask> tasks,
                                        double budget_ratio, const BaselineConfig& config);

struct ConsistencyGap {
    double soft_prediction = 0.0;
    double hard_prediction = 0.0;
    double prediction_gap = 0.0;  ///< |Φ(soft) − Φ(hard)|
    double relative_gap = 0.0;    ///< prediction_gap / max(|Φ(hard)|, 1e-12)
    double loss_gap = 0.0;        ///< |L(soft) − L(hard)| against Y
};

ConsistencyGap consistency_gap(const BackboneParams& params, const MolecularGraph& graph,
                               const DirectedEdgeSet& edges, const EdgeMask& soft, const EdgeMask& hard,
                               double target);

}  // namespace rise
