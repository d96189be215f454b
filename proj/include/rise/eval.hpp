#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rise/backbone.hpp"
#include "rise/explainers.hpp"
#include "rise/geometry.hpp"
#include "rise/molecule_io.hpp"

namespace rise {

/// Original edges of a molecule: the DPG of its construction radii.
DirectedEdgeSet original_edges(const MolecularGraph& graph);

struct AnnulusStudyTable {
    AnnulusBinning binning;
    int trials = 20;
    double fraction = 0.1;
    double original_mae = 0.0;
    std::vector<std::size_t> bin_edge_counts;  ///< pooled over the corpus
    std::vector<bool> empty_bin;
    std::vector<double> full_removal_mae;
    std::vector<double> random_mean_mae;
    std::vector<double> random_std_mae;  ///< sample standard deviation over trials
};

/// Per band: MAE with the whole band removed, and mean/std MAE over `trials`
/// seeded removals of `fraction` of the band's edges in every molecule.
AnnulusStudyTable annulus_study(const BackboneParams& params, std::span<const LabeledMolecule> corpus,
                                const AnnulusBinning& binning, std::uint64_t seed, int trials = 20,
                                double fraction = 0.1);

std::string annulus_csv(const AnnulusStudyTable& table);

struct BondScore {
    double precision = 0.0;  ///< 0 when nothing is kept
    double recall = 0.0;
};

/// Undirected scoring: a pair counts as kept when either direction is kept.
BondScore bond_recovery(const ExplanationResult& result, const std::vector<BondPair>& truth);
BondScore bond_recovery(const ExplanationResult& result, const MolecularGraph& graph);

struct OracleResult {
    Eigen::VectorXd radii;
    double loss = 0.0;
    std::size_t assignments = 0;  ///< feasible grid points enumerated
    std::size_t distinct_subgraphs = 0;
};

/// Exhaustive search over radii in {0, R_i/(g−1), ..., R_i} (g = 1 means
/// {0, R_i}) with sum(radii) ≤ budget, minimizing the hard-subgraph loss.
/// Requires n ≤ 6 and g ≤ 8.
OracleResult brute_force_oracle(const BackboneParams& params, const MolecularGraph& graph,
                                const DirectedEdgeSet& edges, double target, double budget, int grid_levels);

/// Largest grid value not above each radius.
Eigen::VectorXd floor_to_grid(const Eigen::VectorXd& radii, const Eigen::VectorXd& construction_radii,
                              int grid_levels);

struct OracleCheckConfig {
    std::size_t instances = 50;
    int grid_levels = 8;
    double tolerance = 1.05;          ///< RISE loss ≤ tolerance × oracle loss
    double required_fraction = 0.8;
    double min_ratio = 0.1;           ///< budget ratios drawn uniformly in [min, max]
    double max_ratio = 0.6;
    /// Floor RISE's radii onto the oracle grid before scoring.
    bool discretize = true;
    SyntheticCorpusConfig corpus = [] {
        SyntheticCorpusConfig c;
        c.max_atoms = 6;
        return c;
    }();
    RiseConfig rise;
    std::uint64_t seed = 0;

    void validate() const;
};

struct OracleCheckRow {
    std::string molecule;
    std::size_t atoms = 0;
    std::size_t edges = 0;
    double budget_ratio = 0.0;
    double rise_loss = 0.0;       ///< scored loss (grid radii when discretizing)
    double rise_continuous_loss = 0.0;
    double oracle_loss = 0.0;
    std::size_t distinct_subgraphs = 0;
    bool within = false;
};

struct OracleCheckReport {
    std::vector<OracleCheckRow> rows;
    double fraction_within = 0.0;
    bool passed = false;
};

/// RISE against the exhaustive grid optimum on random small molecules.
OracleCheckReport oracle_check(const BackboneParams& params, const OracleCheckConfig& config);
std::string oracle_csv(const OracleCheckReport& report);

enum class ExplainerKind { rise, gnnexplainer, pgexplainer, lri_bernoulli };
std::string explainer_name(ExplainerKind kind);
std::optional<ExplainerKind> parse_explainer(const std::string& name);
std::vector<ExplainerKind> all_explainers();

struct SweepConfig {
    std::vector<ExplainerKind> explainers = all_explainers();
    std::vector<double> budget_ratios{0.3, 0.4, 0.5};
    RiseConfig rise;
    BaselineConfig baseline;
    /// Baselines keep max(floor(rho·|E|), RISE's kept count) edges per molecule.
    bool align_to_rise = true;
    double max_failure_fraction = 0.05;
    std::uint64_t seed = 0;
};

struct EvalRecord {
    std::string explainer;
    double budget_ratio = 0.0;
    double mae = 0.0;
    double edges_preserved_fraction = 0.0;
    double mean_kept_edges = 0.0;
    double mean_original_edges = 0.0;
    double consistency_gap = 0.0;  ///< mean relative soft/hard prediction gap
    std::optional<double> bond_precision;
    std::optional<double> bond_recall;
    std::size_t molecules = 0;
    std::size_t skipped = 0;
    bool valid = true;
    double runtime_seconds = 0.0;
};

struct MoleculeEval {
    std::string molecule;
    std::string explainer;
    double budget_ratio = 0.0;
    double target = 0.0;
    double hard_prediction = 0.0;
    double soft_prediction = 0.0;
    std::size_t kept_edges = 0;
    std::size_t original_edges = 0;
    double relative_gap = 0.0;
    std::optional<BondScore> bonds;
    std::optional<std::string> failure;
};

struct SweepResult {
    std::vector<EvalRecord> records;        ///< explainer-major, then budget ratio
    std::vector<MoleculeEval> molecules;    ///< per (ratio, explainer, molecule)
};

SweepResult fidelity_sweep(const BackboneParams& params, std::span<const LabeledMolecule> corpus,
                           const SweepConfig& config);

/// slack · sum over atoms of the longest bond at that atom: enough radius
/// mass to cover every bond from both ends.
double bond_scale_budget(const MolecularGraph& graph, double slack = 1.05);

struct BondStudyConfig {
    std::size_t instances = 50;
    double slack = 1.05;
    std::vector<ExplainerKind> explainers = all_explainers();
    SyntheticCorpusConfig corpus;
    RiseConfig rise;
    BaselineConfig baseline;
    std::uint64_t seed = 0;
};

struct BondStudyRow {
    std::string molecule;
    std::string explainer;
    std::size_t kept_edges = 0;
    std::size_t bond_edges = 0;  ///< directed
    BondScore score;
    bool exact = false;          ///< precision = recall = 1
};

struct BondStudySummary {
    std::string explainer;
    double exact_fraction = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
};

struct BondStudyResult {
    std::vector<BondStudyRow> rows;  ///< explainer-major
    std::vector<BondStudySummary> summary;
};

/// Ethane instances under a bond-scale RISE budget. Baselines keep as many
/// edges as RISE does on the same instance.
BondStudyResult bond_study(const BackboneParams& params, const BondStudyConfig& config);
std::string bond_rows_csv(std::span<const BondStudyRow> rows);

/// One row per record; the column order is documented in leading '#' lines.
std::string records_csv(std::span<const EvalRecord> records);
std::string molecules_csv(std::span<const MoleculeEval> rows);
/// JSON summary of the records (runtime omitted so reruns compare byte-for-byte).
std::string records_json(std::span<const EvalRecord> records);

/// Locale-independent shortest round-trip formatting.
std::string format_double(double value);

}  // namespace rise
