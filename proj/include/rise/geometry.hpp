#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rise {

/// Unordered atom pair, stored with first < second.
struct BondPair {
    int first = 0;
    int second = 0;

    static BondPair make(int a, int b) { return a < b ? BondPair{a, b} : BondPair{b, a}; }
    friend bool operator==(const BondPair&, const BondPair&) = default;
    friend auto operator<=>(const BondPair&, const BondPair&) = default;
};

/// A 3D molecular graph: positions (Å), per-node construction radii (Å),
/// node features and element labels. Bond ground truth is optional.
struct MolecularGraph {
    Eigen::MatrixX3d positions;
    Eigen::VectorXd construction_radii;
    Eigen::MatrixXd node_features;
    std::vector<std::string> atom_labels;
    std::optional<std::vector<BondPair>> bond_truth;

    std::size_t node_count() const { return static_cast<std::size_t>(positions.rows()); }

    /// Throws ContractError on inconsistent sizes, nonpositive radii or bad bond
    /// indices, and DegenerateGeometryError on coincident points.
    void validate() const;
};

/// Minimum separation (Å) below which two points are considered identical.
inline constexpr double kDuplicatePointThreshold = 1e-9;

/// Symmetric n×n pairwise Euclidean distances with zero diagonal.
struct DistanceMatrix {
    Eigen::MatrixXd values;

    std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
    double operator()(int i, int j) const { return values(i, j); }
};

struct DirectedEdge {
    int source = 0;  ///< node whose radius covers the target (i in d_ij < r_i)
    int target = 0;
    double distance = 0.0;

    friend bool operator==(const DirectedEdge&, const DirectedEdge&) = default;
};

/// Directed edges sorted by (source, target). The position of an edge in
/// `edges` is its canonical index; masks are aligned to it.
struct DirectedEdgeSet {
    int node_count = 0;
    std::vector<DirectedEdge> edges;

    std::size_t size() const { return edges.size(); }
    bool empty() const { return edges.empty(); }
    bool contains(int source, int target) const;
    std::optional<std::size_t> index_of(int source, int target) const;
    Eigen::MatrixXi adjacency() const;
    bool is_symmetric() const;

    /// Keeps the edges whose mask entry is nonzero.
    DirectedEdgeSet select(std::span<const double> mask) const;
};

enum class MaskKind { soft, hard };

/// Per-directed-edge weights aligned with a DirectedEdgeSet. Hard masks hold
/// only 0/1; soft masks lie in [0, 1].
struct EdgeMask {
    MaskKind kind = MaskKind::hard;
    std::vector<double> values;

    static EdgeMask ones(std::size_t n) { return {MaskKind::hard, std::vector<double>(n, 1.0)}; }
    static EdgeMask zeros(std::size_t n) { return {MaskKind::hard, std::vector<double>(n, 0.0)}; }
    std::size_t size() const { return values.size(); }
    /// Throws ContractError if the values violate the kind's range.
    void validate() const;
};

/// Five distance bands [d_k, d_{k+1}); the last band is closed at the cut-off.
struct AnnulusBinning {
    std::vector<double> cutoffs;  ///< d_1 = 0 < ... < d_{bins+1} = construction cut-off

    int bin_count() const { return static_cast<int>(cutoffs.size()) - 1; }
    /// 1-based bin of a distance; distances at or beyond the cut-off go to the last bin.
    int bin_of(double distance) const;
    std::vector<int> bins_of(const DirectedEdgeSet& edges) const;
};

DistanceMatrix pairwise_distances(const MolecularGraph& graph);

/// Directed proximity graph: edge i→j iff i != j and d_ij < radii[i].
DirectedEdgeSet build_dpg(const MolecularGraph& graph, std::span<const double> radii);
DirectedEdgeSet build_dpg(const DistanceMatrix& distances, std::span<const double> radii);

DirectedEdgeSet build_cutoff_graph(const MolecularGraph& graph, double cutoff);

/// Fits band boundaries at the empirical 1/num_bins quantiles of the pooled
/// edge distances. The outer boundary is `cutoff`.
AnnulusBinning quantile_annuli(std::span<const DirectedEdgeSet> corpus, double cutoff,
                               int num_bins = 5);
AnnulusBinning quantile_annuli(std::vector<double> distances, double cutoff, int num_bins = 5);

struct AnnulusMask {
    EdgeMask mask;
    std::size_t removed = 0;
    bool empty_bin = false;
};

/// Removes ceil(fraction·|bin|) edges of band `bin`, drawn without replacement.
AnnulusMask mask_annulus(const DirectedEdgeSet& edges, const AnnulusBinning& binning, int bin,
                         double fraction, std::uint64_t seed);

}  // namespace rise
