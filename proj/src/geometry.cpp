#include "rise/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rise/errors.hpp"
#include "rise/rng.hpp"

namespace rise {

void MolecularGraph::validate() const {
    const auto n = static_cast<Eigen::Index>(node_count());
    if (n == 0) throw ContractError("molecular graph has no nodes");
    if (construction_radii.size() != n)
        throw ContractError("construction_radii length does not match node count");
    if (node_features.rows() != n) throw ContractError("node_features rows do not match node count");
    if (atom_labels.size() != static_cast<std::size_t>(n))
        throw ContractError("atom_labels length does not match node count");
    if (!positions.allFinite()) throw ContractError("positions must be finite");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(construction_radii(i) > 0.0))
            throw ContractError("construction radius of node " + std::to_string(i) +
                                " must be strictly positive");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if ((positions.row(i) - positions.row(j)).norm() <= kDuplicatePointThreshold)
                throw DegenerateGeometryError("nodes " + std::to_string(i) + " and " +
                                              std::to_string(j) + " coincide");
        }
    }
    if (bond_truth) {
        for (const auto& b : *bond_truth) {
            if (b.first < 0 || b.second < 0 || b.first >= n || b.second >= n || b.first == b.second)
                throw ContractError("bond_truth references an invalid node pair");
        }
    }
}

void EdgeMask::validate() const {
    for (double v : values) {
        if (kind == MaskKind::hard) {
            if (v != 0.0 && v != 1.0) throw ContractError("hard mask entries must be 0 or 1");
        } else if (!(v >= 0.0 && v <= 1.0)) {
            throw ContractError("soft mask entries must lie in [0, 1]");
        }
    }
}

bool DirectedEdgeSet::contains(int source, int target) const {
    return index_of(source, target).has_value();
}

std::optional<std::size_t> DirectedEdgeSet::index_of(int source, int target) const {
    auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{source, target},
                               [](const DirectedEdge& e, const std::pair<int, int>& key) {
                                   return std::pair{e.source, e.target} < key;
                               });
    if (it == edges.end() || it->source != source || it->target != target) return std::nullopt;
    return static_cast<std::size_t>(it - edges.begin());
}

Eigen::MatrixXi DirectedEdgeSet::adjacency() const {
    Eigen::MatrixXi a = Eigen::MatrixXi::Zero(node_count, node_count);
    for (const auto& e : edges) a(e.source, e.target) = 1;
    return a;
}

bool DirectedEdgeSet::is_symmetric() const {
    return std::all_of(edges.begin(), edges.end(),
                       [this](const DirectedEdge& e) { return contains(e.target, e.source); });
}

DirectedEdgeSet DirectedEdgeSet::select(std::span<const double> mask) const {
    if (mask.size() != edges.size()) throw ContractError("mask length does not match edge count");
    DirectedEdgeSet out{node_count, {}};
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (mask[e] != 0.0) out.edges.push_back(edges[e]);
    return out;
}

int AnnulusBinning::bin_of(double distance) const {
    const int bins = bin_count();
    for (int k = 1; k < bins; ++k)
        if (distance < cutoffs[static_cast<std::size_t>(k)]) return k;
    return bins;
}

std::vector<int> AnnulusBinning::bins_of(const DirectedEdgeSet& edges) const {
    std::vector<int> out;
    out.reserve(edges.size());
    for (const auto& e : edges.edges) out.push_back(bin_of(e.distance));
    return out;
}

DistanceMatrix pairwise_distances(const MolecularGraph& graph) {
    const auto n = static_cast<Eigen::Index>(graph.node_count());
    DistanceMatrix d{Eigen::MatrixXd::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dij = (graph.positions.row(i) - graph.positions.row(j)).norm();
            if (dij <= kDuplicatePointThreshold)
                throw DegenerateGeometryError("nodes " + std::to_string(i) + " and " +
                                              std::to_string(j) + " coincide");
            d.values(i, j) = dij;
            d.values(j, i) = dij;
        }
    }
    return d;
}

DirectedEdgeSet build_dpg(const DistanceMatrix& distances, std::span<const double> radii) {
    const auto n = static_cast<int>(distances.size());
    if (radii.size() != static_cast<std::size_t>(n))
        throw ContractError("radii length does not match node count");
    DirectedEdgeSet out{n, {}};
    for (int i = 0; i < n; ++i) {
        if (!(radii[static_cast<std::size_t>(i)] >= 0.0))
            throw ContractError("radii must be nonnegative");
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dij = distances(i, j);
            if (dij < radii[static_cast<std::size_t>(i)]) out.edges.push_back({i, j, dij});
        }
    }
    return out;
}

DirectedEdgeSet build_dpg(const MolecularGraph& graph, std::span<const double> radii) {
    if (radii.size() != graph.node_count())
        throw ContractError("radii length does not match node count");
    return build_dpg(pairwise_distances(graph), radii);
}

DirectedEdgeSet build_cutoff_graph(const MolecularGraph& graph, double cutoff) {
    if (!(cutoff > 0.0)) throw ContractError("cut-off must be positive");
    const std::vector<double> radii(graph.node_count(), cutoff);
    return build_dpg(graph, radii);
}

AnnulusBinning quantile_annuli(std::vector<double> distances, double cutoff, int num_bins) {
    if (distances.empty()) throw ContractError("annulus binning needs a nonempty corpus");
    if (num_bins < 1) throw ContractError("num_bins must be positive");
    if (!(cutoff > 0.0)) throw ContractError("cut-off must be positive");
    std::sort(distances.begin(), distances.end());
    const std::size_t count = distances.size();

    AnnulusBinning binning;
    binning.cutoffs.push_back(0.0);
    for (int k = 1; k < num_bins; ++k) {
        // Boundary between order statistics floor(q·N)-1 and floor(q·N).
        const std::size_t idx =
            count * static_cast<std::size_t>(k) / static_cast<std::size_t>(num_bins);
        const double lo = distances[std::max<std::size_t>(idx, 1) - 1];
        const double hi = distances[std::min(idx, count - 1)];
        double boundary = 0.5 * (lo + hi);
        // Keep boundaries strictly ascending even for heavily tied corpora.
        boundary = std::max(boundary, std::nextafter(binning.cutoffs.back(), cutoff));
        binning.cutoffs.push_back(std::min(boundary, cutoff));
    }
    binning.cutoffs.push_back(cutoff);
    return binning;
}

AnnulusBinning quantile_annuli(std::span<const DirectedEdgeSet> corpus, double cutoff,
                               int num_bins) {
    std::vector<double> pooled;
    for (const auto& set : corpus)
        for (const auto& e : set.edges) pooled.push_back(e.distance);
    return quantile_annuli(std::move(pooled), cutoff, num_bins);
}

AnnulusMask mask_annulus(const DirectedEdgeSet& edges, const AnnulusBinning& binning, int bin,
                         double fraction, std::uint64_t seed) {
    if (bin < 1 || bin > binning.bin_count()) throw ContractError("annulus bin out of range");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("fraction must lie in (0, 1]");

    AnnulusMask out{EdgeMask::ones(edges.size()), 0, false};
    std::vector<std::size_t> members;
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (binning.bin_of(edges.edges[e].distance) == bin) members.push_back(e);
    if (members.empty()) {
        out.empty_bin = true;
        return out;
    }

    const auto remove = std::min(
        members.size(),
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size()) - 1e-12)));
    Rng rng(seed);
    // Partial Fisher-Yates: the first `remove` slots become the sample.
    for (std::size_t s = 0; s < remove; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, members.size() - 1);
        std::swap(members[s], members[pick(rng)]);
        out.mask.values[members[s]] = 0.0;
    }
    out.removed = remove;
    return out;
}

}  // namespace rise
