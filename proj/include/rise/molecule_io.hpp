#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rise/geometry.hpp"

namespace rise {

/// Elements understood by the parser; also the one-hot feature order.
inline const std::vector<std::string>& element_table() {
    static const std::vector<std::string> table{"H", "C", "N", "O", "F"};
    return table;
}
std::optional<int> element_index(std::string_view symbol);
int valence(std::string_view symbol);

struct LabeledMolecule {
    std::string id;
    MolecularGraph graph;
    double target = 0.0;
};

struct XyzAtom {
    std::string symbol;
    Eigen::Vector3d position;
};

struct XyzRecord {
    std::string comment;
    std::vector<XyzAtom> atoms;
};

XyzRecord parse_xyz_record(std::string_view text);

/// Parses XYZ text into a graph with one-hot element features and uniform
/// construction radii equal to `cutoff`. Throws ParseError with a 1-based line.
MolecularGraph parse_xyz(std::string_view text, double cutoff = 5.0);

/// Count line, comment line, then "Symbol x y z" with six decimals.
std::string write_xyz(const MolecularGraph& graph, std::string_view comment = "");

/// Builds a graph from element symbols and positions (Å).
MolecularGraph make_graph(const std::vector<std::string>& symbols, const Eigen::MatrixX3d& positions,
                          double cutoff);

using ElementPair = std::pair<std::string, std::string>;

/// Key with the two symbols in lexicographic order.
ElementPair element_pair(std::string_view a, std::string_view b);

struct BondParameters {
    double length = 0.0;    ///< Å
    double strength = 0.0;  ///< bonded-term prefactor
};

/// Default bond table: C–C 1.530 Å and C–H 1.095 Å, other pairs from
/// standard covalent bond lengths.
std::map<ElementPair, BondParameters> default_bond_table();

struct SyntheticCorpusConfig {
    std::size_t molecule_count = 500;
    int min_heavy_atoms = 1;
    int max_heavy_atoms = 4;
    int min_atoms = 3;
    int max_atoms = 14;
    /// Heavy-element sampling weights.
    std::vector<std::pair<std::string, double>> heavy_elements{{"C", 0.6}, {"N", 0.2}, {"O", 0.2}};
    std::map<ElementPair, BondParameters> bond_table = default_bond_table();
    double bond_jitter = 0.02;          ///< relative, uniform
    double angle_jitter_degrees = 3.0;  ///< gaussian sigma
    double min_nonbonded_distance = 1.6;
    double bonded_weight = 1.0;
    double bond_exponent = 2.0;  ///< q in the bonded term s·(r0/d)^q
    double nonbonded_weight = 10.0;
    double decay_exponent = 6.0;
    double cutoff = 5.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Target of a geometry: sum over bonds of w_b·s·(r0/d)^q plus
/// sum over non-bonded pairs of w_n·d^-p.
double synthetic_target(const MolecularGraph& graph, const SyntheticCorpusConfig& config);

/// One molecule drawn with the generator stream `rng_seed`. Geometry is a
/// tree of heavy atoms with tetrahedral bond directions, saturated with H.
LabeledMolecule generate_molecule(const SyntheticCorpusConfig& config, std::uint64_t rng_seed,
                                  std::string id);

/// Ethane with tetrahedral geometry. `rng_seed` only randomizes the
/// orientation, torsion and jitter; jitter 0 gives C–C 1.530 Å, C–H 1.095 Å.
LabeledMolecule generate_ethane(const SyntheticCorpusConfig& config, std::uint64_t rng_seed,
                                std::string id, bool jitter = true);

std::vector<LabeledMolecule> generate_synthetic_corpus(const SyntheticCorpusConfig& config);

struct CorpusSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Disjoint, exhaustive, seeded split; sizes by the largest-remainder rule.
CorpusSplit split_corpus(std::size_t item_count, const std::array<double, 3>& fractions,
                         std::uint64_t seed);

template <typename T>
std::vector<T> take(const std::vector<T>& items, const std::vector<std::size_t>& indices) {
    std::vector<T> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(items.at(i));
    return out;
}

/// A corpus on disk: one XYZ file per molecule plus manifest.json holding
/// targets, bonds, split membership and the generating configuration.
struct StoredCorpus {
    std::vector<LabeledMolecule> molecules;
    CorpusSplit split;
    std::string config_json;  ///< generator configuration echo
    std::uint64_t seed = 0;
};

void save_corpus(const StoredCorpus& corpus, const std::filesystem::path& directory);
StoredCorpus load_corpus(const std::filesystem::path& directory, double cutoff);

std::string config_to_json(const SyntheticCorpusConfig& config);

}  // namespace rise
