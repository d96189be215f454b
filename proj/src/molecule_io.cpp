#include "rise/molecule_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "rise/errors.hpp"
#include "rise/rng.hpp"

namespace rise {

using nlohmann::json;

std::optional<int> element_index(std::string_view symbol) {
    const auto& table = element_table();
    for (std::size_t i = 0; i < table.size(); ++i)
        if (table[i] == symbol) return static_cast<int>(i);
    return std::nullopt;
}

int valence(std::string_view symbol) {
    if (symbol == "H" || symbol == "F") return 1;
    if (symbol == "C") return 4;
    if (symbol == "N") return 3;
    if (symbol == "O") return 2;
    throw ContractError("no valence known for element '" + std::string(symbol) + "'");
}

ElementPair element_pair(std::string_view a, std::string_view b) {
    return a < b ? ElementPair{std::string(a), std::string(b)} : ElementPair{std::string(b), std::string(a)};
}

std::map<ElementPair, BondParameters> default_bond_table() {
    // Lengths in Å; strengths are bond enthalpies in units of 100 kJ/mol.
    std::map<ElementPair, BondParameters> t;
    t[element_pair("C", "C")] = {1.530, 3.48};
    t[element_pair("C", "H")] = {1.095, 4.13};
    t[element_pair("C", "N")] = {1.470, 3.05};
    t[element_pair("C", "O")] = {1.430, 3.58};
    t[element_pair("C", "F")] = {1.350, 4.85};
    t[element_pair("N", "H")] = {1.010, 3.91};
    t[element_pair("O", "H")] = {0.960, 4.63};
    t[element_pair("F", "H")] = {0.917, 5.65};
    return t;
}

// ---------------------------------------------------------------------------
// XYZ

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        std::string_view line =
            text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (end == std::string_view::npos || end + 1 == text.size()) break;
        start = end + 1;
    }
    return lines;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

std::optional<double> to_double(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

XyzRecord parse_xyz_record(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty() || split_ws(lines[0]).empty()) throw ParseError("missing atom count", 1);
    const auto count_tokens = split_ws(lines[0]);
    long declared = -1;
    {
        const auto tok = count_tokens[0];
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), declared);
        if (ec != std::errc() || ptr != tok.data() + tok.size() || declared < 0 || count_tokens.size() != 1)
            throw ParseError("atom count is not a nonnegative integer", 1);
    }
    if (lines.size() < 2) throw ParseError("missing comment line", 2);

    XyzRecord record;
    record.comment = std::string(lines[1]);
    for (long a = 0; a < declared; ++a) {
        const std::size_t line_no = static_cast<std::size_t>(a) + 3;
        if (line_no > lines.size() || split_ws(lines[line_no - 1]).empty())
            throw ParseError("atom line " + std::to_string(a + 1) + " missing: expected " +
                                 std::to_string(declared) + " atom lines, found " + std::to_string(a),
                             line_no);
        const auto tokens = split_ws(lines[line_no - 1]);
        if (tokens.size() < 4) throw ParseError("expected 'Symbol x y z'", line_no);
        XyzAtom atom;
        atom.symbol = std::string(tokens[0]);
        for (int c = 0; c < 3; ++c) {
            const auto v = to_double(tokens[static_cast<std::size_t>(c) + 1]);
            if (!v) throw ParseError("unparseable coordinate '" + std::string(tokens[static_cast<std::size_t>(c) + 1]) + "'", line_no);
            atom.position(c) = *v;
        }
        record.atoms.push_back(std::move(atom));
    }
    for (std::size_t l = static_cast<std::size_t>(declared) + 2; l < lines.size(); ++l) {
        if (!split_ws(lines[l]).empty())
            throw ParseError("more atom lines than the declared count " + std::to_string(declared), l + 1);
    }
    return record;
}

MolecularGraph make_graph(const std::vector<std::string>& symbols, const Eigen::MatrixX3d& positions,
                          double cutoff) {
    const auto n = static_cast<Eigen::Index>(symbols.size());
    if (positions.rows() != n) throw ContractError("symbols and positions differ in length");
    MolecularGraph g;
    g.positions = positions;
    g.construction_radii = Eigen::VectorXd::Constant(n, cutoff);
    g.node_features = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(element_table().size()));
    g.atom_labels = symbols;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = element_index(symbols[static_cast<std::size_t>(i)]);
        if (!idx) throw ContractError("unknown element '" + symbols[static_cast<std::size_t>(i)] + "'");
        g.node_features(i, *idx) = 1.0;
    }
    return g;
}

MolecularGraph parse_xyz(std::string_view text, double cutoff) {
    const XyzRecord record = parse_xyz_record(text);
    std::vector<std::string> symbols;
    Eigen::MatrixX3d positions(static_cast<Eigen::Index>(record.atoms.size()), 3);
    for (std::size_t a = 0; a < record.atoms.size(); ++a) {
        if (!element_index(record.atoms[a].symbol))
            throw ParseError("unknown element '" + record.atoms[a].symbol + "'", a + 3);
        symbols.push_back(record.atoms[a].symbol);
        positions.row(static_cast<Eigen::Index>(a)) = record.atoms[a].position.transpose();
    }
    MolecularGraph g = make_graph(symbols, positions, cutoff);
    g.validate();
    return g;
}

std::string write_xyz(const MolecularGraph& graph, std::string_view comment) {
    std::string out = std::to_string(graph.node_count()) + "\n";
    out += std::string(comment) + "\n";
    char buf[128];
    for (std::size_t i = 0; i < graph.node_count(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        std::snprintf(buf, sizeof buf, "%s %.6f %.6f %.6f\n", graph.atom_labels[i].c_str(),
                      graph.positions(r, 0), graph.positions(r, 1), graph.positions(r, 2));
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SyntheticCorpusConfig::validate() const {
    if (molecule_count == 0) throw ContractError("molecule count must be positive");
    if (min_heavy_atoms < 1 || max_heavy_atoms < min_heavy_atoms)
        throw ContractError("invalid heavy-atom range");
    if (min_atoms < 1 || max_atoms < min_atoms) throw ContractError("invalid atom-count range");
    if (!(decay_exponent >= 1.0)) throw ContractError("decay exponent must be >= 1");
    if (!(bond_exponent >= 0.0)) throw ContractError("bond exponent must be nonnegative");
    if (heavy_elements.empty()) throw ContractError("no heavy elements configured");
    for (const auto& [sym, w] : heavy_elements) {
        if (!element_index(sym) || sym == "H") throw ContractError("invalid heavy element " + sym);
        if (!(w >= 0.0)) throw ContractError("heavy element weights must be nonnegative");
    }
    for (const auto& [pair, bond] : bond_table)
        if (!(bond.length > 0.0)) throw ContractError("bond lengths must be positive");
    if (!(bond_jitter >= 0.0 && bond_jitter < 0.5)) throw ContractError("bond jitter out of range");
    if (!(cutoff > 0.0)) throw ContractError("cut-off must be positive");
}

double synthetic_target(const MolecularGraph& graph, const SyntheticCorpusConfig& config) {
    if (!graph.bond_truth) throw ContractError("synthetic target needs bond ground truth");
    const DistanceMatrix d = pairwise_distances(graph);
    const auto n = static_cast<int>(graph.node_count());
    std::vector<char> bonded(static_cast<std::size_t>(n * n), 0);
    double y = 0.0;
    for (const auto& b : *graph.bond_truth) {
        bonded[static_cast<std::size_t>(b.first * n + b.second)] = 1;
        const auto key = element_pair(graph.atom_labels[static_cast<std::size_t>(b.first)],
                                      graph.atom_labels[static_cast<std::size_t>(b.second)]);
        const auto it = config.bond_table.find(key);
        if (it == config.bond_table.end())
            throw ContractError("bond table has no entry for " + key.first + "-" + key.second);
        const double ratio = it->second.length / d(b.first, b.second);
        y += config.bonded_weight * it->second.strength * std::pow(ratio, config.bond_exponent);
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (!bonded[static_cast<std::size_t>(i * n + j)])
                y += config.nonbonded_weight * std::pow(d(i, j), -config.decay_exponent);
    return y;
}

namespace {

constexpr double kTetrahedralAngle = 1.9106332362490186;  // acos(-1/3)

Eigen::Vector3d random_unit(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::Vector3d v;
    do {
        v = {g(rng), g(rng), g(rng)};
    } while (v.norm() < 1e-6);
    return v.normalized();
}

/// Four tetrahedral directions; the first is `axis`, the rest rotated by `phase`.
std::array<Eigen::Vector3d, 4> tetrahedral_directions(const Eigen::Vector3d& axis, double phase) {
    Eigen::Vector3d e1 = axis.unitOrthogonal();
    Eigen::Vector3d e2 = axis.cross(e1);
    std::array<Eigen::Vector3d, 4> dirs;
    dirs[0] = axis;
    for (int k = 0; k < 3; ++k) {
        const double phi = phase + 2.0 * std::numbers::pi * k / 3.0;
        dirs[static_cast<std::size_t>(k) + 1] =
            std::cos(kTetrahedralAngle) * axis +
            std::sin(kTetrahedralAngle) * (std::cos(phi) * e1 + std::sin(phi) * e2);
    }
    return dirs;
}

struct Skeleton {
    std::vector<std::string> heavy;
    std::vector<int> parent;  ///< -1 for the root
};

std::optional<Skeleton> sample_skeleton(const SyntheticCorpusConfig& config, Rng& rng) {
    std::uniform_int_distribution<int> count_dist(config.min_heavy_atoms, config.max_heavy_atoms);
    const int count = count_dist(rng);
    std::vector<double> weights;
    for (const auto& [sym, w] : config.heavy_elements) weights.push_back(w);
    std::discrete_distribution<std::size_t> element_dist(weights.begin(), weights.end());

    Skeleton s;
    std::vector<int> free;
    for (int k = 0; k < count; ++k) {
        std::string sym = config.heavy_elements[element_dist(rng)].first;
        if (k == 0) {
            if (count > 1) sym = "C";
            s.heavy.push_back(sym);
            s.parent.push_back(-1);
            free.push_back(valence(sym));
            continue;
        }
        auto candidates = [&](const std::string& e) {
            std::vector<int> c;
            for (int p = 0; p < k; ++p)
                if (free[static_cast<std::size_t>(p)] > 0 &&
                    config.bond_table.count(element_pair(s.heavy[static_cast<std::size_t>(p)], e)))
                    c.push_back(p);
            return c;
        };
        auto cand = candidates(sym);
        if (cand.empty()) {
            sym = "C";
            cand = candidates(sym);
        }
        if (cand.empty()) return std::nullopt;
        std::uniform_int_distribution<std::size_t> pick(0, cand.size() - 1);
        const int p = cand[pick(rng)];
        --free[static_cast<std::size_t>(p)];
        s.heavy.push_back(sym);
        s.parent.push_back(p);
        free.push_back(valence(sym) - 1);
    }
    return s;
}

double bond_length(const SyntheticCorpusConfig& config, const std::string& a, const std::string& b,
                   Rng& rng, bool jitter) {
    const auto it = config.bond_table.find(element_pair(a, b));
    if (it == config.bond_table.end())
        throw GenerationError("bond table has no entry for " + a + "-" + b);
    if (!jitter || config.bond_jitter == 0.0) return it->second.length;
    std::uniform_real_distribution<double> u(-config.bond_jitter, config.bond_jitter);
    return it->second.length * (1.0 + u(rng));
}

/// Places the skeleton plus saturating hydrogens; nullopt if atoms come too close.
std::optional<MolecularGraph> embed(const Skeleton& s, const SyntheticCorpusConfig& config, Rng& rng,
                                    bool jitter) {
    const int heavy = static_cast<int>(s.heavy.size());
    std::vector<std::vector<int>> heavy_children(static_cast<std::size_t>(heavy));
    std::vector<int> h_count(static_cast<std::size_t>(heavy));
    for (int k = 0; k < heavy; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (s.parent[ku] >= 0) heavy_children[static_cast<std::size_t>(s.parent[ku])].push_back(k);
    }
    int total = heavy;
    for (int k = 0; k < heavy; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const int used = static_cast<int>(heavy_children[ku].size()) + (s.parent[ku] >= 0 ? 1 : 0);
        h_count[ku] = valence(s.heavy[ku]) - used;
        if (h_count[ku] < 0) return std::nullopt;
        total += h_count[ku];
    }

    std::vector<std::string> symbols = s.heavy;
    std::vector<Eigen::Vector3d> pos(static_cast<std::size_t>(total), Eigen::Vector3d::Zero());
    std::vector<BondPair> bonds;
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> wobble(
        0.0, std::max(config.angle_jitter_degrees * std::numbers::pi / 180.0, 1e-12));
    int next_h = heavy;

    for (int a = 0; a < heavy; ++a) {
        const auto au = static_cast<std::size_t>(a);
        std::vector<Eigen::Vector3d> slots;
        if (s.parent[au] < 0) {
            const auto dirs = tetrahedral_directions(random_unit(rng), phase_dist(rng));
            slots.assign(dirs.begin(), dirs.end());
        } else {
            const Eigen::Vector3d axis =
                (pos[static_cast<std::size_t>(s.parent[au])] - pos[au]).normalized();
            const auto dirs = tetrahedral_directions(axis, phase_dist(rng));
            slots.assign(dirs.begin() + 1, dirs.end());
        }
        std::shuffle(slots.begin(), slots.end(), rng);

        std::vector<int> children = heavy_children[au];
        for (int h = 0; h < h_count[au]; ++h) {
            symbols.push_back("H");
            children.push_back(next_h++);
        }
        if (children.size() > slots.size()) return std::nullopt;
        for (std::size_t c = 0; c < children.size(); ++c) {
            const auto child = static_cast<std::size_t>(children[c]);
            Eigen::Vector3d dir = slots[c];
            if (jitter && config.angle_jitter_degrees > 0.0) {
                dir += Eigen::Vector3d(wobble(rng), wobble(rng), wobble(rng));
                dir.normalize();
            }
            pos[child] = pos[au] + bond_length(config, s.heavy[au], symbols[child], rng, jitter) * dir;
            bonds.push_back(BondPair::make(a, children[c]));
        }
    }

    Eigen::MatrixX3d positions(total, 3);
    for (int i = 0; i < total; ++i)
        for (int c = 0; c < 3; ++c)
            positions(i, c) = std::round(pos[static_cast<std::size_t>(i)](c) * 1e6) / 1e6;

    MolecularGraph g = make_graph(symbols, positions, config.cutoff);
    std::sort(bonds.begin(), bonds.end());
    g.bond_truth = bonds;

    std::vector<char> bonded(static_cast<std::size_t>(total * total), 0);
    for (const auto& b : bonds) bonded[static_cast<std::size_t>(b.first * total + b.second)] = 1;
    for (int i = 0; i < total; ++i)
        for (int j = i + 1; j < total; ++j) {
            const double dij = (positions.row(i) - positions.row(j)).norm();
            if (!bonded[static_cast<std::size_t>(i * total + j)] && dij < config.min_nonbonded_distance)
                return std::nullopt;
        }
    return g;
}

constexpr int kMaxAttempts = 100;

}  // namespace

LabeledMolecule generate_molecule(const SyntheticCorpusConfig& config, std::uint64_t rng_seed,
                                  std::string id) {
    Rng rng(rng_seed);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const auto skeleton = sample_skeleton(config, rng);
        if (!skeleton) continue;
        auto graph = embed(*skeleton, config, rng, true);
        if (!graph) continue;
        const auto n = static_cast<int>(graph->node_count());
        if (n < config.min_atoms || n > config.max_atoms) continue;
        LabeledMolecule m{std::move(id), std::move(*graph), 0.0};
        m.target = synthetic_target(m.graph, config);
        return m;
    }
    throw GenerationError("could not generate a valid molecule in " + std::to_string(kMaxAttempts) +
                          " attempts");
}

LabeledMolecule generate_ethane(const SyntheticCorpusConfig& config, std::uint64_t rng_seed,
                                std::string id, bool jitter) {
    Rng rng(rng_seed);
    const Skeleton ethane{{"C", "C"}, {-1, 0}};
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        auto graph = embed(ethane, config, rng, jitter);
        if (!graph) continue;
        LabeledMolecule m{std::move(id), std::move(*graph), 0.0};
        m.target = synthetic_target(m.graph, config);
        return m;
    }
    throw GenerationError("could not place ethane");
}

std::vector<LabeledMolecule> generate_synthetic_corpus(const SyntheticCorpusConfig& config) {
    config.validate();
    std::vector<LabeledMolecule> corpus;
    corpus.reserve(config.molecule_count);
    char id[32];
    for (std::size_t i = 0; i < config.molecule_count; ++i) {
        std::snprintf(id, sizeof id, "mol_%05zu", i);
        corpus.push_back(generate_molecule(config, derive_seed(config.seed, i), id));
    }
    return corpus;
}

CorpusSplit split_corpus(std::size_t item_count, const std::array<double, 3>& fractions,
                         std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0)) throw ContractError("split fractions must be nonnegative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractError("split fractions must sum to 1");

    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double quota = fractions[k] * static_cast<double>(item_count);
        sizes[k] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        remainder[k] = quota - static_cast<double>(sizes[k]);
        assigned += sizes[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t r = 0; assigned < item_count; ++r, ++assigned) ++sizes[order[r % 3]];

    std::vector<std::size_t> perm(item_count);
    for (std::size_t i = 0; i < item_count; ++i) perm[i] = i;
    Rng rng(seed);
    for (std::size_t i = item_count; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    CorpusSplit split;
    auto begin = perm.begin();
    split.train.assign(begin, begin + static_cast<std::ptrdiff_t>(sizes[0]));
    begin += static_cast<std::ptrdiff_t>(sizes[0]);
    split.validation.assign(begin, begin + static_cast<std::ptrdiff_t>(sizes[1]));
    begin += static_cast<std::ptrdiff_t>(sizes[1]);
    split.test.assign(begin, perm.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

// ---------------------------------------------------------------------------
// Persistence

std::string config_to_json(const SyntheticCorpusConfig& config) {
    json j;
    j["molecule_count"] = config.molecule_count;
    j["heavy_atoms"] = {config.min_heavy_atoms, config.max_heavy_atoms};
    j["atoms"] = {config.min_atoms, config.max_atoms};
    json heavy = json::array();
    for (const auto& [sym, w] : config.heavy_elements) heavy.push_back({sym, w});
    j["heavy_elements"] = heavy;
    json bonds = json::array();
    for (const auto& [pair, b] : config.bond_table)
        bonds.push_back({{"pair", {pair.first, pair.second}}, {"length", b.length}, {"strength", b.strength}});
    j["bond_table"] = bonds;
    j["bond_jitter"] = config.bond_jitter;
    j["angle_jitter_degrees"] = config.angle_jitter_degrees;
    j["min_nonbonded_distance"] = config.min_nonbonded_distance;
    j["bonded_weight"] = config.bonded_weight;
    j["nonbonded_weight"] = config.nonbonded_weight;
    j["decay_exponent"] = config.decay_exponent;
    j["bond_exponent"] = config.bond_exponent;
    j["cutoff"] = config.cutoff;
    j["seed"] = config.seed;
    return j.dump();
}

void save_corpus(const StoredCorpus& corpus, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    std::vector<std::string> membership(corpus.molecules.size(), "train");
    for (auto i : corpus.split.validation) membership.at(i) = "validation";
    for (auto i : corpus.split.test) membership.at(i) = "test";

    json manifest;
    manifest["format"] = "rise-corpus";
    manifest["version"] = 1;
    manifest["seed"] = corpus.seed;
    manifest["config"] = corpus.config_json.empty() ? json::object() : json::parse(corpus.config_json);
    json molecules = json::array();
    for (std::size_t i = 0; i < corpus.molecules.size(); ++i) {
        const auto& m = corpus.molecules[i];
        const std::string file = m.id + ".xyz";
        std::ofstream out(directory / file, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (directory / file).string());
        out << write_xyz(m.graph, m.id);
        json entry{{"id", m.id}, {"file", file}, {"target", m.target}, {"split", membership[i]}};
        json bonds = json::array();
        if (m.graph.bond_truth)
            for (const auto& b : *m.graph.bond_truth) bonds.push_back({b.first, b.second});
        entry["bonds"] = bonds;
        molecules.push_back(entry);
    }
    manifest["molecules"] = molecules;
    manifest["count"] = corpus.molecules.size();
    std::ofstream out(directory / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest in " + directory.string());
    out << manifest.dump(2) << "\n";
}

StoredCorpus load_corpus(const std::filesystem::path& directory, double cutoff) {
    const auto manifest_path = directory / "manifest.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw std::runtime_error("corpus manifest not found: " + manifest_path.string());
    const json manifest = json::parse(in);
    if (manifest.value("format", "") != "rise-corpus")
        throw std::runtime_error("not a corpus manifest: " + manifest_path.string());

    StoredCorpus corpus;
    corpus.seed = manifest.value("seed", std::uint64_t{0});
    corpus.config_json = manifest.at("config").dump();
    const auto& molecules = manifest.at("molecules");
    for (std::size_t i = 0; i < molecules.size(); ++i) {
        const auto& entry = molecules[i];
        const auto path = directory / entry.at("file").get<std::string>();
        std::ifstream xyz(path, std::ios::binary);
        if (!xyz) throw std::runtime_error("molecule file not found: " + path.string());
        std::stringstream buffer;
        buffer << xyz.rdbuf();
        LabeledMolecule m;
        m.id = entry.at("id").get<std::string>();
        m.graph = parse_xyz(buffer.str(), cutoff);
        m.target = entry.at("target").get<double>();
        std::vector<BondPair> bonds;
        for (const auto& b : entry.at("bonds")) bonds.push_back(BondPair::make(b[0].get<int>(), b[1].get<int>()));
        if (!bonds.empty()) m.graph.bond_truth = bonds;
        m.graph.validate();
        const std::string split = entry.value("split", "train");
        if (split == "validation")
            corpus.split.validation.push_back(i);
        else if (split == "test")
            corpus.split.test.push_back(i);
        else
            corpus.split.train.push_back(i);
        corpus.molecules.push_back(std::move(m));
    }
    return corpus;
}

}  // namespace rise
