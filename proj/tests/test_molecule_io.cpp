#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "rise/errors.hpp"
#include "rise/geometry.hpp"
#include "rise/molecule_io.hpp"

using namespace rise;

namespace {

bool connected(std::size_t n, const std::vector<BondPair>& bonds) {
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> root = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = root(parent[x]);
    };
    for (const auto& b : bonds) parent[root(static_cast<std::size_t>(b.first))] = root(static_cast<std::size_t>(b.second));
    for (std::size_t i = 1; i < n; ++i)
        if (root(i) != root(0)) return false;
    return true;
}

std::size_t parse_error_line(const std::string& text) {
    try {
        (void)parse_xyz(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST_CASE("hydrogen molecule reads back") {
    const auto g = parse_xyz("2\nH2\nH 0 0 0\nH 0 0 0.74\n", 4.0);
    CHECK(g.node_count() == 2);
    CHECK(pairwise_distances(g)(0, 1) == doctest::Approx(0.74).epsilon(1e-15));
    CHECK(g.construction_radii(0) == 4.0);
    CHECK(g.node_features(0, *element_index("H")) == 1.0);
    CHECK(g.node_features.row(1).sum() == 1.0);
    CHECK_FALSE(g.bond_truth.has_value());
}

TEST_CASE("a short file reports the missing atom line") {
    const std::string text = "3\nthree declared\nC 0 0 0\nH 1 0 0\n";
    try {
        (void)parse_xyz(text);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("atom line 3") != std::string::npos);
        CHECK(e.line() == 5);
    }
}

TEST_CASE("malformed XYZ inputs") {
    CHECK(parse_error_line("") == 1);
    CHECK(parse_error_line("two\nc\n") == 1);
    CHECK(parse_error_line("1\n") == 2);
    CHECK(parse_error_line("1\nc\nC 0 0 zero\n") == 3);
    CHECK(parse_error_line("1\nc\nC 0 0\n") == 3);
    CHECK(parse_error_line("2\nc\nC 0 0 0\nXe 1 1 1\n") == 4);
    CHECK(parse_error_line("1\nc\nC 0 0 0\nH 1 1 1\n") == 4);
    CHECK(parse_error_line("1\nc\nC 0 0 nan\n") == 3);
    CHECK_THROWS_AS(parse_xyz("2\nc\nC 0 0 0\nC 0 0 0\n"), DegenerateGeometryError);
}

TEST_CASE("windows line endings and trailing blank lines are accepted") {
    const auto g = parse_xyz("2\r\ncomment\r\nC 0 0 0\r\nO 0 0 1.2\r\n\r\n");
    CHECK(g.node_count() == 2);
    CHECK(g.atom_labels[1] == "O");
}

TEST_CASE("write then parse is identity to 1e-6 angstrom") {
    SyntheticCorpusConfig c;
    c.seed = 4;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto m = generate_molecule(c, s, "m");
        const auto back = parse_xyz(write_xyz(m.graph, "roundtrip"), c.cutoff);
        REQUIRE(back.node_count() == m.graph.node_count());
        CHECK((back.positions - m.graph.positions).cwiseAbs().maxCoeff() <= 5e-7);
        CHECK(back.atom_labels == m.graph.atom_labels);
        CHECK(back.node_features == m.graph.node_features);
    }
}

TEST_CASE("standard ethane has the figure bond lengths") {
    SyntheticCorpusConfig c;
    const auto m = generate_ethane(c, 0, "ethane", false);
    const auto back = parse_xyz(write_xyz(m.graph), 5.0);
    const auto d = pairwise_distances(back);
    REQUIRE(m.graph.bond_truth->size() == 7);
    int cc = 0, ch = 0;
    for (const auto& b : *m.graph.bond_truth) {
        const bool carbon_pair = m.graph.atom_labels[b.first] == "C" && m.graph.atom_labels[b.second] == "C";
        const double expected = carbon_pair ? 1.530 : 1.095;
        (carbon_pair ? cc : ch)++;
        CHECK(std::abs(d(b.first, b.second) - expected) <= 1e-3);
    }
    CHECK(cc == 1);
    CHECK(ch == 6);
}

TEST_CASE("generation is deterministic per seed") {
    SyntheticCorpusConfig c;
    c.molecule_count = 20;
    c.seed = 12;
    const auto a = generate_synthetic_corpus(c);
    const auto b = generate_synthetic_corpus(c);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].target == b[i].target);
        CHECK(a[i].graph.positions == b[i].graph.positions);
    }
    c.seed = 13;
    CHECK(generate_synthetic_corpus(c)[0].graph.positions != a[0].graph.positions);
}

TEST_CASE("generated molecules respect bond lengths, connectivity and the target formula") {
    SyntheticCorpusConfig c;
    c.molecule_count = 80;
    c.seed = 2;
    const auto corpus = generate_synthetic_corpus(c);
    for (const auto& m : corpus) {
        const auto& g = m.graph;
        REQUIRE(g.bond_truth.has_value());
        CHECK(g.node_count() >= static_cast<std::size_t>(c.min_atoms));
        CHECK(g.node_count() <= static_cast<std::size_t>(c.max_atoms));
        CHECK(connected(g.node_count(), *g.bond_truth));
        const auto d = pairwise_distances(g);
        std::set<std::pair<int, int>> bonded;
        double y = 0.0;
        for (const auto& b : *g.bond_truth) {
            const auto& p = c.bond_table.at(element_pair(g.atom_labels[b.first], g.atom_labels[b.second]));
            CHECK(std::abs(d(b.first, b.second) / p.length - 1.0) <= c.bond_jitter + 1e-12);
            bonded.insert({b.first, b.second});
            y += c.bonded_weight * p.strength * std::pow(p.length / d(b.first, b.second), c.bond_exponent);
        }
        const int n = static_cast<int>(g.node_count());
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (!bonded.count({i, j})) {
                    CHECK(d(i, j) >= c.min_nonbonded_distance);
                    y += c.nonbonded_weight / std::pow(d(i, j), c.decay_exponent);
                }
        CHECK(m.target == doctest::Approx(y).epsilon(1e-12));
    }
}

TEST_CASE("without the non-bonded term only bonds matter") {
    SyntheticCorpusConfig c;
    c.nonbonded_weight = 0.0;
    const auto m = generate_molecule(c, 5, "m");
    const auto& g = m.graph;
    double y = 0.0;
    const auto d = pairwise_distances(g);
    for (const auto& b : *g.bond_truth) {
        const auto& p = c.bond_table.at(element_pair(g.atom_labels[b.first], g.atom_labels[b.second]));
        y += p.strength * std::pow(p.length / d(b.first, b.second), 2.0);
    }
    CHECK(m.target == doctest::Approx(y).epsilon(1e-12));
}

TEST_CASE("a 500 molecule corpus spans every band of a 5 angstrom binning") {
    SyntheticCorpusConfig c;
    const auto corpus = generate_synthetic_corpus(c);
    REQUIRE(corpus.size() == 500);
    std::vector<DirectedEdgeSet> sets;
    double mean = 0.0;
    for (const auto& m : corpus) {
        sets.push_back(build_cutoff_graph(m.graph, c.cutoff));
        mean += m.target;
    }
    mean /= 500.0;
    double var = 0.0;
    for (const auto& m : corpus) var += (m.target - mean) * (m.target - mean);
    CHECK(var > 0.0);
    const AnnulusBinning fixed{{0.0, 2.1, 2.6, 3.2, 4.0, 5.0}};
    std::vector<int> seen(6, 0);
    for (const auto& s : sets)
        for (int b : fixed.bins_of(s)) seen[static_cast<std::size_t>(b)]++;
    for (int k = 1; k <= 5; ++k) CHECK(seen[static_cast<std::size_t>(k)] > 0);
}

TEST_CASE("invalid generator settings") {
    SyntheticCorpusConfig c;
    c.decay_exponent = 0.5;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.molecule_count = 0;
    CHECK_THROWS_AS(generate_synthetic_corpus(c), ContractError);
    c = {};
    c.bond_table[element_pair("C", "C")].length = 0.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("largest-remainder split") {
    const auto s = split_corpus(10, {0.8, 0.1, 0.1}, 3);
    CHECK(s.train.size() == 8);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);
    const auto all_train = split_corpus(7, {1.0, 0.0, 0.0}, 3);
    CHECK(all_train.train.size() == 7);
    CHECK_THROWS_AS(split_corpus(10, {0.5, 0.2, 0.2}, 0), ContractError);
}

TEST_CASE("splits are disjoint, exhaustive and seeded") {
    for (std::size_t n : {1u, 7u, 33u, 500u}) {
        const auto s = split_corpus(n, {0.7, 0.2, 0.1}, 42);
        std::set<std::size_t> all;
        for (const auto* part : {&s.train, &s.validation, &s.test})
            for (auto i : *part) CHECK(all.insert(i).second);
        CHECK(all.size() == n);
        CHECK(*all.rbegin() == n - 1);
        const auto again = split_corpus(n, {0.7, 0.2, 0.1}, 42);
        CHECK(again.train == s.train);
        CHECK(again.test == s.test);
    }
}

TEST_CASE("corpus directories round-trip") {
    SyntheticCorpusConfig c;
    c.molecule_count = 12;
    c.seed = 8;
    StoredCorpus corpus;
    corpus.molecules = generate_synthetic_corpus(c);
    corpus.split = split_corpus(12, {0.5, 0.25, 0.25}, 1);
    corpus.config_json = config_to_json(c);
    corpus.seed = c.seed;
    const auto dir = std::filesystem::temp_directory_path() / "rise_corpus_roundtrip";
    std::filesystem::remove_all(dir);
    save_corpus(corpus, dir);
    const StoredCorpus back = load_corpus(dir, c.cutoff);
    REQUIRE(back.molecules.size() == 12);
    CHECK(back.split.train == corpus.split.train);
    CHECK(back.split.validation == corpus.split.validation);
    CHECK(back.split.test == corpus.split.test);
    CHECK(back.seed == 8);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(back.molecules[i].id == corpus.molecules[i].id);
        CHECK(back.molecules[i].target == corpus.molecules[i].target);
        CHECK(*back.molecules[i].graph.bond_truth == *corpus.molecules[i].graph.bond_truth);
        CHECK((back.molecules[i].graph.positions - corpus.molecules[i].graph.positions).cwiseAbs().maxCoeff() <= 5e-7);
    }
    std::filesystem::remove_all(dir);
    CHECK_THROWS(load_corpus(dir, 5.0));
}

TEST_CASE("element helpers") {
    CHECK(element_index("C") == std::optional<int>(1));
    CHECK_FALSE(element_index("Xe").has_value());
    CHECK(valence("C") == 4);
    CHECK(valence("H") == 1);
    CHECK(element_pair("H", "C") == ElementPair{"C", "H"});
    CHECK_THROWS_AS(make_graph({"C", "Q"}, Eigen::MatrixX3d::Zero(2, 3), 5.0), ContractError);
}
