#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rise/errors.hpp"
#include "rise/eval.hpp"

using namespace rise;

namespace {

BackboneParams model(std::uint64_t seed) {
    BackboneConfig c;
    c.hidden = 8;
    c.layers = 2;
    c.num_rbf = 12;
    c.elements = element_table();
    BackboneParams p = BackboneParams::initialize(c, seed);
    std::mt19937_64 rng(seed + 3);
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& t : p.tensors)
        if (t.rows() == 1)
            for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = g(rng);
    return p;
}

LabeledMolecule small_molecule(std::uint64_t seed) {
    SyntheticCorpusConfig c;
    c.max_atoms = 6;
    c.seed = 31;
    return generate_molecule(c, seed, "s" + std::to_string(seed));
}

std::vector<LabeledMolecule> corpus(std::size_t count, std::uint64_t seed) {
    SyntheticCorpusConfig c;
    c.molecule_count = count;
    c.max_atoms = 8;
    c.seed = seed;
    return generate_synthetic_corpus(c);
}

double hard_loss(const BackboneParams& p, const LabeledMolecule& m, const DirectedEdgeSet& e,
                 const Eigen::VectorXd& radii) {
    const MaskedForward fwd(p, m.graph, e);
    return prediction_loss(fwd.predict(dpg_hard_mask(radii, e).values), m.target, p);
}

/// Plain recursive enumeration over every grid assignment.
double naive_oracle(const BackboneParams& p, const LabeledMolecule& m, const DirectedEdgeSet& e, double budget,
                    int g) {
    const auto n = static_cast<Eigen::Index>(m.graph.node_count());
    const int levels = g == 1 ? 2 : g;
    Eigen::VectorXd r(n);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(Eigen::Index, double)> visit = [&](Eigen::Index i, double used) {
        if (used > budget + 1e-9) return;
        if (i == n) {
            best = std::min(best, hard_loss(p, m, e, r));
            return;
        }
        for (int l = 0; l < levels; ++l) {
            r(i) = g == 1 ? l * m.graph.construction_radii(i)
                          : m.graph.construction_radii(i) * l / static_cast<double>(g - 1);
            visit(i + 1, used + r(i));
        }
    };
    visit(0, 0.0);
    return best;
}

ExplanationResult kept_result(const DirectedEdgeSet& kept) {
    ExplanationResult r;
    r.kept = kept;
    return r;
}

}  // namespace

TEST_CASE("bond recovery scores undirected pairs") {
    // Seven true bonds plus one stray pair kept in both directions.
    std::vector<BondPair> truth;
    for (int i = 1; i <= 7; ++i) truth.push_back({0, i});
    DirectedEdgeSet kept{9, {}};
    for (int i = 1; i <= 7; ++i) kept.edges.push_back({0, i, 1.0});
    kept.edges.push_back({1, 0, 1.0});
    kept.edges.push_back({2, 8, 2.0});
    kept.edges.push_back({8, 2, 2.0});
    const BondScore s = bond_recovery(kept_result(kept), truth);
    CHECK(s.precision == doctest::Approx(7.0 / 8.0));
    CHECK(s.recall == 1.0);

    const BondScore empty = bond_recovery(kept_result(DirectedEdgeSet{9, {}}), truth);
    CHECK(empty.precision == 0.0);
    CHECK(empty.recall == 0.0);

    MolecularGraph no_truth = small_molecule(1).graph;
    no_truth.bond_truth.reset();
    CHECK_THROWS_AS(bond_recovery(kept_result(kept), no_truth), ContractError);
}

TEST_CASE("ethane bond budget") {
    SyntheticCorpusConfig c;
    const auto e = generate_ethane(c, 0, "e", false);
    // Each carbon's longest bond is C-C; each hydrogen has one C-H bond.
    CHECK(bond_scale_budget(e.graph, 1.0) == doctest::Approx(2 * 1.530 + 6 * 1.095).epsilon(1e-6));
    CHECK(bond_scale_budget(e.graph) == doctest::Approx(1.05 * (2 * 1.530 + 6 * 1.095)).epsilon(1e-6));
    CHECK_THROWS_AS(bond_scale_budget(e.graph, 0.0), ContractError);
}

TEST_CASE("flooring onto the radius grid") {
    Eigen::VectorXd r(4), R(4);
    R << 7.0, 7.0, 7.0, 7.0;
    r << 0.0, 0.99, 1.0, 7.5;
    const Eigen::VectorXd f = floor_to_grid(r, R, 8);
    CHECK(f(0) == 0.0);
    CHECK(f(1) == 0.0);
    CHECK(f(2) == 1.0);
    CHECK(f(3) == 7.0);
    const Eigen::VectorXd two = floor_to_grid(r, R, 1);
    CHECK(two(2) == 0.0);
    CHECK(two(3) == 7.0);
    CHECK_THROWS_AS(floor_to_grid(r, Eigen::VectorXd::Ones(3), 8), ContractError);
}

TEST_CASE("the oracle agrees with plain enumeration") {
    const auto p = model(1);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ratio(0.0, 0.7);
    int checked = 0;
    for (std::uint64_t s = 0; checked < 6; ++s) {
        const auto m = small_molecule(s);
        if (m.graph.node_count() > 5) continue;
        ++checked;
        const auto e = original_edges(m.graph);
        const double budget = ratio(rng) * m.graph.construction_radii.sum();
        for (int g : {1, 3, 4}) {
            const auto o = brute_force_oracle(p, m.graph, e, m.target, budget, g);
            CHECK(o.loss == doctest::Approx(naive_oracle(p, m, e, budget, g)).epsilon(1e-12));
            CHECK(o.radii.sum() <= budget + 1e-9);
            CHECK(hard_loss(p, m, e, o.radii) == o.loss);
            CHECK(o.distinct_subgraphs <= o.assignments);
        }
    }
}

TEST_CASE("oracle corner budgets") {
    const auto p = model(2);
    const auto m = small_molecule(7);
    const auto e = original_edges(m.graph);
    const DirectedEdgeSet none{e.node_count, {}};
    const auto zero = brute_force_oracle(p, m.graph, e, m.target, 0.0, 8);
    CHECK(zero.assignments == 1);
    CHECK(zero.loss == prediction_loss(forward(m.graph, none, p).value, m.target, p));
    const auto full = brute_force_oracle(p, m.graph, e, m.target, m.graph.construction_radii.sum(), 2);
    CHECK(full.assignments == std::size_t{1} << m.graph.node_count());
    CHECK(full.loss <= prediction_loss(forward(m.graph, e, p).value, m.target, p));

    SyntheticCorpusConfig c;
    c.min_atoms = 7;
    c.max_atoms = 9;
    const auto big = generate_molecule(c, 0, "big");
    CHECK_THROWS_AS(brute_force_oracle(p, big.graph, original_edges(big.graph), big.target, 1.0, 4), ContractError);
    CHECK_THROWS_AS(brute_force_oracle(p, m.graph, e, m.target, 1.0, 9), ContractError);
    CHECK_THROWS_AS(brute_force_oracle(p, m.graph, e, m.target, -1.0, 4), ContractError);
}

TEST_CASE("the oracle dominates every feasible grid point") {
    const auto p = model(3);
    std::mt19937_64 rng(4);
    for (std::uint64_t s = 0; s < 8; ++s) {
        const auto m = small_molecule(s + 20);
        const auto e = original_edges(m.graph);
        const double budget = 0.4 * m.graph.construction_radii.sum();
        const auto o = brute_force_oracle(p, m.graph, e, m.target, budget, 8);
        RiseConfig rc;
        rc.epochs = 80;
        const auto rise = rise_optimize(p, m.graph, e, m.target, 0.4, rc);
        const Eigen::VectorXd snapped = floor_to_grid(*rise.result.radii, m.graph.construction_radii, 8);
        CHECK(snapped.sum() <= budget + 1e-9);
        CHECK(o.loss <= hard_loss(p, m, e, snapped));
        std::uniform_int_distribution<int> level(0, 7);
        for (int t = 0; t < 20; ++t) {
            Eigen::VectorXd r(m.graph.construction_radii.size());
            for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = m.graph.construction_radii(i) * level(rng) / 7.0;
            if (r.sum() > budget) continue;
            CHECK(o.loss <= hard_loss(p, m, e, r));
        }
    }
}

TEST_CASE("oracle check settings are validated") {
    OracleCheckConfig c;
    CHECK_NOTHROW(c.validate());
    c.corpus.max_atoms = 7;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.tolerance = 0.9;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.min_ratio = 0.7;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = {};
    c.instances = 0;
    CHECK_THROWS_AS(oracle_check(model(0), c), ContractError);
}

TEST_CASE("a small oracle check is reproducible and self-consistent") {
    const auto p = model(5);
    OracleCheckConfig c;
    c.instances = 4;
    c.grid_levels = 4;
    c.rise.epochs = 40;
    const auto a = oracle_check(p, c);
    const auto b = oracle_check(p, c);
    REQUIRE(a.rows.size() == 4);
    CHECK(oracle_csv(a) == oracle_csv(b));
    std::size_t within = 0;
    for (const auto& r : a.rows) {
        CHECK(r.oracle_loss <= r.rise_loss);
        CHECK(r.budget_ratio >= c.min_ratio);
        CHECK(r.budget_ratio <= c.max_ratio);
        CHECK(r.within == (r.rise_loss <= c.tolerance * r.oracle_loss));
        within += r.within ? 1 : 0;
    }
    CHECK(a.fraction_within == within / 4.0);
    CHECK(a.passed == (a.fraction_within >= c.required_fraction));
}

TEST_CASE("annulus study table shape") {
    const auto p = model(6);
    const auto mols = corpus(12, 3);
    std::vector<DirectedEdgeSet> sets;
    for (const auto& m : mols) sets.push_back(build_cutoff_graph(m.graph, 5.0));
    const auto bins = quantile_annuli(sets, 5.0);
    const auto t = annulus_study(p, mols, bins, 9, 3);
    CHECK(t.full_removal_mae.size() == 5);
    CHECK(t.random_mean_mae.size() == 5);
    CHECK(t.random_std_mae.size() == 5);
    std::size_t total = 0;
    for (auto n : t.bin_edge_counts) total += n;
    std::size_t expected = 0;
    for (const auto& s : sets) expected += s.size();
    CHECK(total == expected);
    CHECK(annulus_csv(t) == annulus_csv(annulus_study(p, mols, bins, 9, 3)));
    CHECK_THROWS_AS(annulus_study(p, mols, bins, 9, 0), ContractError);
}

TEST_CASE("sweep at full and empty budgets") {
    const auto p = model(7);
    const auto mols = corpus(6, 4);
    SweepConfig c;
    c.budget_ratios = {0.0, 1.0};
    c.rise.epochs = 20;
    c.baseline.epochs = 10;
    c.baseline.scorer_hidden = 8;
    const auto res = fidelity_sweep(p, mols, c);
    REQUIRE(res.records.size() == 8);
    double full_mae = 0.0, empty_mae = 0.0;
    for (const auto& m : mols) {
        const auto e = original_edges(m.graph);
        full_mae += std::abs(forward(m.graph, e, p).value - m.target);
        empty_mae += std::abs(forward(m.graph, DirectedEdgeSet{e.node_count, {}}, p).value - m.target);
    }
    full_mae /= 6.0;
    empty_mae /= 6.0;
    for (const auto& r : res.records) {
        CHECK(r.valid);
        CHECK(r.molecules == 6);
        if (r.budget_ratio == 1.0) {
            CHECK(r.mae == doctest::Approx(full_mae).epsilon(1e-12));
            CHECK(r.edges_preserved_fraction == 1.0);
        } else if (r.explainer == "rise") {
            CHECK(r.mae == doctest::Approx(empty_mae).epsilon(1e-12));
            CHECK(r.edges_preserved_fraction == 0.0);
        }
        CHECK(r.bond_recall.has_value());
    }
    CHECK(res.molecules.size() == 8 * 6);
}

TEST_CASE("aligned baselines keep at least as many edges as RISE") {
    const auto p = model(8);
    const auto mols = corpus(5, 6);
    SweepConfig c;
    c.budget_ratios = {0.3};
    c.rise.epochs = 30;
    c.baseline.epochs = 10;
    c.baseline.scorer_hidden = 8;
    const auto res = fidelity_sweep(p, mols, c);
    std::map<std::string, std::size_t> rise_kept;
    for (const auto& m : res.molecules)
        if (m.explainer == "rise") rise_kept[m.molecule] = m.kept_edges;
    for (const auto& m : res.molecules) {
        if (m.explainer == "rise") continue;
        CHECK(m.kept_edges >= rise_kept[m.molecule]);
        CHECK(m.kept_edges >= budget_edge_count(0.3, m.original_edges));
    }
}

TEST_CASE("sweep output is deterministic and well formed") {
    const auto p = model(9);
    const auto mols = corpus(4, 8);
    SweepConfig c;
    c.budget_ratios = {0.5};
    c.rise.epochs = 15;
    c.baseline.epochs = 5;
    c.baseline.scorer_hidden = 8;
    const auto a = fidelity_sweep(p, mols, c);
    const auto b = fidelity_sweep(p, mols, c);
    CHECK(records_csv(a.records) == records_csv(b.records));
    CHECK(molecules_csv(a.molecules) == molecules_csv(b.molecules));
    CHECK(records_json(a.records) == records_json(b.records));
    const auto j = nlohmann::json::parse(records_json(a.records));
    CHECK(j.is_object());

    std::istringstream csv(records_csv(a.records));
    std::string line;
    std::size_t data = 0, columns = 0;
    while (std::getline(csv, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto commas = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
        if (columns == 0) columns = commas;
        CHECK(commas == columns);
        ++data;
    }
    CHECK(data == a.records.size() + 1);
}

TEST_CASE("number formatting round-trips") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-2.5) == "-2.5");
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1e3);
    for (int i = 0; i < 200; ++i) {
        const double v = g(rng);
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("explainer names") {
    for (auto k : all_explainers()) CHECK(parse_explainer(explainer_name(k)) == k);
    CHECK_FALSE(parse_explainer("saliency").has_value());
    CHECK(all_explainers().size() == 4);
}
