#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rise/errors.hpp"
#include "rise/geometry.hpp"
#include "rise/molecule_io.hpp"

using namespace rise;

namespace {

MolecularGraph cloud(const std::vector<Eigen::Vector3d>& points, double radius = 5.0) {
    MolecularGraph g;
    const auto n = static_cast<Eigen::Index>(points.size());
    g.positions.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) g.positions.row(i) = points[static_cast<std::size_t>(i)].transpose();
    g.construction_radii = Eigen::VectorXd::Constant(n, radius);
    g.node_features = Eigen::MatrixXd::Ones(n, 1);
    g.atom_labels.assign(points.size(), "C");
    return g;
}

MolecularGraph random_cloud(std::mt19937_64& rng, int n, double box = 4.0) {
    std::uniform_real_distribution<double> u(0.0, box);
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    return cloud(pts);
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
    return q.normalized().toRotationMatrix();
}

}  // namespace

TEST_CASE("3-4-5 triangle distance") {
    const auto g = cloud({{0, 0, 0}, {3, 4, 0}});
    const DistanceMatrix d = pairwise_distances(g);
    CHECK(d(0, 1) == 5.0);
    CHECK(d(1, 0) == 5.0);
    CHECK(d(0, 0) == 0.0);
}

TEST_CASE("distances agree with a naive double loop") {
    std::mt19937_64 rng(17);
    const auto g = random_cloud(rng, 5);
    const DistanceMatrix d = pairwise_distances(g);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c) s += std::pow(g.positions(i, c) - g.positions(j, c), 2);
            CHECK(std::abs(d(i, j) - std::sqrt(s)) < 1e-12);
        }
}

TEST_CASE("distance matrix is a metric on sampled triples") {
    std::mt19937_64 rng(4);
    const auto g = random_cloud(rng, 9);
    const DistanceMatrix d = pairwise_distances(g);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
            CHECK(d(i, j) == d(j, i));
            for (int k = 0; k < 9; ++k) CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
        }
}

TEST_CASE("coincident points are degenerate") {
    const auto g = cloud({{1, 1, 1}, {1, 1, 1 + 1e-10}});
    CHECK_THROWS_AS(pairwise_distances(g), DegenerateGeometryError);
    CHECK_THROWS_AS(g.validate(), DegenerateGeometryError);
}

TEST_CASE("validate rejects bad radii and bond indices") {
    auto g = cloud({{0, 0, 0}, {1, 0, 0}});
    g.construction_radii(1) = 0.0;
    CHECK_THROWS_AS(g.validate(), ContractError);
    g.construction_radii(1) = 1.0;
    g.bond_truth = std::vector<BondPair>{{0, 2}};
    CHECK_THROWS_AS(g.validate(), ContractError);
}

TEST_CASE("DPG keeps i->j exactly when d_ij < r_i") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = random_cloud(rng, 7);
        std::vector<double> r(7);
        for (auto& x : r) x = u(rng);
        const DirectedEdgeSet e = build_dpg(g, r);
        const DistanceMatrix d = pairwise_distances(g);
        std::size_t expected = 0;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) {
                const bool want = i != j && d(i, j) < r[static_cast<std::size_t>(i)];
                expected += want;
                CHECK(e.contains(i, j) == want);
            }
        CHECK(e.size() == expected);
        for (const auto& edge : e.edges) CHECK(std::abs(edge.distance - d(edge.source, edge.target)) <= 1e-12 * d(edge.source, edge.target));
    }
}

TEST_CASE("a distance equal to the radius is excluded") {
    const auto g = cloud({{0, 0, 0}, {2, 0, 0}});
    const std::vector<double> r{2.0, 2.0 + 1e-12};
    const auto e = build_dpg(g, r);
    CHECK_FALSE(e.contains(0, 1));
    CHECK(e.contains(1, 0));
}

TEST_CASE("DPG corner cases") {
    std::mt19937_64 rng(9);
    const auto g = random_cloud(rng, 6);
    CHECK(build_dpg(g, std::vector<double>(6, 0.0)).empty());
    CHECK_THROWS_AS(build_dpg(g, std::vector<double>(5, 1.0)), ContractError);
    CHECK_THROWS_AS(build_dpg(g, std::vector<double>{1, 1, 1, 1, 1, -1}), ContractError);
    const auto full = build_dpg(g, std::vector<double>(6, 100.0));
    CHECK(full.size() == 30);
    for (const auto& edge : full.edges) CHECK(edge.source != edge.target);
}

TEST_CASE("uniform radii give a symmetric relation") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        const auto g = random_cloud(rng, 8);
        const auto e = build_dpg(g, std::vector<double>(8, 2.5));
        CHECK(e.is_symmetric());
        const Eigen::MatrixXi a = e.adjacency();
        CHECK(a == a.transpose());
    }
}

TEST_CASE("enlarging a radius never removes an edge") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    for (int trial = 0; trial < 30; ++trial) {
        const auto g = random_cloud(rng, 6);
        std::vector<double> r(6), bigger(6);
        for (std::size_t i = 0; i < 6; ++i) {
            r[i] = u(rng);
            bigger[i] = r[i] + (trial % 2 == 0 ? u(rng) : 0.0);
        }
        bigger[static_cast<std::size_t>(trial % 6)] += 0.5;
        const auto small = build_dpg(g, r);
        const auto large = build_dpg(g, bigger);
        for (const auto& edge : small.edges) CHECK(large.contains(edge.source, edge.target));
    }
}

TEST_CASE("cut-off graph on three collinear points") {
    const auto g = cloud({{0, 0, 0}, {2, 0, 0}, {4, 0, 0}});
    const auto e = build_cutoff_graph(g, 3.0);
    CHECK(e.size() == 4);
    CHECK_FALSE(e.contains(0, 2));
    CHECK_THROWS_AS(build_cutoff_graph(g, 0.0), ContractError);
}

TEST_CASE("ethane at a 5 angstrom cut-off is complete") {
    SyntheticCorpusConfig c;
    const auto m = generate_ethane(c, 1, "ethane", false);
    const auto d = pairwise_distances(m.graph);
    CHECK(d.values.maxCoeff() < 5.0);
    CHECK(build_cutoff_graph(m.graph, 5.0).size() == 56);
}

TEST_CASE("ethane radii from the bond figure recover exactly the seven bonds") {
    SyntheticCorpusConfig c;
    const auto m = generate_ethane(c, 3, "ethane", false);
    std::vector<double> r;
    for (const auto& label : m.graph.atom_labels) r.push_back(label == "C" ? 1.532 : 1.171);
    const auto e = build_dpg(m.graph, r);
    CHECK(e.size() == 14);
    for (const auto& b : *m.graph.bond_truth) {
        CHECK(e.contains(b.first, b.second));
        CHECK(e.contains(b.second, b.first));
    }
}

TEST_CASE("rigid motions leave the edge set unchanged") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = random_cloud(rng, 7);
        const auto before = build_cutoff_graph(g, 2.7);
        const Eigen::Matrix3d rot = random_rotation(rng);
        const Eigen::RowVector3d shift(1.5, -3.0, 0.25);
        for (Eigen::Index i = 0; i < g.positions.rows(); ++i)
            g.positions.row(i) = (rot * g.positions.row(i).transpose()).transpose() + shift;
        const auto after = build_cutoff_graph(g, 2.7);
        REQUIRE(before.size() == after.size());
        for (std::size_t k = 0; k < before.size(); ++k) {
            CHECK(before.edges[k].source == after.edges[k].source);
            CHECK(before.edges[k].target == after.edges[k].target);
            CHECK(std::abs(before.edges[k].distance - after.edges[k].distance) < 1e-12);
        }
    }
}

TEST_CASE("select keeps the masked-in edges in order") {
    const auto g = cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    const auto e = build_cutoff_graph(g, 5.0);
    const std::vector<double> m{1, 0, 0, 1, 1, 0};
    const auto s = e.select(m);
    REQUIRE(s.size() == 3);
    CHECK(s.edges[0] == e.edges[0]);
    CHECK(s.edges[1] == e.edges[3]);
    CHECK(s.edges[2] == e.edges[4]);
    CHECK(e.index_of(2, 1) == std::optional<std::size_t>(5));
    CHECK_FALSE(e.index_of(1, 1).has_value());
}

TEST_CASE("uniform distances split into five bins of 20 plus or minus one") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> d(100);
    for (auto& x : d) x = u(rng);
    const AnnulusBinning b = quantile_annuli(d, 5.0);
    REQUIRE(b.bin_count() == 5);
    CHECK(b.cutoffs.front() == 0.0);
    CHECK(b.cutoffs.back() == 5.0);
    CHECK(std::is_sorted(b.cutoffs.begin(), b.cutoffs.end()));
    std::vector<int> counts(6, 0);
    for (double x : d) counts[static_cast<std::size_t>(b.bin_of(x))]++;
    // Sorted-array oracle: bin k holds ranks [20(k-1), 20k).
    std::vector<double> sorted = d;
    std::sort(sorted.begin(), sorted.end());
    for (int k = 1; k <= 5; ++k) {
        CHECK(std::abs(counts[static_cast<std::size_t>(k)] - 20) <= 1);
        CHECK(b.bin_of(sorted[static_cast<std::size_t>(20 * (k - 1))]) == k);
    }
}

TEST_CASE("corpus binning covers every edge with 15 to 25 percent per band") {
    SyntheticCorpusConfig c;
    c.molecule_count = 60;
    c.seed = 3;
    const auto corpus = generate_synthetic_corpus(c);
    std::vector<DirectedEdgeSet> sets;
    for (const auto& m : corpus) sets.push_back(build_cutoff_graph(m.graph, 5.0));
    const AnnulusBinning b = quantile_annuli(sets, 5.0);
    std::vector<double> counts(6, 0.0);
    double total = 0.0;
    for (const auto& s : sets)
        for (int bin : b.bins_of(s)) {
            counts[static_cast<std::size_t>(bin)] += 1.0;
            total += 1.0;
        }
    for (int k = 1; k <= 5; ++k) {
        CHECK(counts[static_cast<std::size_t>(k)] / total >= 0.15);
        CHECK(counts[static_cast<std::size_t>(k)] / total <= 0.25);
    }
    CHECK_THROWS_AS(quantile_annuli(std::vector<double>{}, 5.0), ContractError);
}

TEST_CASE("the outer band is closed at the cut-off") {
    AnnulusBinning b{{0.0, 1.0, 2.0, 3.0, 4.0, 5.0}};
    CHECK(b.bin_of(0.0) == 1);
    CHECK(b.bin_of(1.0) == 2);
    CHECK(b.bin_of(4.999) == 5);
    CHECK(b.bin_of(5.0) == 5);
}

TEST_CASE("full annulus removal masks exactly the band") {
    std::mt19937_64 rng(30);
    const auto g = random_cloud(rng, 10);
    const auto e = build_cutoff_graph(g, 5.0);
    AnnulusBinning b{{0.0, 1.5, 2.5, 3.0, 4.0, 5.0}};
    const AnnulusMask m = mask_annulus(e, b, 1, 1.0, 7);
    for (std::size_t k = 0; k < e.size(); ++k) CHECK((m.mask.values[k] == 0.0) == (e.edges[k].distance < 1.5));
}

TEST_CASE("ten percent of forty edges removes four") {
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 41; ++i) pts.emplace_back(0.0, 0.0, 0.1 * i);
    auto g = cloud(pts);
    // Star: node 0 is the only source, so every edge lies in the inner band.
    std::vector<double> r(41, 0.0);
    r[0] = 10.0;
    const auto e = build_dpg(g, r);
    REQUIRE(e.size() == 40);
    AnnulusBinning b{{0.0, 10.0, 11.0, 12.0, 13.0, 14.0}};
    const AnnulusMask m = mask_annulus(e, b, 1, 0.1, 99);
    CHECK(m.removed == 4);
    CHECK(std::count(m.mask.values.begin(), m.mask.values.end(), 0.0) == 4);
}

TEST_CASE("annulus sampling is seeded") {
    std::mt19937_64 rng(31);
    const auto g = random_cloud(rng, 12);
    const auto e = build_cutoff_graph(g, 5.0);
    std::vector<double> d;
    for (const auto& edge : e.edges) d.push_back(edge.distance);
    const auto b = quantile_annuli(d, 5.0);
    const auto first = mask_annulus(e, b, 2, 0.1, 5);
    CHECK(first.mask.values == mask_annulus(e, b, 2, 0.1, 5).mask.values);
    int differing = 0;
    for (std::uint64_t s = 100; s < 120; ++s) differing += mask_annulus(e, b, 2, 0.1, s).mask.values != first.mask.values;
    CHECK(differing >= 1);
}

TEST_CASE("an empty band returns the identity mask with a flag") {
    const auto g = cloud({{0, 0, 0}, {3, 0, 0}});
    const auto e = build_cutoff_graph(g, 5.0);
    AnnulusBinning b{{0.0, 1.0, 2.0, 2.5, 4.0, 5.0}};
    const auto m = mask_annulus(e, b, 1, 0.5, 1);
    CHECK(m.empty_bin);
    CHECK(m.removed == 0);
    CHECK(m.mask.values == std::vector<double>(e.size(), 1.0));
    CHECK_THROWS_AS(mask_annulus(e, b, 6, 0.5, 1), ContractError);
    CHECK_THROWS_AS(mask_annulus(e, b, 1, 0.0, 1), ContractError);
}

TEST_CASE("edge masks validate their kind") {
    EdgeMask hard{MaskKind::hard, {0.0, 1.0, 0.5}};
    CHECK_THROWS_AS(hard.validate(), ContractError);
    EdgeMask soft{MaskKind::soft, {0.0, 1.0, 0.5}};
    CHECK_NOTHROW(soft.validate());
    soft.values.push_back(1.5);
    CHECK_THROWS_AS(soft.validate(), ContractError);
}
