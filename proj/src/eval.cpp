#include "rise/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "rise/errors.hpp"
#include "rise/parallel.hpp"
#include "rise/rng.hpp"

namespace rise {

DirectedEdgeSet original_edges(const MolecularGraph& graph) {
    return build_dpg(graph, std::span<const double>(graph.construction_radii.data(),
                                                    static_cast<std::size_t>(graph.construction_radii.size())));
}

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Annulus study

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

AnnulusStudyTable annulus_study(const BackboneParams& params, std::span<const LabeledMolecule> corpus,
                                const AnnulusBinning& binning, std::uint64_t seed, int trials, double fraction) {
    if (corpus.empty()) throw ContractError("annulus study needs a nonempty corpus");
    if (trials < 1) throw ContractError("annulus study needs at least one trial");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("removal fraction must lie in (0, 1]");
    const int bins = binning.bin_count();
    if (bins < 1) throw ContractError("binning has no bands");

    const std::size_t n = corpus.size();
    const auto bin_slots = static_cast<std::size_t>(bins);
    const auto trial_slots = static_cast<std::size_t>(trials);
    std::vector<double> original(n);
    std::vector<std::vector<double>> full(n, std::vector<double>(bin_slots));
    std::vector<std::vector<double>> random(n, std::vector<double>(bin_slots * trial_slots));
    std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(bin_slots, 0));

    parallel_for(n, [&](std::size_t i) {
        const auto& mol = corpus[i];
        const DirectedEdgeSet edges = original_edges(mol.graph);
        const MaskedForward model(params, mol.graph, edges);
        original[i] = std::abs(model.predict_full() - mol.target);
        for (int b : binning.bins_of(edges)) ++counts[i][static_cast<std::size_t>(b - 1)];
        for (int b = 1; b <= bins; ++b) {
            const auto slot = static_cast<std::size_t>(b - 1);
            const AnnulusMask all = mask_annulus(edges, binning, b, 1.0, seed);
            full[i][slot] = std::abs(model.predict(all.mask.values) - mol.target);
            for (int t = 0; t < trials; ++t) {
                const std::uint64_t s = derive_seed(derive_seed(derive_seed(seed, slot), static_cast<std::uint64_t>(t)), i);
                const AnnulusMask part = mask_annulus(edges, binning, b, fraction, s);
                random[i][slot * trial_slots + static_cast<std::size_t>(t)] =
                    std::abs(model.predict(part.mask.values) - mol.target);
            }
        }
    });

    AnnulusStudyTable table;
    table.binning = binning;
    table.trials = trials;
    table.fraction = fraction;
    table.original_mae = mean_of(original);
    for (std::size_t b = 0; b < bin_slots; ++b) {
        std::size_t pooled = 0;
        double full_sum = 0.0;
        std::vector<double> trial_mae(trial_slots, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            pooled += counts[i][b];
            full_sum += full[i][b];
            for (std::size_t t = 0; t < trial_slots; ++t) trial_mae[t] += random[i][b * trial_slots + t];
        }
        for (double& t : trial_mae) t /= static_cast<double>(n);
        table.bin_edge_counts.push_back(pooled);
        table.empty_bin.push_back(pooled == 0);
        if (pooled == 0) {
            table.full_removal_mae.push_back(table.original_mae);
            table.random_mean_mae.push_back(table.original_mae);
            table.random_std_mae.push_back(0.0);
        } else {
            table.full_removal_mae.push_back(full_sum / static_cast<double>(n));
            table.random_mean_mae.push_back(mean_of(trial_mae));
            table.random_std_mae.push_back(sample_std(trial_mae));
        }
    }
    return table;
}

std::string annulus_csv(const AnnulusStudyTable& t) {
    std::ostringstream out;
    out << "# annulus study: trials=" << t.trials << " fraction=" << format_double(t.fraction) << "\n";
    out << "# columns: bin (0 = no removal), lower_angstrom, upper_angstrom, edge_count, full_removal_mae, "
           "random_mean_mae, random_std_mae, empty_bin\n";
    out << "bin,lower_angstrom,upper_angstrom,edge_count,full_removal_mae,random_mean_mae,random_std_mae,empty_bin\n";
    std::size_t total = 0;
    for (auto c : t.bin_edge_counts) total += c;
    const double lo = t.binning.cutoffs.front();
    const double hi = t.binning.cutoffs.back();
    out << "0," << format_double(lo) << ',' << format_double(hi) << ',' << total << ','
        << format_double(t.original_mae) << ',' << format_double(t.original_mae) << ",0,0\n";
    for (std::size_t b = 0; b < t.full_removal_mae.size(); ++b) {
        out << b + 1 << ',' << format_double(t.binning.cutoffs[b]) << ',' << format_double(t.binning.cutoffs[b + 1])
            << ',' << t.bin_edge_counts[b] << ',' << format_double(t.full_removal_mae[b]) << ','
            << format_double(t.random_mean_mae[b]) << ',' << format_double(t.random_std_mae[b]) << ','
            << (t.empty_bin[b] ? 1 : 0) << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Bond recovery

BondScore bond_recovery(const ExplanationResult& result, const std::vector<BondPair>& truth) {
    std::set<BondPair> kept;
    for (const auto& e : result.kept.edges) kept.insert(BondPair::make(e.source, e.target));
    const std::set<BondPair> expected(truth.begin(), truth.end());
    std::size_t hits = 0;
    for (const auto& p : kept) hits += expected.count(p);
    BondScore s;
    s.precision = kept.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(kept.size());
    s.recall = expected.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(expected.size());
    return s;
}

BondScore bond_recovery(const ExplanationResult& result, const MolecularGraph& graph) {
    if (!graph.bond_truth) throw ContractError("graph carries no bond ground truth");
    return bond_recovery(result, *graph.bond_truth);
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

double grid_value(double radius, int grid_levels, int level) {
    if (grid_levels == 1) return level == 0 ? 0.0 : radius;
    return radius * static_cast<double>(level) / static_cast<double>(grid_levels - 1);
}

}  // namespace

Eigen::VectorXd floor_to_grid(const Eigen::VectorXd& radii, const Eigen::VectorXd& construction, int grid_levels) {
    if (radii.size() != construction.size()) throw ContractError("radius vectors differ in length");
    if (grid_levels < 1) throw ContractError("grid needs at least one level");
    Eigen::VectorXd out(radii.size());
    const int top = grid_levels == 1 ? 1 : grid_levels - 1;
    for (Eigen::Index i = 0; i < radii.size(); ++i) {
        int level = 0;
        for (int l = top; l >= 0; --l) {
            if (grid_value(construction(i), grid_levels, l) <= radii(i)) {
                level = l;
                break;
            }
        }
        out(i) = grid_value(construction(i), grid_levels, level);
    }
    return out;
}

OracleResult brute_force_oracle(const BackboneParams& params, const MolecularGraph& graph,
                                const DirectedEdgeSet& edges, double target, double budget, int grid_levels) {
    const auto n = static_cast<int>(graph.node_count());
    if (n > 6) throw ContractError("oracle supports at most 6 nodes");
    if (grid_levels < 1 || grid_levels > 8) throw ContractError("oracle grid must have 1 to 8 levels");
    if (!(budget >= 0.0)) throw ContractError("budget must be nonnegative");
    if (edges.node_count != n) throw ContractError("edge set and graph disagree on node count");

    const int levels = grid_levels == 1 ? 2 : grid_levels;
    const MaskedForward model(params, graph, edges);
    // Bits of edges kept by node i at level l.
    std::vector<std::vector<std::uint64_t>> bits(static_cast<std::size_t>(n),
                                                 std::vector<std::uint64_t>(static_cast<std::size_t>(levels), 0));
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < levels; ++l) {
            const double r = grid_value(graph.construction_radii(i), grid_levels, l);
            for (std::size_t e = 0; e < edges.size(); ++e)
                if (edges.edges[e].source == i && edges.edges[e].distance < r) bits[i][l] |= std::uint64_t{1} << e;
        }

    std::unordered_map<std::uint64_t, double> memo;
    auto loss_of = [&](std::uint64_t mask) {
        if (auto it = memo.find(mask); it != memo.end()) return it->second;
        std::vector<double> values(edges.size());
        for (std::size_t e = 0; e < edges.size(); ++e) values[e] = (mask >> e) & 1 ? 1.0 : 0.0;
        const double loss = prediction_loss(model.predict(values), target, params);
        memo.emplace(mask, loss);
        return loss;
    };

    const double limit = budget * (1.0 + 1e-12) + 1e-12;
    OracleResult best;
    best.loss = std::numeric_limits<double>::infinity();
    std::vector<int> digit(static_cast<std::size_t>(n), 0);
    while (true) {
        double total = 0.0;
        std::uint64_t mask = 0;
        for (int i = 0; i < n; ++i) {
            total += grid_value(graph.construction_radii(i), grid_levels, digit[i]);
            mask |= bits[i][digit[i]];
        }
        if (total <= limit) {
            ++best.assignments;
            const double loss = loss_of(mask);
            if (loss < best.loss) {
                best.loss = loss;
                best.radii.resize(n);
                for (int i = 0; i < n; ++i) best.radii(i) = grid_value(graph.construction_radii(i), grid_levels, digit[i]);
            }
        }
        int pos = 0;
        while (pos < n && ++digit[pos] == levels) digit[pos++] = 0;
        if (pos == n) break;
    }
    best.distinct_subgraphs = memo.size();
    return best;
}

void OracleCheckConfig::validate() const {
    if (instances == 0) throw ContractError("oracle check needs at least one instance");
    if (corpus.max_atoms > 6) throw ContractError("oracle check supports molecules of at most 6 atoms");
    if (grid_levels < 1 || grid_levels > 8) throw ContractError("oracle grid must have 1 to 8 levels");
    if (!(tolerance >= 1.0)) throw ContractError("oracle tolerance must be at least 1");
    if (!(required_fraction >= 0.0 && required_fraction <= 1.0)) throw ContractError("required fraction must lie in [0, 1]");
    if (!(min_ratio >= 0.0 && min_ratio <= max_ratio && max_ratio <= 1.0))
        throw ContractError("oracle budget ratios must satisfy 0 <= min <= max <= 1");
    corpus.validate();
    rise.validate();
}

OracleCheckReport oracle_check(const BackboneParams& params, const OracleCheckConfig& config) {
    config.validate();
    OracleCheckReport report;
    report.rows.resize(config.instances);
    parallel_for(config.instances, [&](std::size_t i) {
        char id[32];
        std::snprintf(id, sizeof(id), "oracle_%03zu", i);
        const LabeledMolecule mol = generate_molecule(config.corpus, derive_seed(config.seed, 2 * i), id);
        Rng rng(derive_seed(config.seed, 2 * i + 1));
        const double ratio = std::uniform_real_distribution<double>(config.min_ratio, config.max_ratio)(rng);
        const DirectedEdgeSet edges = original_edges(mol.graph);
        RiseConfig rc = config.rise;
        rc.seed = derive_seed(config.rise.seed, i);
        const RiseOutcome o = rise_optimize(params, mol.graph, edges, mol.target, ratio, rc);
        const double budget = rise_budget(mol.graph, ratio, BudgetUnits::angstrom);
        const OracleResult best = brute_force_oracle(params, mol.graph, edges, mol.target, budget, config.grid_levels);

        OracleCheckRow& row = report.rows[i];
        row.molecule = mol.id;
        row.atoms = mol.graph.node_count();
        row.edges = edges.size();
        row.budget_ratio = ratio;
        row.rise_continuous_loss = prediction_loss(o.result.hard_prediction, mol.target, params);
        row.rise_loss = row.rise_continuous_loss;
        if (config.discretize) {
            const Eigen::VectorXd grid = floor_to_grid(*o.result.radii, mol.graph.construction_radii, config.grid_levels);
            const ExplanationResult snapped = rise_extract(mol.graph, edges, grid, BudgetUnits::angstrom);
            const MaskedForward model(params, mol.graph, edges);
            row.rise_loss = prediction_loss(model.predict(snapped.hard.values), mol.target, params);
        }
        row.oracle_loss = best.loss;
        row.distinct_subgraphs = best.distinct_subgraphs;
        row.within = row.rise_loss <= config.tolerance * row.oracle_loss;
    });
    const auto hits = std::count_if(report.rows.begin(), report.rows.end(), [](const auto& r) { return r.within; });
    report.fraction_within = static_cast<double>(hits) / static_cast<double>(report.rows.size());
    report.passed = report.fraction_within >= config.required_fraction;
    return report;
}

// ---------------------------------------------------------------------------
// Fidelity sweep

std::string explainer_name(ExplainerKind kind) {
    switch (kind) {
        case ExplainerKind::rise: return "rise";
        case ExplainerKind::gnnexplainer: return "gnnexplainer";
        case ExplainerKind::pgexplainer: return "pgexplainer";
        case ExplainerKind::lri_bernoulli: return "lri_bernoulli";
    }
    return "unknown";
}

std::optional<ExplainerKind> parse_explainer(const std::string& name) {
    for (auto k : all_explainers())
        if (explainer_name(k) == name) return k;
    return std::nullopt;
}

std::vector<ExplainerKind> all_explainers() {
    return {ExplainerKind::rise, ExplainerKind::gnnexplainer, ExplainerKind::pgexplainer, ExplainerKind::lri_bernoulli};
}

namespace {

MoleculeEval summarize(const LabeledMolecule& mol, const ExplanationResult& r, double ratio) {
    MoleculeEval m;
    m.molecule = mol.id;
    m.explainer = r.explainer;
    m.budget_ratio = ratio;
    m.target = mol.target;
    m.hard_prediction = r.hard_prediction;
    m.soft_prediction = r.soft_prediction;
    m.kept_edges = r.kept.size();
    m.original_edges = r.original_edge_count;
    m.relative_gap = std::abs(r.soft_prediction - r.hard_prediction) / std::max(std::abs(r.hard_prediction), 1e-12);
    if (mol.graph.bond_truth) m.bonds = bond_recovery(r, *mol.graph.bond_truth);
    return m;
}

MoleculeEval failed(const LabeledMolecule& mol, ExplainerKind kind, double ratio, const std::exception& e) {
    MoleculeEval m;
    m.molecule = mol.id;
    m.explainer = explainer_name(kind);
    m.budget_ratio = ratio;
    m.target = mol.target;
    m.failure = e.what();
    return m;
}

EvalRecord aggregate(std::vector<MoleculeEval> rows, ExplainerKind kind, double ratio, double max_failures) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.molecule < b.molecule; });
    EvalRecord rec;
    rec.explainer = explainer_name(kind);
    rec.budget_ratio = ratio;
    double mae = 0.0, frac = 0.0, kept = 0.0, orig = 0.0, gap = 0.0, prec = 0.0, rec_sum = 0.0;
    std::size_t ok = 0, scored = 0;
    for (const auto& m : rows) {
        if (m.failure) {
            ++rec.skipped;
            continue;
        }
        ++ok;
        mae += std::abs(m.hard_prediction - m.target);
        frac += m.original_edges == 0 ? 1.0 : static_cast<double>(m.kept_edges) / static_cast<double>(m.original_edges);
        kept += static_cast<double>(m.kept_edges);
        orig += static_cast<double>(m.original_edges);
        gap += m.relative_gap;
        if (m.bonds) {
            ++scored;
            prec += m.bonds->precision;
            rec_sum += m.bonds->recall;
        }
    }
    rec.molecules = ok;
    if (ok > 0) {
        const double d = static_cast<double>(ok);
        rec.mae = mae / d;
        rec.edges_preserved_fraction = frac / d;
        rec.mean_kept_edges = kept / d;
        rec.mean_original_edges = orig / d;
        rec.consistency_gap = gap / d;
    }
    if (scored > 0) {
        rec.bond_precision = prec / static_cast<double>(scored);
        rec.bond_recall = rec_sum / static_cast<double>(scored);
    }
    rec.valid = ok > 0 && static_cast<double>(rec.skipped) <= max_failures * static_cast<double>(rows.size());
    return rec;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

SweepResult fidelity_sweep(const BackboneParams& params, std::span<const LabeledMolecule> corpus,
                           const SweepConfig& config) {
    if (corpus.empty()) throw ContractError("fidelity sweep needs a nonempty corpus");
    if (config.explainers.empty()) throw ContractError("fidelity sweep needs at least one explainer");
    for (double r : config.budget_ratios)
        if (!(r >= 0.0 && r <= 1.0)) throw ContractError("budget ratios must lie in [0, 1]");
    config.rise.validate();
    config.baseline.validate();

    const std::size_t n = corpus.size();
    std::vector<DirectedEdgeSet> edges(n);
    parallel_for(n, [&](std::size_t i) { edges[i] = original_edges(corpus[i].graph); });

    const bool want_rise = std::find(config.explainers.begin(), config.explainers.end(), ExplainerKind::rise) !=
                           config.explainers.end();
    std::map<std::pair<ExplainerKind, std::size_t>, EvalRecord> records;
    SweepResult out;

    for (std::size_t ri = 0; ri < config.budget_ratios.size(); ++ri) {
        const double ratio = config.budget_ratios[ri];
        const std::uint64_t ratio_seed = derive_seed(config.seed, ri);
        std::vector<std::optional<std::size_t>> rise_kept(n);

        std::map<ExplainerKind, std::vector<MoleculeEval>> rows;
        std::map<ExplainerKind, double> runtime;
        if (want_rise || config.align_to_rise) {
            const auto start = std::chrono::steady_clock::now();
            std::vector<MoleculeEval> rise_rows(n);
            parallel_for(n, [&](std::size_t i) {
                RiseConfig rc = config.rise;
                rc.seed = derive_seed(ratio_seed, i);
                try {
                    const RiseOutcome o = rise_optimize(params, corpus[i].graph, edges[i], corpus[i].target, ratio, rc);
                    rise_kept[i] = o.result.kept.size();
                    rise_rows[i] = summarize(corpus[i], o.result, ratio);
                } catch (const NumericError& e) {
                    rise_rows[i] = failed(corpus[i], ExplainerKind::rise, ratio, e);
                }
            });
            rows[ExplainerKind::rise] = std::move(rise_rows);
            runtime[ExplainerKind::rise] = seconds_since(start);
        }

        auto keep_for = [&](std::size_t i) -> std::optional<std::size_t> {
            if (!config.align_to_rise || !rise_kept[i]) return std::nullopt;
            return std::max(*rise_kept[i], budget_edge_count(ratio, edges[i].size()));
        };

        for (ExplainerKind kind : config.explainers) {
            if (kind == ExplainerKind::rise) continue;
            const auto start = std::chrono::steady_clock::now();
            std::vector<MoleculeEval> kind_rows(n);
            if (kind == ExplainerKind::pgexplainer) {
                std::vector<ExplainTask> tasks(n);
                for (std::size_t i = 0; i < n; ++i)
                    tasks[i] = {&corpus[i].graph, &edges[i], corpus[i].target, keep_for(i)};
                BaselineConfig bc = config.baseline;
                bc.seed = derive_seed(ratio_seed, n + 1);
                try {
                    const PgExplainerOutcome o = pgexplainer_optimize(params, tasks, ratio, bc);
                    for (std::size_t i = 0; i < n; ++i) kind_rows[i] = summarize(corpus[i], o.results[i], ratio);
                } catch (const NumericError& e) {
                    for (std::size_t i = 0; i < n; ++i) kind_rows[i] = failed(corpus[i], kind, ratio, e);
                }
            } else {
                parallel_for(n, [&](std::size_t i) {
                    BaselineConfig bc = config.baseline;
                    bc.seed = derive_seed(ratio_seed, i);
                    try {
                        const ExplanationResult r =
                            kind == ExplainerKind::gnnexplainer
                                ? gnnexplainer_optimize(params, corpus[i].graph, edges[i], corpus[i].target, ratio, bc,
                                                        keep_for(i))
                                : lri_bernoulli_optimize(params, corpus[i].graph, edges[i], corpus[i].target, ratio, bc,
                                                         keep_for(i));
                        kind_rows[i] = summarize(corpus[i], r, ratio);
                    } catch (const NumericError& e) {
                        kind_rows[i] = failed(corpus[i], kind, ratio, e);
                    }
                });
            }
            rows[kind] = std::move(kind_rows);
            runtime[kind] = seconds_since(start);
        }

        for (ExplainerKind kind : config.explainers) {
            EvalRecord rec = aggregate(rows[kind], kind, ratio, config.max_failure_fraction);
            rec.runtime_seconds = runtime[kind];
            records[{kind, ri}] = rec;
            for (auto& m : rows[kind]) out.molecules.push_back(std::move(m));
        }
    }
    for (ExplainerKind kind : config.explainers)
        for (std::size_t ri = 0; ri < config.budget_ratios.size(); ++ri) out.records.push_back(records[{kind, ri}]);
    return out;
}

// ---------------------------------------------------------------------------
// Bond study

double bond_scale_budget(const MolecularGraph& graph, double slack) {
    if (!graph.bond_truth) throw ContractError("graph carries no bond ground truth");
    if (!(slack > 0.0)) throw ContractError("slack must be positive");
    const DistanceMatrix d = pairwise_distances(graph);
    std::vector<double> longest(graph.node_count(), 0.0);
    for (const auto& b : *graph.bond_truth) {
        const double len = d.values(b.first, b.second);
        longest[b.first] = std::max(longest[b.first], len);
        longest[b.second] = std::max(longest[b.second], len);
    }
    return slack * std::accumulate(longest.begin(), longest.end(), 0.0);
}

BondStudyResult bond_study(const BackboneParams& params, const BondStudyConfig& config) {
    if (config.instances == 0) throw ContractError("bond study needs at least one instance");
    if (config.explainers.empty()) throw ContractError("bond study needs at least one explainer");
    config.rise.validate();
    config.baseline.validate();

    const std::size_t n = config.instances;
    std::vector<LabeledMolecule> mols(n);
    std::vector<DirectedEdgeSet> edges(n);
    std::vector<double> budgets(n), ratios(n);
    for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "ethane_%03zu", i);
        mols[i] = generate_ethane(config.corpus, derive_seed(config.seed, i), id);
        edges[i] = original_edges(mols[i].graph);
        budgets[i] = bond_scale_budget(mols[i].graph, config.slack);
        ratios[i] = std::min(1.0, budgets[i] / mols[i].graph.construction_radii.sum());
    }

    std::vector<ExplanationResult> rise_results(n);
    parallel_for(n, [&](std::size_t i) {
        RiseConfig rc = config.rise;
        rc.budget = budgets[i];
        rc.seed = derive_seed(config.rise.seed, i);
        rise_results[i] = rise_optimize(params, mols[i].graph, edges[i], mols[i].target, ratios[i], rc).result;
    });

    BondStudyResult out;
    for (ExplainerKind kind : config.explainers) {
        std::vector<ExplanationResult> results(n);
        if (kind == ExplainerKind::rise) {
            results = rise_results;
        } else if (kind == ExplainerKind::pgexplainer) {
            std::vector<ExplainTask> tasks(n);
            for (std::size_t i = 0; i < n; ++i)
                tasks[i] = {&mols[i].graph, &edges[i], mols[i].target, rise_results[i].kept.size()};
            BaselineConfig bc = config.baseline;
            bc.seed = derive_seed(config.baseline.seed, n + 1);
            results = pgexplainer_optimize(params, tasks, 0.0, bc).results;
        } else {
            parallel_for(n, [&](std::size_t i) {
                BaselineConfig bc = config.baseline;
                bc.seed = derive_seed(config.baseline.seed, i);
                const std::size_t keep = rise_results[i].kept.size();
                results[i] = kind == ExplainerKind::gnnexplainer
                                 ? gnnexplainer_optimize(params, mols[i].graph, edges[i], mols[i].target, ratios[i],
                                                         bc, keep)
                                 : lri_bernoulli_optimize(params, mols[i].graph, edges[i], mols[i].target, ratios[i],
                                                          bc, keep);
            });
        }
        BondStudySummary sum;
        sum.explainer = explainer_name(kind);
        for (std::size_t i = 0; i < n; ++i) {
            BondStudyRow row;
            row.molecule = mols[i].id;
            row.explainer = sum.explainer;
            row.kept_edges = results[i].kept.size();
            row.bond_edges = 2 * mols[i].graph.bond_truth->size();
            row.score = bond_recovery(results[i], mols[i].graph);
            row.exact = row.score.precision == 1.0 && row.score.recall == 1.0;
            sum.exact_fraction += row.exact ? 1.0 : 0.0;
            sum.mean_precision += row.score.precision;
            sum.mean_recall += row.score.recall;
            out.rows.push_back(std::move(row));
        }
        const double count = static_cast<double>(n);
        sum.exact_fraction /= count;
        sum.mean_precision /= count;
        sum.mean_recall /= count;
        out.summary.push_back(sum);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export

namespace {

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::string records_csv(std::span<const EvalRecord> records) {
    std::ostringstream out;
    out << "# one row per (explainer, budget_ratio); mae is the mean |prediction on the hard subgraph - target|;\n"
           "# consistency_gap is the mean relative |soft - hard| prediction gap; bond columns are empty without "
           "ground truth\n";
    out << "explainer,budget_ratio,mae,edges_preserved_fraction,mean_kept_edges,mean_original_edges,"
           "consistency_gap,bond_precision,bond_recall,molecules,skipped,valid\n";
    for (const auto& r : records) {
        out << r.explainer << ',' << format_double(r.budget_ratio) << ',' << format_double(r.mae) << ','
            << format_double(r.edges_preserved_fraction) << ',' << format_double(r.mean_kept_edges) << ','
            << format_double(r.mean_original_edges) << ',' << format_double(r.consistency_gap) << ','
            << optional_cell(r.bond_precision) << ',' << optional_cell(r.bond_recall) << ',' << r.molecules << ','
            << r.skipped << ',' << (r.valid ? 1 : 0) << "\n";
    }
    return out.str();
}

std::string molecules_csv(std::span<const MoleculeEval> rows) {
    std::ostringstream out;
    out << "# one row per (budget_ratio, explainer, molecule); failure is empty on success\n";
    out << "molecule,explainer,budget_ratio,target,hard_prediction,soft_prediction,kept_edges,original_edges,"
           "relative_gap,bond_precision,bond_recall,failure\n";
    for (const auto& m : rows) {
        std::string failure = m.failure.value_or("");
        std::replace(failure.begin(), failure.end(), ',', ';');
        std::replace(failure.begin(), failure.end(), '\n', ' ');
        out << m.molecule << ',' << m.explainer << ',' << format_double(m.budget_ratio) << ','
            << format_double(m.target) << ',' << format_double(m.hard_prediction) << ','
            << format_double(m.soft_prediction) << ',' << m.kept_edges << ',' << m.original_edges << ','
            << format_double(m.relative_gap) << ','
            << optional_cell(m.bonds ? std::optional<double>(m.bonds->precision) : std::nullopt) << ','
            << optional_cell(m.bonds ? std::optional<double>(m.bonds->recall) : std::nullopt) << ',' << failure
            << "\n";
    }
    return out.str();
}

std::string oracle_csv(const OracleCheckReport& report) {
    std::ostringstream out;
    out << "# one row per instance; losses are ((prediction - target)/target_scale)^2 on the hard subgraph;\n"
           "# rise_loss uses the radii floored onto the oracle grid when discretizing\n"
           "# within is 1 when rise_loss <= tolerance * oracle_loss\n";
    out << "molecule,atoms,edges,budget_ratio,rise_loss,rise_continuous_loss,oracle_loss,distinct_subgraphs,within\n";
    for (const auto& r : report.rows)
        out << r.molecule << ',' << r.atoms << ',' << r.edges << ',' << format_double(r.budget_ratio) << ','
            << format_double(r.rise_loss) << ',' << format_double(r.rise_continuous_loss) << ','
            << format_double(r.oracle_loss) << ',' << r.distinct_subgraphs
            << ',' << (r.within ? 1 : 0) << "\n";
    return out.str();
}

std::string bond_rows_csv(std::span<const BondStudyRow> rows) {
    std::ostringstream out;
    out << "# one row per (explainer, molecule); bonds are scored as unordered pairs\n";
    out << "molecule,explainer,kept_edges,bond_edges,precision,recall,exact\n";
    for (const auto& r : rows)
        out << r.molecule << ',' << r.explainer << ',' << r.kept_edges << ',' << r.bond_edges << ','
            << format_double(r.score.precision) << ',' << format_double(r.score.recall) << ','
            << (r.exact ? 1 : 0) << "\n";
    return out.str();
}

std::string records_json(std::span<const EvalRecord> records) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : records) {
        nlohmann::ordered_json o;
        o["explainer"] = r.explainer;
        o["budget_ratio"] = r.budget_ratio;
        o["mae"] = r.mae;
        o["edges_preserved_fraction"] = r.edges_preserved_fraction;
        o["mean_kept_edges"] = r.mean_kept_edges;
        o["mean_original_edges"] = r.mean_original_edges;
        o["consistency_gap"] = r.consistency_gap;
        o["bond_precision"] = r.bond_precision ? nlohmann::ordered_json(*r.bond_precision) : nlohmann::ordered_json();
        o["bond_recall"] = r.bond_recall ? nlohmann::ordered_json(*r.bond_recall) : nlohmann::ordered_json();
        o["molecules"] = r.molecules;
        o["skipped"] = r.skipped;
        o["valid"] = r.valid;
        arr.push_back(o);
    }
    j["records"] = arr;
    return j.dump(2);
}

}  // namespace rise
