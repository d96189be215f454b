// rise_cli: corpus generation, backbone training, explanations and studies.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rise/backbone.hpp"
#include "rise/errors.hpp"
#include "rise/eval.hpp"
#include "rise/explainers.hpp"
#include "rise/molecule_io.hpp"
#include "rise/parallel.hpp"
#include "rise/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace rise;

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

enum ExitCode { kOk = 0, kUsage = 2, kInput = 3, kNumeric = 4 };

/// Missing or unreadable inputs.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Options of one subcommand, registered with CLI11 and echoed into the manifest.
class Options {
public:
    explicit Options(CLI::App* app) : app_(app) {}

    template <typename T>
    CLI::Option* add(const std::string& name, T& value, const std::string& help) {
        echo_.push_back([name, &value](json& j) { j[name] = value; });
        return app_->add_option("--" + name, value, help)->capture_default_str();
    }

    CLI::Option* flag(const std::string& name, bool& value, const std::string& help) {
        echo_.push_back([name, &value](json& j) { j[name] = value; });
        return app_->add_flag("--" + name, value, help);
    }

    json config() const {
        json j = json::object();
        for (const auto& f : echo_) f(j);
        return j;
    }

    CLI::App* app() const { return app_; }

private:
    CLI::App* app_;
    std::vector<std::function<void(json&)>> echo_;
};

/// Exclusive ownership of an output directory for the lifetime of a run.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".rise_cli.lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (!f) throw InputError("output directory is in use (lock file " + path_.string() + " exists)");
        std::fclose(f);
    }
    ~DirectoryLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("file not found: " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_manifest(const fs::path& dir, const std::string& subcommand, const json& config) {
    json m;
    m["tool"] = "rise_cli";
    m["artifact_version"] = kArtifactVersion;
    m["subcommand"] = subcommand;
    m["config"] = config;
    write_file(dir / "run_manifest.json", m.dump(2) + "\n");
}

StoredCorpus open_corpus(const fs::path& dir) {
    const json manifest = json::parse(read_file(dir / "manifest.json"));
    const double cutoff = manifest.contains("config") ? manifest["config"].value("cutoff", 5.0) : 5.0;
    return load_corpus(dir, cutoff);
}

BackboneParams open_checkpoint(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw InputError("checkpoint not found: " + path.string());
    return load_checkpoint(path);
}

std::vector<LabeledMolecule> select(const StoredCorpus& corpus, const std::string& split, std::size_t limit) {
    std::vector<LabeledMolecule> out;
    if (split == "all") {
        out = corpus.molecules;
    } else {
        const auto& idx = split == "train" ? corpus.split.train
                          : split == "validation" ? corpus.split.validation
                                                  : corpus.split.test;
        out = take(corpus.molecules, idx);
    }
    if (limit > 0 && out.size() > limit) out.resize(limit);
    if (out.empty()) throw ContractError("no molecules selected from split '" + split + "'");
    return out;
}

const std::vector<std::string> kSplits{"all", "train", "validation", "test"};

// ---------------------------------------------------------------------------
// Shared option groups

struct RiseOptions {
    RiseConfig config;
    std::string units = "angstrom";

    void add(Options& o) {
        o.add("k", config.k, "Sigmoid sharpness of the soft edge mask")->check(CLI::PositiveNumber);
        o.flag("k-ramp", config.k_ramp, "Ramp k linearly from --k-start to --k-end instead of a fixed k");
        o.add("k-start", config.k_start, "First k of the ramp")->check(CLI::PositiveNumber);
        o.add("k-end", config.k_end, "Last k of the ramp")->check(CLI::PositiveNumber);
        o.add("rise-epochs", config.epochs, "Adam steps of the radius optimization")->check(CLI::NonNegativeNumber);
        o.add("rise-lr", config.learning_rate, "Adam learning rate for theta and omega")->check(CLI::PositiveNumber);
        o.add("theta-init", config.theta_init, "Initial theta");
        o.add("omega-init", config.omega_init, "Initial omega");
        o.add("restarts", config.restarts, "Independent RISE starts; the lowest hard loss wins")
            ->check(CLI::PositiveNumber);
        o.add("restart-noise", config.restart_noise, "Gaussian jitter of restarted initial points");
        o.flag("keep-best-hard", config.keep_best_hard, "Return the best visited hard subgraph");
        o.add("units", units, "Radius units: angstrom (B = rho*sum R) or fractional (B = rho*n)")
            ->check(CLI::IsMember({"angstrom", "fractional"}));
    }

    RiseConfig resolved() const {
        RiseConfig c = config;
        c.units = units == "fractional" ? BudgetUnits::fractional : BudgetUnits::angstrom;
        return c;
    }
};

struct BaselineOptions {
    BaselineConfig config;

    void add(Options& o) {
        o.add("baseline-epochs", config.epochs, "Adam steps of the soft-mask baselines")->check(CLI::NonNegativeNumber);
        o.add("baseline-lr", config.learning_rate, "Baseline learning rate")->check(CLI::PositiveNumber);
        o.add("lambda-pred", config.weights.lambda_pred, "Weight of the prediction term");
        o.add("lambda-size", config.weights.lambda_size, "Weight of the mean mask size");
        o.add("lambda-ent", config.weights.lambda_ent, "Weight of the mean mask entropy");
        o.add("init-logit", config.init_logit, "Mean initial logit");
        o.add("init-noise", config.init_noise, "Std of the initial logit jitter");
        o.add("scorer-hidden", config.scorer_hidden, "PGExplainer hidden width")->check(CLI::PositiveNumber);
    }
};

std::vector<ExplainerKind> parse_explainers(const std::vector<std::string>& names) {
    std::vector<ExplainerKind> out;
    for (const auto& name : names) {
        if (name == "all") return all_explainers();
        const auto kind = parse_explainer(name);
        if (!kind) throw ContractError("unknown explainer '" + name + "'");
        if (std::find(out.begin(), out.end(), *kind) == out.end()) out.push_back(*kind);
    }
    if (out.empty()) throw ContractError("no explainer selected");
    return out;
}

const std::vector<std::string> kExplainerNames{"rise", "gnnexplainer", "pgexplainer", "lri_bernoulli", "all"};

// ---------------------------------------------------------------------------
// Subcommands

struct Command {
    std::string name;
    CLI::App* app = nullptr;
    std::unique_ptr<Options> options;
    std::string out;
    std::function<void(const fs::path&)> run;
};

void setup_generate(Command& c) {
    static SyntheticCorpusConfig cc;
    static std::vector<double> split{0.8, 0.1, 0.1};
    static std::uint64_t split_seed = 0;
    auto& o = *c.options;
    o.add("count", cc.molecule_count, "Number of molecules")->check(CLI::PositiveNumber);
    o.add("seed", cc.seed, "Generator seed");
    o.add("cutoff", cc.cutoff, "Construction radius in Å")->check(CLI::PositiveNumber);
    o.add("min-heavy-atoms", cc.min_heavy_atoms, "Fewest heavy atoms");
    o.add("max-heavy-atoms", cc.max_heavy_atoms, "Most heavy atoms");
    o.add("min-atoms", cc.min_atoms, "Fewest atoms including hydrogens");
    o.add("max-atoms", cc.max_atoms, "Most atoms including hydrogens");
    o.add("bond-jitter", cc.bond_jitter, "Relative bond-length jitter");
    o.add("angle-jitter", cc.angle_jitter_degrees, "Bond-angle jitter in degrees");
    o.add("min-nonbonded-distance", cc.min_nonbonded_distance, "Rejection distance for non-bonded pairs (Å)");
    o.add("bonded-weight", cc.bonded_weight, "Weight of the bonded term");
    o.add("bond-exponent", cc.bond_exponent, "Exponent q of the bonded term");
    o.add("nonbonded-weight", cc.nonbonded_weight, "Weight of the non-bonded decay term");
    o.add("decay-exponent", cc.decay_exponent, "Exponent p of the non-bonded term");
    o.add("split", split, "Train, validation and test fractions")->expected(3);
    o.add("split-seed", split_seed, "Split seed");
    c.run = [](const fs::path& out) {
        StoredCorpus corpus;
        corpus.molecules = generate_synthetic_corpus(cc);
        corpus.split = split_corpus(corpus.molecules.size(), {split[0], split[1], split[2]}, split_seed);
        corpus.config_json = config_to_json(cc);
        corpus.seed = cc.seed;
        save_corpus(corpus, out);
        std::cout << "wrote " << corpus.molecules.size() << " molecules (" << corpus.split.train.size() << " train, "
                  << corpus.split.validation.size() << " validation, " << corpus.split.test.size() << " test)\n";
    };
}

void setup_train(Command& c) {
    static std::string corpus_dir;
    static BackboneConfig bc;
    static TrainConfig tc;
    static bool no_offsets = false;
    auto& o = *c.options;
    o.add("corpus", corpus_dir, "Corpus directory written by generate")->required();
    o.add("hidden", bc.hidden, "Node state width")->check(CLI::PositiveNumber);
    o.add("layers", bc.layers, "Interaction layers")->check(CLI::PositiveNumber);
    o.add("num-rbf", bc.num_rbf, "Radial basis functions")->check(CLI::PositiveNumber);
    o.add("gamma", bc.gamma, "RBF width in Å^-2")->check(CLI::PositiveNumber);
    o.add("epochs", tc.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    o.add("batch-size", tc.batch_size, "Molecules per Adam step")->check(CLI::PositiveNumber);
    o.add("lr", tc.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    o.add("lr-decay", tc.lr_decay, "Per-epoch learning-rate factor")->check(CLI::PositiveNumber);
    o.add("patience", tc.patience, "Epochs without validation improvement before stopping");
    o.add("seed", tc.seed, "Weight initialization seed");
    o.add("shuffle-seed", tc.shuffle_seed, "Mini-batch order seed");
    o.flag("no-offsets", no_offsets, "Do not fit per-element offsets");
    c.run = [](const fs::path& out) {
        const StoredCorpus corpus = open_corpus(corpus_dir);
        BackboneConfig config = bc;
        config.elements = element_table();
        config.cutoff = corpus.molecules.front().graph.construction_radii.maxCoeff();
        TrainConfig t = tc;
        t.fit_offsets = !no_offsets;
        const auto train_set = take(corpus.molecules, corpus.split.train);
        const auto validation_set = take(corpus.molecules, corpus.split.validation);
        const TrainResult result = train(train_set, validation_set, config, t);
        save_checkpoint(result.params, out / "checkpoint.json");
        json report;
        report["train_mae"] = result.report.train_mae;
        report["validation_mae"] = result.report.validation_mae;
        report["test_mae"] = corpus.split.test.empty()
                                 ? json()
                                 : json(mean_absolute_error(result.params, take(corpus.molecules, corpus.split.test)));
        report["epochs_run"] = result.report.epochs_run;
        report["best_epoch"] = result.report.best_epoch;
        report["train_loss"] = result.report.train_loss;
        report["validation_mae_trace"] = result.report.validation_mae_trace;
        write_file(out / "train_report.json", report.dump(2) + "\n");
        std::cout << "validation MAE " << format_double(result.report.validation_mae) << " after "
                  << result.report.epochs_run << " epochs (best " << result.report.best_epoch << ")\n";
    };
}

void setup_explain(Command& c) {
    static std::string checkpoint, corpus_dir, xyz, split = "test";
    static std::vector<std::string> explainers{"rise"};
    static double rho = 0.3;
    static double target = std::numeric_limits<double>::quiet_NaN();
    static std::size_t limit = 0;
    static std::uint64_t seed = 0;
    static bool align = false;
    static RiseOptions rise_opts;
    static BaselineOptions base_opts;
    auto& o = *c.options;
    o.add("checkpoint", checkpoint, "Trained backbone checkpoint")->required();
    auto* corpus_opt = o.add("corpus", corpus_dir, "Corpus directory");
    auto* xyz_opt = o.add("xyz", xyz, "Single XYZ file to explain instead of a corpus");
    corpus_opt->excludes(xyz_opt);
    o.add("target", target, "Label of the --xyz molecule (default: the model's own prediction)");
    o.add("split", split, "Corpus split to explain")->check(CLI::IsMember(kSplits));
    o.add("limit", limit, "Explain at most this many molecules (0: all)");
    o.add("explainer", explainers, "Explainers to run")->check(CLI::IsMember(kExplainerNames));
    o.add("rho", rho, "Budget ratio")->check(CLI::Range(0.0, 1.0));
    o.add("seed", seed, "Explainer seed");
    o.flag("align-to-rise", align, "Baselines keep at least as many edges as RISE");
    rise_opts.add(o);
    base_opts.add(o);
    c.run = [](const fs::path& out) {
        const BackboneParams params = open_checkpoint(checkpoint);
        std::vector<LabeledMolecule> mols;
        if (!xyz.empty()) {
            LabeledMolecule m;
            m.id = fs::path(xyz).stem().string();
            m.graph = parse_xyz(read_file(xyz), params.config.cutoff);
            m.target = !std::isnan(target) ? target : forward(m.graph, original_edges(m.graph), params).value;
            mols.push_back(std::move(m));
        } else if (!corpus_dir.empty()) {
            mols = select(open_corpus(corpus_dir), split, limit);
        } else {
            throw ContractError("explain needs --corpus or --xyz");
        }
        const auto kinds = parse_explainers(explainers);
        const RiseConfig rc = rise_opts.resolved();
        const std::size_t n = mols.size();
        std::vector<DirectedEdgeSet> edges(n);
        for (std::size_t i = 0; i < n; ++i) edges[i] = original_edges(mols[i].graph);

        const bool want_rise = std::find(kinds.begin(), kinds.end(), ExplainerKind::rise) != kinds.end();
        std::vector<ExplanationResult> rise_results(n);
        if (want_rise || align) {
            parallel_for(n, [&](std::size_t i) {
                RiseConfig r = rc;
                r.seed = derive_seed(seed, i);
                rise_results[i] = rise_optimize(params, mols[i].graph, edges[i], mols[i].target, rho, r).result;
            });
        }
        auto keep_for = [&](std::size_t i) -> std::optional<std::size_t> {
            if (!align) return std::nullopt;
            return std::max(rise_results[i].kept.size(), budget_edge_count(rho, edges[i].size()));
        };
        fs::create_directories(out / "explanations");
        for (ExplainerKind kind : kinds) {
            std::vector<ExplanationResult> results(n);
            if (kind == ExplainerKind::rise) {
                results = rise_results;
            } else if (kind == ExplainerKind::pgexplainer) {
                std::vector<ExplainTask> tasks(n);
                for (std::size_t i = 0; i < n; ++i) tasks[i] = {&mols[i].graph, &edges[i], mols[i].target, keep_for(i)};
                BaselineConfig b = base_opts.config;
                b.seed = derive_seed(seed, n + 1);
                results = pgexplainer_optimize(params, tasks, rho, b).results;
            } else {
                parallel_for(n, [&](std::size_t i) {
                    BaselineConfig b = base_opts.config;
                    b.seed = derive_seed(seed, i);
                    results[i] = kind == ExplainerKind::gnnexplainer
                                     ? gnnexplainer_optimize(params, mols[i].graph, edges[i], mols[i].target, rho, b,
                                                             keep_for(i))
                                     : lri_bernoulli_optimize(params, mols[i].graph, edges[i], mols[i].target, rho,
                                                              b, keep_for(i));
                });
            }
            for (std::size_t i = 0; i < n; ++i)
                write_file(out / "explanations" / (mols[i].id + "." + explainer_name(kind) + ".json"),
                           explanation_json(results[i], mols[i].id) + "\n");
        }
        std::cout << "wrote " << n * kinds.size() << " explanations\n";
    };
}

void setup_annulus(Command& c) {
    static std::string checkpoint, corpus_dir, split = "all";
    static std::uint64_t seed = 0;
    static int trials = 20, bins = 5;
    static double fraction = 0.1;
    auto& o = *c.options;
    o.add("checkpoint", checkpoint, "Trained backbone checkpoint")->required();
    o.add("corpus", corpus_dir, "Corpus directory")->required();
    o.add("split", split, "Corpus split to evaluate")->check(CLI::IsMember(kSplits));
    o.add("seed", seed, "Seed of the random removals");
    o.add("trials", trials, "Random removal trials per band")->check(CLI::PositiveNumber);
    o.add("fraction", fraction, "Fraction of a band removed per trial")->check(CLI::Range(0.0, 1.0));
    o.add("bins", bins, "Number of distance bands")->check(CLI::PositiveNumber);
    c.run = [](const fs::path& out) {
        const BackboneParams params = open_checkpoint(checkpoint);
        const auto mols = select(open_corpus(corpus_dir), split, 0);
        std::vector<DirectedEdgeSet> edges;
        double cutoff = 0.0;
        for (const auto& m : mols) {
            edges.push_back(original_edges(m.graph));
            cutoff = std::max(cutoff, m.graph.construction_radii.maxCoeff());
        }
        const AnnulusBinning binning = quantile_annuli(edges, cutoff, bins);
        const AnnulusStudyTable table = annulus_study(params, mols, binning, seed, trials, fraction);
        write_file(out / "annulus.csv", annulus_csv(table));
        std::cout << annulus_csv(table);
    };
}

void setup_oracle(Command& c) {
    static std::string checkpoint;
    static OracleCheckConfig oc;
    static RiseOptions rise_opts;
    auto& o = *c.options;
    o.add("checkpoint", checkpoint, "Trained backbone checkpoint")->required();
    o.add("instances", oc.instances, "Random instances")->check(CLI::PositiveNumber);
    o.add("grid-levels", oc.grid_levels, "Radius levels per node (1 means {0, R})");
    o.add("tolerance", oc.tolerance, "Allowed ratio of RISE loss to oracle loss");
    o.add("required-fraction", oc.required_fraction, "Fraction of instances that must be within tolerance");
    o.add("min-ratio", oc.min_ratio, "Smallest budget ratio drawn");
    o.add("max-ratio", oc.max_ratio, "Largest budget ratio drawn");
    o.add("max-atoms", oc.corpus.max_atoms, "Largest molecule (at most 6)");
    static bool continuous = false;
    o.flag("continuous", continuous, "Score RISE's radii as optimized instead of floored onto the grid");
    o.add("seed", oc.seed, "Instance seed");
    o.add("rise-seed", rise_opts.config.seed, "RISE initialization seed");
    rise_opts.add(o);
    c.run = [](const fs::path& out) {
        OracleCheckConfig config = oc;
        config.corpus.min_atoms = std::min(config.corpus.min_atoms, config.corpus.max_atoms);
        config.rise = rise_opts.resolved();
        config.discretize = !continuous;
        config.validate();
        const BackboneParams params = open_checkpoint(checkpoint);
        const OracleCheckReport report = oracle_check(params, config);
        write_file(out / "oracle.csv", oracle_csv(report));
        json summary;
        summary["instances"] = report.rows.size();
        summary["fraction_within"] = report.fraction_within;
        summary["required_fraction"] = config.required_fraction;
        summary["passed"] = report.passed;
        write_file(out / "oracle.json", summary.dump(2) + "\n");
        std::cout << "oracle check: " << format_double(report.fraction_within) << " of " << report.rows.size()
                  << " instances within " << format_double(config.tolerance) << "x of the optimum: "
                  << (report.passed ? "PASS" : "FAIL") << "\n";
    };
}

void setup_sweep(Command& c) {
    static std::string checkpoint, corpus_dir, split = "test";
    static std::vector<std::string> explainers{"all"};
    static std::size_t limit = 0;
    static bool no_align = false;
    static SweepConfig sc;
    static RiseOptions rise_opts;
    static BaselineOptions base_opts;
    auto& o = *c.options;
    o.add("checkpoint", checkpoint, "Trained backbone checkpoint")->required();
    o.add("corpus", corpus_dir, "Corpus directory")->required();
    o.add("split", split, "Corpus split to evaluate")->check(CLI::IsMember(kSplits));
    o.add("limit", limit, "Evaluate at most this many molecules (0: all)");
    o.add("explainer", explainers, "Explainers to compare")->check(CLI::IsMember(kExplainerNames));
    o.add("rho", sc.budget_ratios, "Budget ratios")->check(CLI::Range(0.0, 1.0));
    o.add("seed", sc.seed, "Sweep seed");
    o.add("max-failure-fraction", sc.max_failure_fraction, "Largest fraction of skipped molecules per record");
    o.flag("no-align", no_align, "Baselines keep floor(rho*|E|) edges even when RISE keeps more");
    rise_opts.add(o);
    base_opts.add(o);
    c.run = [](const fs::path& out) {
        const BackboneParams params = open_checkpoint(checkpoint);
        const auto mols = select(open_corpus(corpus_dir), split, limit);
        SweepConfig config = sc;
        config.explainers = parse_explainers(explainers);
        config.align_to_rise = !no_align;
        config.rise = rise_opts.resolved();
        config.baseline = base_opts.config;
        const SweepResult result = fidelity_sweep(params, mols, config);
        write_file(out / "records.csv", records_csv(result.records));
        write_file(out / "molecules.csv", molecules_csv(result.molecules));
        write_file(out / "records.json", records_json(result.records) + "\n");
        std::cout << records_csv(result.records);
    };
}

void setup_bonds(Command& c) {
    static std::string checkpoint;
    static std::vector<std::string> explainers{"all"};
    static BondStudyConfig bs;
    static RiseOptions rise_opts;
    static BaselineOptions base_opts;
    auto& o = *c.options;
    o.add("checkpoint", checkpoint, "Trained backbone checkpoint")->required();
    o.add("instances", bs.instances, "Ethane instances")->check(CLI::PositiveNumber);
    o.add("slack", bs.slack, "Budget as a multiple of the summed longest bond per atom")
        ->check(CLI::PositiveNumber);
    o.add("explainer", explainers, "Explainers to score")->check(CLI::IsMember(kExplainerNames));
    o.add("seed", bs.seed, "Instance seed");
    rise_opts.add(o);
    base_opts.add(o);
    c.run = [](const fs::path& out) {
        const BackboneParams params = open_checkpoint(checkpoint);
        BondStudyConfig config = bs;
        config.explainers = parse_explainers(explainers);
        config.rise = rise_opts.resolved();
        config.baseline = base_opts.config;
        const BondStudyResult result = bond_study(params, config);
        write_file(out / "bonds.csv", bond_rows_csv(result.rows));
        json summary = json::array();
        for (const auto& s : result.summary) {
            summary.push_back({{"explainer", s.explainer},
                               {"exact_fraction", s.exact_fraction},
                               {"mean_precision", s.mean_precision},
                               {"mean_recall", s.mean_recall}});
            std::cout << s.explainer << ": exact " << format_double(s.exact_fraction) << ", precision "
                      << format_double(s.mean_precision) << ", recall " << format_double(s.mean_recall) << "\n";
        }
        write_file(out / "bonds.json", summary.dump(2) + "\n");
    };
}

/// Rebuilds the argument list of a recorded run.
std::vector<std::string> replay_arguments(const json& manifest) {
    std::vector<std::string> args{manifest.at("subcommand").get<std::string>()};
    for (const auto& [key, value] : manifest.at("config").items()) {
        if (value.is_null() || (value.is_string() && value.get<std::string>().empty())) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back("--" + key);
        } else if (value.is_array()) {
            args.push_back("--" + key);
            for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            args.push_back("--" + key);
            args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    return args;
}

int run(int argc, char** argv);

int run_args(const std::vector<std::string>& args) {
    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, char** argv) {
    CLI::App app{"Radius-of-influence explanations for 3D message-passing regressors"};
    app.require_subcommand(1);

    std::vector<Command> commands;
    const std::vector<std::pair<std::string, std::string>> specs{
        {"generate", "Write a synthetic decaying-potential corpus"},
        {"train", "Train the backbone on a corpus"},
        {"explain", "Explain molecules with one or more explainers"},
        {"annulus-study", "MAE after removing distance bands of edges"},
        {"oracle-check", "Compare RISE with the exhaustive grid optimum"},
        {"sweep", "Fidelity of every explainer across budget ratios"},
        {"bonds", "Bond recovery on ethane instances"},
    };
    commands.reserve(specs.size());
    for (const auto& [name, help] : specs) {
        Command c;
        c.name = name;
        c.app = app.add_subcommand(name, help);
        c.options = std::make_unique<Options>(c.app);
        commands.push_back(std::move(c));
    }
    for (auto& c : commands) c.app->add_option("--out", c.out, "Output directory")->required();
    setup_generate(commands[0]);
    setup_train(commands[1]);
    setup_explain(commands[2]);
    setup_annulus(commands[3]);
    setup_oracle(commands[4]);
    setup_sweep(commands[5]);
    setup_bonds(commands[6]);

    std::string manifest_path, replay_out;
    auto* replay = app.add_subcommand("replay", "Rerun a recorded run_manifest.json");
    replay->add_option("--manifest", manifest_path, "Manifest of the run to repeat")->required();
    replay->add_option("--out", replay_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    if (replay->parsed()) {
        const json manifest = json::parse(read_file(manifest_path));
        std::vector<std::string> args{"rise_cli"};
        for (auto& a : replay_arguments(manifest)) args.push_back(std::move(a));
        args.push_back("--out");
        args.push_back(replay_out);
        return run_args(args);
    }

    for (auto& c : commands) {
        if (!c.app->parsed()) continue;
        const fs::path out = c.out;
        DirectoryLock lock(out);
        write_manifest(out, c.name, c.options->config());
        c.run(out);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const GenerationError& e) {
        std::cerr << "generation failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInput;
    } catch (const std::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kInput;
    }
}
