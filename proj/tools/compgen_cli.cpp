// compgen command-line interface.
//
// Library errors exit with 10 + the numeric error code so scripts can tell
// failures apart; usage errors use CLI11's own codes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "compgen/concept_space.hpp"
#include "compgen/error.hpp"
#include "compgen/experiments.hpp"
#include "compgen/factorization.hpp"
#include "compgen/io.hpp"
#include "compgen/metrics.hpp"
#include "compgen/probes.hpp"
#include "compgen/synth_data.hpp"
#include "compgen/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace compgen;

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    bool single_thread = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
    cmd->add_option("--config", c.config, "TOML experiment config")->check(CLI::ExistingFile);
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&c](const std::uint64_t& s) { c.seed = s; c.seed_set = true; }, "Base seed");
    if (with_out) cmd->add_option("--out", c.out, "Output path");
    cmd->add_flag("--single-thread", c.single_thread, "Run grid points serially in a fixed order");
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

void emit(const json& j, const std::string& out) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    std::ofstream f(out, std::ios::trunc);
    if (!f) fail(ErrorCode::Io, "cannot write '" + out + "'");
    f << text;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

/// "position=9,scale=3"
std::vector<NuisanceDim> parse_nuisance(const std::string& text) {
    std::vector<NuisanceDim> dims;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorCode::InvalidParameter, "nuisance entries look like name=cardinality");
        dims.push_back({item.substr(0, eq), std::stoi(item.substr(eq + 1))});
    }
    return dims;
}

SplitTag parse_tag(const std::string& tag) {
    if (tag == "train") return SplitTag::Train;
    if (tag == "test") return SplitTag::Test;
    if (tag == "probe") return SplitTag::Probe;
    if (tag == "heldout") return SplitTag::Heldout;
    fail(ErrorCode::InvalidParameter, "unknown split tag '" + tag + "'");
}

/// Embeddings come either from files (--matrix/--labels) or from a trained
/// model applied to a dataset directory (--model/--data).
struct TableSource {
    std::string matrix;
    std::string labels;
    std::string model;
    std::string data;
    int n = 0;

    void attach(CLI::App* cmd, const std::string& prefix = "") {
        cmd->add_option("--" + prefix + "matrix", matrix, "CEMB (or .csv) embedding matrix");
        cmd->add_option("--" + prefix + "labels", labels, "Labels CSV (index,c1,c2)");
        cmd->add_option("--" + prefix + "model", model, "Trained model prefix (from 'train')");
        cmd->add_option("--" + prefix + "data", data, "Dataset directory (from 'gen')");
        if (prefix.empty()) cmd->add_option("--n", n, "Values per concept (default: inferred)");
    }

    bool given() const { return !matrix.empty() || !model.empty(); }

    EmbeddingTable load() const {
        if (!matrix.empty()) {
            if (labels.empty()) fail(ErrorCode::InvalidParameter, "--labels is required with --matrix");
            return io::ingest_embeddings(matrix, labels, n);
        }
        if (!model.empty() && !data.empty()) return embed(io::load_model(model), io::load_dataset(data));
        fail(ErrorCode::InvalidParameter, "provide --matrix/--labels or --model/--data");
    }
};

std::vector<bool> rows_in(const EmbeddingTable& t, const std::vector<Combo>& combos) {
    std::vector<bool> member(static_cast<std::size_t>(t.n) * t.n, false);
    for (const auto& c : combos) member[static_cast<std::size_t>(c.c1) * t.n + c.c2] = true;
    std::vector<bool> keep(t.labels_c1.size());
    for (std::size_t r = 0; r < keep.size(); ++r) keep[r] = member[static_cast<std::size_t>(t.labels_c1[r]) * t.n + t.labels_c2[r]];
    return keep;
}

ExperimentConfig config_for(const std::string& experiment, const Common& c) {
    ExperimentConfig config;
    std::string text;
    if (!c.config.empty()) {
        config = load_config(c.config);
        if (config.experiment != experiment) {
            fail(ErrorCode::InvalidParameter,
                 "config describes '" + config.experiment + "', command asked for '" + experiment + "'");
        }
    } else {
        config = default_config(experiment);
    }
    if (c.seed_set) config.base_seed = c.seed;
    if (!c.out.empty()) config.output_dir = c.out;
    if (c.single_thread) config.single_thread = true;
    return config;
}

int run_sweep(const std::string& experiment, const Common& c, int threads) {
    ExperimentConfig config = config_for(experiment, c);
    if (threads > 0) config.threads = threads;
    const std::string text = c.config.empty() ? std::string() : slurp(c.config);
    const auto rows = run_experiment(config, text);
    std::cout << "wrote " << rows.size() << " rows to " << (config.output_dir / "results.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compgen: concept-space splits, synthetic data, factorization and metrics"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "compgen 0.1.0");

    // split
    Common split_c;
    int split_n = 0;
    int split_k = 0;
    auto* split = app.add_subcommand("split", "Print the (n, k) train/test combination split as JSON");
    split->add_option("--n", split_n, "Values per concept")->required();
    split->add_option("--k", split_k, "Observed combinations per value")->required();
    add_common(split, split_c);

    // gen
    Common gen_c;
    std::string gen_family = "sprite_glyph";
    int gen_n = 3;
    int gen_k = 2;
    int gen_cell = 10;
    int gen_size = 32;
    int gen_card1 = 0;
    int gen_card2 = 0;
    std::string gen_nuisance = "position=9,scale=3";
    std::string gen_tag = "train";
    auto* gen = app.add_subcommand("gen", "Render a labeled dataset for one side of a split");
    gen->add_option("--family", gen_family, "sprite_glyph or colored_glyph");
    gen->add_option("--n", gen_n, "Values per concept");
    gen->add_option("--k", gen_k, "Observed combinations per value");
    gen->add_option("--n-cell", gen_cell, "Samples per combination");
    gen->add_option("--image-size", gen_size, "Pixels per side");
    gen->add_option("--cardinality-c1", gen_card1, "Values of the first concept (default n)");
    gen->add_option("--cardinality-c2", gen_card2, "Values of the second concept (default n)");
    gen->add_option("--nuisance", gen_nuisance, "Comma list of name=cardinality");
    gen->add_option("--tag", gen_tag, "train, test, probe or heldout");
    add_common(gen, gen_c);

    // train
    Common train_c;
    std::string train_data;
    std::string test_data;
    std::string hidden = "256,256";
    ExtractorConfig train_ec;
    TrainConfig train_tc;
    std::string train_sel = "oracle";
    auto* trn = app.add_subcommand("train", "Train the MLP extractor with two heads from scratch");
    trn->add_option("--train-data", train_data, "Training dataset directory")->required();
    trn->add_option("--test-data", test_data, "Unseen-combination dataset directory for oracle selection");
    trn->add_option("--hidden", hidden, "Comma list of hidden widths");
    trn->add_option("--feature-dim", train_ec.feature_dim, "Feature width d");
    trn->add_option("--lr", train_tc.learning_rate, "Learning rate");
    trn->add_option("--epochs", train_tc.epochs, "Epochs");
    trn->add_option("--batch", train_tc.batch_size, "Batch size");
    trn->add_option("--selection", train_sel, "oracle or last");
    add_common(trn, train_c);

    // factorize
    Common fac_c;
    TableSource fac_src;
    int fac_k = 0;
    auto* fac = app.add_subcommand("factorize", "Recover per-value concept vectors from embeddings");
    fac_src.attach(fac);
    fac->add_option("--k", fac_k, "Use only the cyclic (n,k) training combinations (0 = full grid)");
    add_common(fac, fac_c);

    // metrics
    Common met_c;
    TableSource met_src;
    TableSource met_held;
    int met_k = 0;
    auto* met = app.add_subcommand("metrics", "Linearity, orthogonality, decodability and zero-shot accuracy");
    met_src.attach(met);
    met_held.attach(met, "heldout-");
    met->add_option("--k", met_k, "Split for factorized zero-shot accuracy (needs 2 <= k < n)");
    add_common(met, met_c);

    // probe
    Common probe_c;
    TableSource probe_src;
    int probe_k = 2;
    std::string probe_arch = "best";
    ProbeSpec probe_spec;
    auto* prb = app.add_subcommand("probe", "Fit probes on seen combinations, evaluate on unseen ones");
    probe_src.attach(prb);
    prb->add_option("--k", probe_k, "Observed combinations per value");
    prb->add_option("--arch", probe_arch, "linear, mlp_512, mlp_512_512 or best");
    prb->add_option("--lr", probe_spec.train.learning_rate, "Learning rate");
    prb->add_option("--epochs", probe_spec.train.epochs, "Epochs");
    add_common(prb, probe_c);

    // sweep
    Common sweep_c;
    std::string sweep_name;
    int sweep_threads = 0;
    auto* swp = app.add_subcommand("sweep", "Run an experiment grid");
    swp->add_option("experiment", sweep_name, "prop1, diversity_n, diversity_k, scale, three_phase, ingest_factorize, ingest_probe")
        ->required();
    swp->add_option("--threads", sweep_threads, "Worker threads (default: all cores)");
    add_common(swp, sweep_c);

    // prop1
    Common prop_c;
    auto* prop = app.add_subcommand("prop1", "Exact recovery and zero-shot check on synthetic factored embeddings");
    add_common(prop, prop_c);

    // ingest
    Common ing_c;
    TableSource ing_src;
    auto* ing = app.add_subcommand("ingest", "Validate an exported embedding matrix and its labels");
    ing->add_option("--matrix", ing_src.matrix, "CEMB (or .csv) embedding matrix")->required();
    ing->add_option("--labels", ing_src.labels, "Labels CSV")->required();
    ing->add_option("--n", ing_src.n, "Values per concept (default: inferred)");
    add_common(ing, ing_c);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*split) {
            emit(json(build_nk_split(split_n, split_k)), split_c.out);
        } else if (*gen) {
            DatasetSpec spec;
            spec.family = parse_family(gen_family);
            spec.image_size = gen_size;
            spec.n_cell = gen_cell;
            spec.seed = gen_c.seed;
            spec.concept_spec = {"glyphs", gen_card1 > 0 ? gen_card1 : gen_n, gen_card2 > 0 ? gen_card2 : gen_n,
                                 parse_nuisance(gen_nuisance)};
            if (gen_c.out.empty()) fail(ErrorCode::InvalidParameter, "gen needs --out <directory>");
            const auto set = generate(spec, build_nk_split(gen_n, gen_k), parse_tag(gen_tag));
            io::save_dataset(gen_c.out, set);
            std::cout << "wrote " << set.size() << " images to " << gen_c.out << "\n";
        } else if (*trn) {
            if (!train_c.config.empty()) {
                const auto cfg = load_config(train_c.config);
                train_ec = cfg.extractor;
                train_tc = cfg.train;
            } else {
                train_ec.hidden_sizes = parse_int_list(hidden);
                train_tc.selection = parse_selection(train_sel);
            }
            train_ec.init_seed = train_c.seed;
            train_tc.shuffle_seed = train_c.seed;
            const auto train_set = io::load_dataset(train_data);
            LabeledImageSet test_set;
            if (!test_data.empty()) test_set = io::load_dataset(test_data);
            const auto model = compgen::train(train_set, test_set, train_ec, train_tc);
            if (train_c.out.empty()) fail(ErrorCode::InvalidParameter, "train needs --out <prefix>");
            io::save_model(train_c.out, model);
            const auto& best = model.history[static_cast<std::size_t>(std::max(model.best_epoch, 1) - 1)];
            std::cout << "best epoch " << model.best_epoch << ": id " << best.id_accuracy << ", ood "
                      << best.ood_accuracy << "\n";
        } else if (*fac) {
            const EmbeddingTable table = fac_src.load();
            FactoredModel model;
            if (fac_k == 0) {
                model = conditional_vectors(table);
            } else {
                const NkSplit s = build_nk_split(table.n, fac_k);
                const auto train = table.subset(rows_in(table, s.train_combos));
                model = recover_from_split(joint_embeddings(train, s.train_combos), table.n, fac_k);
            }
            emit(json(model), fac_c.out);
        } else if (*met) {
            const EmbeddingTable table = met_src.load();
            json report{{"n", table.n}, {"rows", table.rows()}, {"dim", table.dim()}, {"seed", met_c.seed}};
            const FactoredModel full = conditional_vectors(table);
            report["linearity_r2"] = linearity_r2(table);
            report["orthogonality"] = orthogonality(full);
            report["orthogonality_abs"] = orthogonality(full, true);
            if (met_held.given()) {
                met_held.n = table.n;
                DecodabilityConfig dc;
                dc.init_seed = met_c.seed;
                dc.train.shuffle_seed = met_c.seed;
                const auto dec = decodability(table, met_held.load(), dc);
                report["decodability_c1"] = dec.c1;
                report["decodability_c2"] = dec.c2;
            }
            if (met_k > 0) {
                const NkSplit s = build_nk_split(table.n, met_k);
                const auto train = table.subset(rows_in(table, s.train_combos));
                const auto test = table.subset(rows_in(table, s.test_combos));
                const auto model = recover_from_split(joint_embeddings(train, s.train_combos), table.n, met_k);
                const auto zs = zero_shot_accuracy(classify_rows(model, test.matrix), test.labels_c1, test.labels_c2);
                report["k"] = met_k;
                report["zero_shot_acc_c1"] = zs.c1;
                report["zero_shot_acc_c2"] = zs.c2;
            }
            emit(report, met_c.out);
        } else if (*prb) {
            const EmbeddingTable table = probe_src.load();
            const NkSplit s = build_nk_split(table.n, probe_k);
            const auto train = table.subset(rows_in(table, s.train_combos));
            const auto test = table.subset(rows_in(table, s.test_combos));
            probe_spec.init_seed = probe_c.seed;
            probe_spec.train.shuffle_seed = probe_c.seed;
            json report{{"n", table.n}, {"k", probe_k}};
            if (probe_arch == "best") {
                const auto cmp = best_probe(train, test, probe_spec);
                for (const auto& [arch, acc] : cmp.per_arch) report["per_arch"][to_string(arch)] = {acc.c1, acc.c2};
                report["best_arch"] = to_string(cmp.best_arch);
                report["acc_c1"] = cmp.best.c1;
                report["acc_c2"] = cmp.best.c2;
            } else {
                probe_spec.arch = parse_probe_arch(probe_arch);
                const Probe p = fit_probe(train, probe_spec, &test);
                const auto acc = eval_probe(p, test);
                report["arch"] = probe_arch;
                report["best_epoch"] = p.best_epoch;
                report["train_acc"] = {p.train_accuracy.c1, p.train_accuracy.c2};
                report["acc_c1"] = acc.c1;
                report["acc_c2"] = acc.c2;
            }
            emit(report, probe_c.out);
        } else if (*swp) {
            return run_sweep(sweep_name, sweep_c, sweep_threads);
        } else if (*prop) {
            return run_sweep("prop1", prop_c, 0);
        } else if (*ing) {
            const EmbeddingTable table = ing_src.load();
            bool balanced = true;
            try {
                conditional_vectors(table);
            } catch (const Error&) {
                balanced = false;
            }
            json report{{"rows", table.rows()}, {"dim", table.dim()}, {"n", table.n}, {"balanced_full_grid", balanced}};
            emit(report, ing_c.out);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 10 + static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
