// Acceptance run: one PASS/FAIL line per headline criterion, plus INFO lines
// for the supporting numbers. Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "compgen/error.hpp"
#include "compgen/experiments.hpp"
#include "compgen/factorization.hpp"
#include "compgen/io.hpp"
#include "compgen/metrics.hpp"
#include "compgen/probes.hpp"
#include "compgen/rng.hpp"

namespace fs = std::filesystem;
using namespace compgen;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void info(const std::string& text) {
    std::printf("INFO  %s\n", text.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Truth {
    Eigen::VectorXd mean;
    Eigen::MatrixXd u1;
    Eigen::MatrixXd u2;
};

Truth random_truth(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    auto draw = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
        return m;
    };
    Truth t{draw(d, 1).col(0), draw(n, d), draw(n, d)};
    t.u1.rowwise() -= t.u1.colwise().mean();
    t.u2.rowwise() -= t.u2.colwise().mean();
    return t;
}

EmbeddingTable grid_table(const Truth& t, int per_cell, double noise, std::uint64_t seed) {
    Rng rng(seed);
    const int n = static_cast<int>(t.u1.rows());
    EmbeddingTable table;
    table.n = n;
    table.matrix.resize(n * n * per_cell, t.mean.size());
    Eigen::Index r = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int s = 0; s < per_cell; ++s, ++r) {
                table.matrix.row(r) = (t.mean + t.u1.row(i).transpose() + t.u2.row(j).transpose()).transpose();
                for (Eigen::Index c = 0; c < table.dim(); ++c) table.matrix(r, c) += noise * rng.normal();
                table.labels_c1.push_back(i);
                table.labels_c2.push_back(j);
            }
        }
    }
    return table;
}

EmbeddingTable train_rows(const EmbeddingTable& table, const NkSplit& split) {
    std::vector<bool> keep(static_cast<std::size_t>(table.rows()));
    for (std::size_t r = 0; r < keep.size(); ++r) keep[r] = split.is_train({table.labels_c1[r], table.labels_c2[r]});
    return table.subset(keep);
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void check_prop1() {
    const auto start = Clock::now();
    bool perfect = true;
    double worst = 0.0;
    int points = 0;
    for (int n = 3; n <= 10; ++n) {
        for (std::uint64_t seed = 0; seed < 10; ++seed, ++points) {
            for (const auto& row : prop1_point(n, seed, 0.0)) {
                if (row.metric == "accuracy_c1" || row.metric == "accuracy_c2") perfect = perfect && row.value == 1.0;
                if (row.metric == "max_recovery_error") worst = std::max(worst, row.value);
            }
        }
    }
    const double elapsed = seconds_since(start);
    verdict(perfect && worst <= 1e-8 && elapsed < 5.0, "prop1 exactness",
            fmt("%d points, all unseen combos correct: %s, max recovery error %.2e, %.3f s", points,
                perfect ? "yes" : "no", worst, elapsed));
}

void check_lemmas() {
    double zero_sum = 0.0;
    double additivity = 0.0;
    double agreement = 0.0;
    bool ranks = true;
    for (int n = 2; n <= 10; ++n) {
        const Truth t = random_truth(n, 2 * n + 5, 9000 + n);
        const auto full = grid_table(t, 1, 0.0, 0);
        const auto cond = conditional_vectors(full);
        zero_sum = std::max({zero_sum, max_abs(cond.u1.colwise().sum()), max_abs(cond.u2.colwise().sum())});
        const auto joints = joint_embeddings(full, build_nk_split(n, n).all_combos());
        for (const auto& j : joints.joints) {
            additivity = std::max(additivity, max_abs(j.vector - cond.u1.row(j.pair.c1).transpose() -
                                                      cond.u2.row(j.pair.c2).transpose()));
        }
        const auto rec = recover_from_split(joints, n, n);
        agreement = std::max({agreement, max_abs(rec.u1 - cond.u1), max_abs(rec.u2 - cond.u2),
                              max_abs(rec.global_mean - cond.global_mean)});

        const auto split = build_nk_split(n, 2);
        ranks = ranks && numerical_rank(design_matrix(split.train_combos, n)) == 2 * n - 1;
        if (n >= 3) {
            const auto cyc = recover_from_split(joint_embeddings(train_rows(full, split), split.train_combos), n, 2);
            zero_sum = std::max({zero_sum, max_abs(cyc.u1.colwise().sum()), max_abs(cyc.u2.colwise().sum())});
        }
    }
    verdict(zero_sum <= 1e-8 && additivity <= 1e-8 && agreement <= 1e-8 && ranks, "Lemma suite",
            fmt("zero-sum %.2e, additivity %.2e, cross-method %.2e, cyclic k=2 rank 2n-1 for n=2..10: %s", zero_sum,
                additivity, agreement, ranks ? "yes" : "no"));
}

void check_metric_sanity() {
    const Truth t = random_truth(5, 9, 31);
    const double r2_exact = linearity_r2(grid_table(t, 3, 0.0, 0));

    auto noisy = grid_table(t, 3, 0.6, 1);
    const double base = linearity_r2(noisy);
    Rng rng(5);
    Eigen::MatrixXd g(9, 9);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    noisy.matrix = (noisy.matrix.rowwise() + Eigen::RowVectorXd::Constant(9, -4.0)) * q.transpose();
    const double invariance = std::abs(linearity_r2(noisy) - base);

    FactoredModel blocks;
    blocks.global_mean = Eigen::VectorXd::Zero(6);
    blocks.u1 = Eigen::MatrixXd::Zero(3, 6);
    blocks.u2 = Eigen::MatrixXd::Zero(3, 6);
    blocks.u1.leftCols(3) = t.u1.leftCols(3).topRows(3);
    blocks.u2.rightCols(3) = t.u2.rightCols(3).topRows(3);
    const double orth = orthogonality(blocks);

    const int n = 8;
    double chance = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Truth s = random_truth(n, 10, 300 + seed);
        auto train = grid_table(s, 10, 0.5, seed);
        const auto heldout = grid_table(s, 10, 0.5, seed + 50);
        std::vector<std::size_t> order(train.labels_c1.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffler(seed);
        shuffler.shuffle(order);
        const auto c1 = train.labels_c1;
        const auto c2 = train.labels_c2;
        for (std::size_t i = 0; i < order.size(); ++i) {
            train.labels_c1[i] = c1[order[i]];
            train.labels_c2[i] = c2[order[i]];
        }
        DecodabilityConfig cfg;
        cfg.init_seed = seed;
        cfg.train.shuffle_seed = seed;
        chance += decodability(train, heldout, cfg).mean() / 10.0;
    }
    const bool ok = std::abs(r2_exact - 1.0) <= 1e-9 && invariance <= 1e-9 && orth == 0.0 &&
                    std::abs(chance - 1.0 / n) <= 0.05;
    verdict(ok, "Metric sanity",
            fmt("R2 on factored data %.12f, R2 change under translation+rotation %.2e, block orthogonality %.1f, "
                "shuffled-label decodability %.4f (chance %.2f)",
                r2_exact, invariance, orth, chance, 1.0 / n));
}

void check_splits() {
    bool ok = true;
    int checked = 0;
    for (int n = 1; n <= 20; ++n) {
        for (int k = 1; k <= n; ++k, ++checked) {
            const auto s = build_nk_split(n, k);
            ok = ok && s.train_combos.size() == static_cast<std::size_t>(n * k) &&
                 s.test_combos.size() == static_cast<std::size_t>((n - k) * n);
            std::vector<int> rows(n, 0);
            std::vector<int> cols(n, 0);
            for (const auto& c : s.train_combos) {
                ++rows[c.c1];
                ++cols[c.c2];
            }
            for (int v = 0; v < n; ++v) ok = ok && rows[v] == k && cols[v] == k;
        }
    }
    verdict(ok, "Split combinatorics", fmt("%d (n, k) pairs with 1 <= k <= n <= 20", checked));
}

void check_gradients() {
    DatasetSpec spec;
    spec.family = DatasetFamily::ColoredGlyph;
    spec.image_size = 32;
    spec.concept_spec = {"glyphs", 2, 2, {{"position", 4}}};
    spec.n_cell = 1;
    const auto images = generate(spec, build_nk_split(2, 2), SplitTag::Train);
    const double extractor = gradient_check(ExtractorConfig{}, images);

    const Truth t = random_truth(2, 16, 4);
    const auto batch = grid_table(t, 2, 0.5, 4);
    ProbeSpec p;
    p.arch = ProbeArch::Mlp512;
    const double mlp1 = gradient_check(p, batch);
    p.arch = ProbeArch::Mlp512x512;
    const double mlp2 = gradient_check(p, batch);
    verdict(std::max({extractor, mlp1, mlp2}) <= 1e-4, "Gradient check",
            fmt("max relative error: default extractor %.2e, mlp_512 %.2e, mlp_512_512 %.2e", extractor, mlp1, mlp2));
}

// 5-seed mean of a metric after applying f to every per-seed value.
double seed_mean(const std::vector<ResultRow>& rows, const std::string& metric, int n, int k, double (*f)(double)) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : rows) {
        if (r.metric != metric || r.n != n || r.k != k) continue;
        sum += f(r.value);
        ++count;
    }
    return count == 0 ? std::nan("") : sum / count;
}

double identity(double v) { return v; }
double absolute(double v) { return std::abs(v); }

std::vector<ResultRow> sweep(const std::string& experiment, const fs::path& out, double& elapsed) {
    auto config = default_config(experiment);
    config.output_dir = out / experiment;
    const auto start = Clock::now();
    auto rows = run_experiment(config);
    elapsed += seconds_since(start);
    info(fmt("%s sweep: %zu rows in %.1f s", experiment.c_str(), rows.size(), seconds_since(start)));
    return rows;
}

void check_directional(const fs::path& out) {
    double elapsed = 0.0;

    // (a) three-phase sweep at n = 10
    const auto tp = sweep("three_phase", out, elapsed);
    const int lo = k_from_fraction(0.1, 10);
    const int hi = k_from_fraction(0.9, 10);
    const double r2_gain = seed_mean(tp, "linearity_r2", 10, hi, identity) - seed_mean(tp, "linearity_r2", 10, lo, identity);
    const double orth_lo = seed_mean(tp, "orthogonality", 10, lo, absolute);
    const double orth_hi = seed_mean(tp, "orthogonality", 10, hi, absolute);
    const double zs_gain =
        seed_mean(tp, "zero_shot_acc", 10, hi, identity) - seed_mean(tp, "zero_shot_acc", 10, lo, identity);
    info(fmt("three_phase |mean signed cosine| %.5f -> %.5f; mean |cosine| %.4f -> %.4f",
             std::abs(seed_mean(tp, "orthogonality", 10, lo, identity)),
             std::abs(seed_mean(tp, "orthogonality", 10, hi, identity)),
             seed_mean(tp, "orthogonality_abs", 10, lo, identity), seed_mean(tp, "orthogonality_abs", 10, hi, identity)));
    for (double f : {0.1, 0.25, 0.5, 0.75, 0.9}) {
        const int k = k_from_fraction(f, 10);
        const double dec = seed_mean(tp, "decodability", 10, k, identity);
        info(fmt("three_phase k/n=%.2f (k=%d): R2 %.3f, zero-shot %.3f, decodability %.3f%s", f, k,
                 seed_mean(tp, "linearity_r2", 10, k, identity), seed_mean(tp, "zero_shot_acc", 10, k, identity), dec,
                 f >= 0.5 ? (dec >= 0.95 ? " (>= 0.95)" : " (below 0.95)") : ""));
    }
    verdict(r2_gain >= 0.2 && orth_hi <= orth_lo && zs_gain >= 0.2, "Directional (a) three-phase",
            fmt("R2 gain %.3f, mean |orthogonality| %.5f -> %.5f, zero-shot gain %.1f points", r2_gain, orth_lo,
                orth_hi, 100.0 * zs_gain));

    // (b) scale sweep at n = 3, k = 1
    const auto sc = sweep("scale", out, elapsed);
    std::map<long long, std::pair<double, double>> by_size;  // train size -> (gap, ood)
    {
        std::map<long long, std::vector<double>> gap;
        std::map<long long, std::vector<double>> ood;
        for (const auto& r : sc) {
            if (r.metric == "gap") gap[r.dataset_size].push_back(r.value);
            if (r.metric == "ood_accuracy") ood[r.dataset_size].push_back(r.value);
        }
        for (auto& [size, v] : gap) {
            double g = 0.0;
            double o = 0.0;
            for (double x : v) g += x / static_cast<double>(v.size());
            for (double x : ood[size]) o += x / static_cast<double>(ood[size].size());
            by_size[size] = {g, o};
        }
    }
    bool gaps = !by_size.empty();
    std::string gap_text;
    for (const auto& [size, go] : by_size) {
        gaps = gaps && go.first >= 0.30;
        gap_text += fmt("%s%lld: gap %.1f / OOD %.1f", gap_text.empty() ? "" : ", ", size, 100.0 * go.first,
                        100.0 * go.second);
    }
    const double ood_change = std::abs(by_size.rbegin()->second.second - by_size.begin()->second.second);
    const double ratio = static_cast<double>(by_size.rbegin()->first) / static_cast<double>(by_size.begin()->first);
    verdict(gaps && ood_change <= 0.10 && ratio >= 4.0, "Directional (b) scale",
            fmt("%s; OOD change across x%.0f data %.1f points", gap_text.c_str(), ratio, 100.0 * ood_change));

    // (c) diversity sweeps
    auto monotone = [](const std::vector<ResultRow>& rows, const std::vector<std::pair<int, int>>& points,
                       std::string& text) {
        bool ok = true;
        double prev = -1.0;
        for (auto [n, k] : points) {
            const double ood = seed_mean(rows, "ood_accuracy", n, k, identity);
            if (prev >= 0.0) ok = ok && ood >= prev - 0.03;
            prev = ood;
            text += fmt("%s(%d,%d) %.3f", text.empty() ? "" : ", ", n, k, ood);
        }
        return ok;
    };
    const auto dn = sweep("diversity_n", out, elapsed);
    std::vector<std::pair<int, int>> n_points;
    for (int n : default_config("diversity_n").grid.n) n_points.emplace_back(n, n - 1);
    std::string n_text;
    const bool n_ok = monotone(dn, n_points, n_text);
    for (auto [n, k] : n_points) {
        const double id = seed_mean(dn, "id_accuracy", n, k, identity);
        info(fmt("diversity_n n=%d: ID %.3f at the selected epoch (%s 0.95), ID %.3f at the last epoch", n, id,
                 id >= 0.95 ? ">=" : "<", seed_mean(dn, "id_accuracy_last", n, k, identity)));
    }

    const auto dk = sweep("diversity_k", out, elapsed);
    std::vector<std::pair<int, int>> k_points;
    for (int k : default_config("diversity_k").grid.k) k_points.emplace_back(10, k);
    std::string k_text;
    const bool k_ok = monotone(dk, k_points, k_text);
    verdict(n_ok && k_ok, "Directional (c) diversity",
            fmt("OOD over n (k=n-1): %s; over k (n=10): %s", n_text.c_str(), k_text.c_str()));

    verdict(elapsed <= 1800.0, "Directional runtime budget", fmt("%.1f s for all four sweeps (limit 1800 s)", elapsed));
}

std::vector<char> bytes_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_ingestion(const fs::path& out) {
    const fs::path fixtures = COMPGEN_FIXTURES;
    const fs::path dir = out / "ingestion";
    fs::create_directories(dir);

    bool round_trip = true;
    for (const char* name : {"small.cemb", "grid.cemb"}) {
        io::write_cemb(dir / name, io::read_cemb(fixtures / name));
        round_trip = round_trip && bytes_of(dir / name) == bytes_of(fixtures / name);
    }
    round_trip = round_trip && io::read_matrix(fixtures / "small.csv") == io::read_matrix(fixtures / "small.cemb");

    auto config = default_config("ingest_factorize");
    config.output_dir = dir / "factorize";
    config.ingest = {fixtures / "grid.cemb", fixtures / "grid_labels.csv", 0};
    config.grid.k = {2, 3};
    const auto frows = run_experiment(config);
    double r2 = std::nan("");
    double zero_shot = 1.0;
    for (const auto& r : frows) {
        if (r.metric == "linearity_r2") r2 = r.value;
        if (r.metric == "zero_shot_acc") zero_shot = std::min(zero_shot, r.value);
    }

    config.experiment = "ingest_probe";
    config.output_dir = dir / "probe";
    config.grid.k = {2};
    const auto prows = run_experiment(config);
    double best = std::nan("");
    std::set<std::string> names;
    bool in_range = !prows.empty();
    for (const auto& r : prows) {
        names.insert(r.metric);
        in_range = in_range && r.value >= 0.0 && r.value <= 1.0;
        if (r.metric == "best_probe_acc") best = r.value;
    }
    bool complete = true;
    for (const char* m : {"probe_linear", "probe_mlp_512", "probe_mlp_512_512", "best_probe_acc_c1",
                          "best_probe_acc_c2", "best_probe_acc", "best_probe_acc_normalized"})
        complete = complete && names.contains(m);

    verdict(round_trip && r2 > 0.99 && zero_shot == 1.0 && complete && in_range, "Ingestion pipeline",
            fmt("CEMB fixtures round-trip bit-exactly: %s; factorize R2 %.4f, factorized zero-shot %.3f; "
                "probe report complete: %s; best probe on unseen combos %.3f",
                round_trip ? "yes" : "no", r2, zero_shot, complete && in_range ? "yes" : "no", best));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    fs::path out = "acceptance_runs";
    bool skip_sweeps = false;
    app.add_option("--out", out, "Directory for sweep outputs");
    app.add_flag("--skip-sweeps", skip_sweeps, "Skip the directional training sweeps");
    CLI11_PARSE(app, argc, argv);

    const auto start = Clock::now();
    try {
        check_prop1();
        check_lemmas();
        check_metric_sanity();
        check_splits();
        check_gradients();
        if (skip_sweeps) {
            info("directional sweeps skipped");
        } else {
            check_directional(out);
        }
        check_ingestion(out);
    } catch (const std::exception& e) {
        std::printf("FAIL  unexpected error: %s\n", e.what());
        return 1;
    }
    info(fmt("total %.1f s, %d failing", seconds_since(start), failures));
    return failures == 0 ? 0 : 1;
}
