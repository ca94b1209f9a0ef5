#include "compgen/experiments.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "compgen/error.hpp"
#include "compgen/factorization.hpp"
#include "compgen/io.hpp"
#include "compgen/rng.hpp"

namespace compgen {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), ptr);
}

/// Rows for one grid point sharing its coordinates and timing.
class RowBuilder {
public:
    RowBuilder(std::string experiment, int n, int k, std::uint64_t seed, long long size)
        : experiment_(std::move(experiment)), n_(n), k_(k), seed_(seed), size_(size) {}

    void add(const std::string& metric, double value) {
        rows_.push_back({experiment_, n_, k_, seed_, size_, metric, value, 0.0});
    }

    std::vector<ResultRow> finish(double wall_time) {
        for (auto& row : rows_) row.wall_time_s = wall_time;
        return std::move(rows_);
    }

private:
    std::string experiment_;
    int n_, k_;
    std::uint64_t seed_;
    long long size_;
    std::vector<ResultRow> rows_;
};

DatasetSpec dataset_for(const ExperimentConfig& config, int n, int n_cell, std::uint64_t data_seed) {
    DatasetSpec spec = config.dataset;
    auto& cs = spec.concept_spec;
    if (cs.cardinality_c1 <= 0) cs.cardinality_c1 = n;
    if (cs.cardinality_c2 <= 0) cs.cardinality_c2 = n;
    spec.n_cell = n_cell;
    spec.seed = data_seed;
    return spec;
}

std::vector<bool> rows_in(const EmbeddingTable& table, const std::vector<Combo>& combos) {
    std::vector<bool> member(static_cast<std::size_t>(table.n) * table.n, false);
    for (const auto& c : combos) member[static_cast<std::size_t>(c.c1) * table.n + c.c2] = true;
    std::vector<bool> keep(static_cast<std::size_t>(table.rows()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
        keep[r] = member[static_cast<std::size_t>(table.labels_c1[r]) * table.n + table.labels_c2[r]];
    }
    return keep;
}

void write_pca(const std::filesystem::path& path, const EmbeddingTable& table) {
    const Eigen::MatrixXd coords = pca_top2(table.matrix);
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << "index,c1,c2,pc1,pc2\n";
    for (Eigen::Index r = 0; r < coords.rows(); ++r) {
        out << r << ',' << table.labels_c1[static_cast<std::size_t>(r)] << ','
            << table.labels_c2[static_cast<std::size_t>(r)] << ',' << format_double(coords(r, 0)) << ','
            << format_double(coords(r, 1)) << '\n';
    }
}

void add_training_metrics(RowBuilder& rb, const TrainingPoint& p) {
    rb.add("id_accuracy", p.id_accuracy);
    rb.add("ood_accuracy", p.ood_accuracy);
    rb.add("id_accuracy_last", p.id_accuracy_last);
    rb.add("ood_accuracy_last", p.ood_accuracy_last);
    rb.add("best_epoch", p.model.best_epoch);
}

using Task = std::function<std::vector<ResultRow>()>;

std::vector<Task> prop1_tasks(const ExperimentConfig& c) {
    std::vector<Task> tasks;
    for (int n : c.grid.n)
        for (auto seed : c.grid.seeds)
            for (double noise : c.grid.noise)
                tasks.emplace_back([n, seed, noise, base = c.base_seed] { return prop1_point(n, seed, noise, base); });
    return tasks;
}

std::vector<Task> diversity_tasks(const ExperimentConfig& c) {
    std::vector<Task> tasks;
    const int total = c.grid.dataset_size.front();
    std::vector<std::pair<int, int>> points;
    if (c.experiment == "diversity_n") {
        for (int n : c.grid.n) points.emplace_back(n, n - 1);
    } else {
        for (int k : c.grid.k) points.emplace_back(c.grid.n.front(), k);
    }
    for (auto [n, k] : points) {
        const int n_cell = std::max(1, total / (n * k));
        for (auto seed : c.grid.seeds) {
            tasks.emplace_back([&c, n, k, n_cell, seed] {
                const auto start = Clock::now();
                const TrainingPoint p = run_training_point(c, n, k, n_cell, seed);
                RowBuilder rb(c.experiment, n, k, seed, p.train_samples);
                add_training_metrics(rb, p);
                return rb.finish(seconds_since(start));
            });
        }
    }
    return tasks;
}

std::vector<Task> scale_tasks(const ExperimentConfig& c) {
    std::vector<Task> tasks;
    const int n = c.grid.n.front();
    const int k = c.grid.k.front();
    for (int n_cell : c.grid.n_cell) {
        for (auto seed : c.grid.seeds) {
            tasks.emplace_back([&c, n, k, n_cell, seed] {
                const auto start = Clock::now();
                const TrainingPoint p = run_training_point(c, n, k, n_cell, seed);
                RowBuilder rb(c.experiment, n, k, seed, p.train_samples);
                add_training_metrics(rb, p);
                rb.add("gap", p.id_accuracy - p.ood_accuracy);
                rb.add("train_samples", static_cast<double>(p.train_samples));
                return rb.finish(seconds_since(start));
            });
        }
    }
    return tasks;
}

std::vector<Task> three_phase_tasks(const ExperimentConfig& c) {
    std::vector<Task> tasks;
    const int n = c.grid.n.front();
    const int n_cell = c.grid.n_cell.front();
    std::vector<int> ks;
    for (double f : c.grid.k_fractions) ks.push_back(k_from_fraction(f, n));
    for (int k : ks) {
        for (auto seed : c.grid.seeds) {
            tasks.emplace_back([&c, n, k, n_cell, seed] {
                const auto start = Clock::now();
                const TrainingPoint p = run_training_point(c, n, k, n_cell, seed);
                RowBuilder rb(c.experiment, n, k, seed, p.train_samples);
                add_training_metrics(rb, p);

                const auto seeds = point_seeds(c.base_seed, seed, n, k, n_cell);
                const NkSplit split = build_nk_split(n, k);
                const DatasetSpec train_spec = dataset_for(c, n, n_cell, seeds.data);
                if (k < n) {
                    const auto test_set = generate(train_spec, split, SplitTag::Test);
                    std::vector<int> p1;
                    std::vector<int> p2;
                    p.model.net.predict(to_matrix(test_set), p1, p2);
                    std::vector<Combo> predictions(p1.size());
                    for (std::size_t r = 0; r < p1.size(); ++r) predictions[r] = {p1[r], p2[r]};
                    const auto zs = zero_shot_accuracy(predictions, test_set.labels_c1, test_set.labels_c2);
                    rb.add("zero_shot_acc_c1", zs.c1);
                    rb.add("zero_shot_acc_c2", zs.c2);
                    rb.add("zero_shot_acc", zs.mean);
                } else {
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    rb.add("zero_shot_acc_c1", nan);
                    rb.add("zero_shot_acc_c2", nan);
                    rb.add("zero_shot_acc", nan);
                }

                const DatasetSpec eval_spec = dataset_for(c, n, c.eval_n_cell, seeds.data);
                const EmbeddingTable probe = embed(p.model, generate(eval_spec, split, SplitTag::Probe));
                const EmbeddingTable heldout = embed(p.model, generate(eval_spec, split, SplitTag::Heldout));
                DecodabilityConfig dc = c.decodability;
                dc.init_seed = derive_seed(seeds.init, {1});
                dc.train.shuffle_seed = derive_seed(seeds.shuffle, {1});
                const AccuracyPair dec = decodability(probe, heldout, dc);
                rb.add("decodability_c1", dec.c1);
                rb.add("decodability_c2", dec.c2);
                rb.add("decodability", dec.mean());

                const double nan = std::numeric_limits<double>::quiet_NaN();
                double r2 = nan;
                double orth = nan;
                double orth_abs = nan;
                try {
                    r2 = linearity_r2(probe);
                    const FactoredModel fm = conditional_vectors(probe);
                    orth = orthogonality(fm);
                    orth_abs = orthogonality(fm, true);
                } catch (const Error& e) {
                    // collapsed features leave a metric undefined; it is reported as nan
                    if (e.code() != ErrorCode::DegenerateVariance && e.code() != ErrorCode::DegenerateVector) throw;
                }
                rb.add("linearity_r2", r2);
                rb.add("orthogonality", orth);
                rb.add("orthogonality_abs", orth_abs);

                write_pca(c.output_dir / "pca" /
                              ("n" + std::to_string(n) + "_k" + std::to_string(k) + "_seed" + std::to_string(seed) + ".csv"),
                          probe);
                return rb.finish(seconds_since(start));
            });
        }
    }
    return tasks;
}

EmbeddingTable load_ingested(const ExperimentConfig& c) {
    return io::ingest_embeddings(c.ingest.matrix, c.ingest.labels, c.ingest.n);
}

std::vector<Task> ingest_factorize_tasks(const ExperimentConfig& c, const EmbeddingTable& table) {
    std::vector<Task> tasks;
    const int n = table.n;
    tasks.emplace_back([&c, &table, n] {
        const auto start = Clock::now();
        RowBuilder rb(c.experiment, n, n, c.base_seed, table.rows());
        try {
            const FactoredModel full = conditional_vectors(table);
            rb.add("linearity_r2", linearity_r2(table));
            rb.add("orthogonality", orthogonality(full));
            rb.add("orthogonality_abs", orthogonality(full, true));
        } catch (const Error& e) {
            // full-grid structure metrics need a balanced complete grid; skip otherwise
            if (e.code() != ErrorCode::BalanceViolation && e.code() != ErrorCode::DegenerateVariance &&
                e.code() != ErrorCode::DegenerateVector) {
                throw;
            }
        }
        return rb.finish(seconds_since(start));
    });
    for (int k : c.grid.k) {
        tasks.emplace_back([&c, &table, n, k] {
            const auto start = Clock::now();
            const NkSplit split = build_nk_split(n, k);
            const EmbeddingTable train = table.subset(rows_in(table, split.train_combos));
            const JointSet joints = joint_embeddings(train, split.train_combos);
            const FactoredModel model = recover_from_split(joints, n, k);
            RowBuilder rb(c.experiment, n, k, c.base_seed, train.rows());
            rb.add("design_rank", model.design_rank);
            rb.add("residual", model.residual);
            if (k < n) {
                const EmbeddingTable test = table.subset(rows_in(table, split.test_combos));
                if (test.rows() > 0) {
                    const auto predictions = classify_rows(model, test.matrix);
                    const auto zs = zero_shot_accuracy(predictions, test.labels_c1, test.labels_c2);
                    rb.add("zero_shot_acc_c1", zs.c1);
                    rb.add("zero_shot_acc_c2", zs.c2);
                    rb.add("zero_shot_acc", zs.mean);
                }
            }
            return rb.finish(seconds_since(start));
        });
    }
    return tasks;
}

std::vector<Task> ingest_probe_tasks(const ExperimentConfig& c, const EmbeddingTable& table) {
    std::vector<Task> tasks;
    const int n = table.n;
    for (int k : c.grid.k) {
        if (k >= n) fail(ErrorCode::InvalidParameter, "ingest_probe needs k < n so unseen combinations exist");
        for (auto seed : c.grid.seeds) {
            tasks.emplace_back([&c, &table, n, k, seed] {
                const auto start = Clock::now();
                const NkSplit split = build_nk_split(n, k);
                const EmbeddingTable train = table.subset(rows_in(table, split.train_combos));
                const EmbeddingTable test = table.subset(rows_in(table, split.test_combos));
                if (train.rows() == 0 || test.rows() == 0) {
                    fail(ErrorCode::IncompleteSplit, "ingested table lacks rows for the train or test combinations");
                }
                const auto seeds = point_seeds(c.base_seed, seed, n, k, 0);
                ProbeSpec spec = c.probe;
                spec.init_seed = seeds.init;
                spec.train.shuffle_seed = seeds.shuffle;
                const ProbeComparison cmp = best_probe(train, test, spec, c.probe_archs);
                RowBuilder rb(c.experiment, n, k, seed, train.rows());
                for (const auto& [arch, acc] : cmp.per_arch) rb.add("probe_" + to_string(arch), acc.mean());
                rb.add("best_probe_acc_c1", cmp.best.c1);
                rb.add("best_probe_acc_c2", cmp.best.c2);
                rb.add("best_probe_acc", cmp.best.mean());
                return rb.finish(seconds_since(start));
            });
        }
    }
    return tasks;
}

/// Adds best_probe_acc_normalized rows: per seed, best accuracy over k divided by its maximum.
void append_normalized(std::vector<ResultRow>& rows) {
    std::map<std::uint64_t, std::vector<std::size_t>> by_seed;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].metric == "best_probe_acc") by_seed[rows[i].seed].push_back(i);
    std::vector<ResultRow> extra;
    for (const auto& [seed, idx] : by_seed) {
        std::vector<double> values;
        for (auto i : idx) values.push_back(rows[i].value);
        if (*std::max_element(values.begin(), values.end()) <= 0.0) continue;
        const auto normalized = normalize_by_max(values);
        for (std::size_t t = 0; t < idx.size(); ++t) {
            ResultRow row = rows[idx[t]];
            row.metric = "best_probe_acc_normalized";
            row.value = normalized[t];
            extra.push_back(row);
        }
    }
    rows.insert(rows.end(), extra.begin(), extra.end());
}

json config_to_json(const ExperimentConfig& c) {
    std::vector<std::string> archs;
    for (auto a : c.probe_archs) archs.push_back(to_string(a));
    return json{{"experiment", c.experiment},
                {"grid",
                 {{"n", c.grid.n},
                  {"k", c.grid.k},
                  {"k_fractions", c.grid.k_fractions},
                  {"seeds", c.grid.seeds},
                  {"n_cell", c.grid.n_cell},
                  {"dataset_size", c.grid.dataset_size},
                  {"noise", c.grid.noise}}},
                {"dataset", c.dataset},
                {"extractor", c.extractor},
                {"train", c.train},
                {"decodability", c.decodability.train},
                {"probe", {{"train", c.probe.train}, {"archs", archs}}},
                {"eval_n_cell", c.eval_n_cell},
                {"ingest", {{"matrix", c.ingest.matrix.string()}, {"labels", c.ingest.labels.string()}, {"n", c.ingest.n}}},
                {"seed", c.base_seed}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace

std::string format_row(const ResultRow& row) {
    std::ostringstream wall;
    wall.setf(std::ios::fixed);
    wall.precision(3);
    wall << row.wall_time_s;
    return row.experiment + "," + std::to_string(row.n) + "," + std::to_string(row.k) + "," +
           std::to_string(row.seed) + "," + std::to_string(row.dataset_size) + "," + row.metric + "," +
           format_double(row.value) + "," + wall.str();
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != kResultHeader) fail(ErrorCode::CorruptFile, "'" + path.string() + "' lacks the results header");
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) f.push_back(field);
        if (f.size() != 8) fail(ErrorCode::CorruptFile, "malformed results row: " + line);
        ResultRow r;
        r.experiment = f[0];
        r.n = std::stoi(f[1]);
        r.k = std::stoi(f[2]);
        r.seed = std::stoull(f[3]);
        r.dataset_size = std::stoll(f[4]);
        r.metric = f[5];
        r.value = f[6] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[6]);
        r.wall_time_s = std::stod(f[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

ResultSink::ResultSink(const std::filesystem::path& csv_path) {
    if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
    out_.open(csv_path, std::ios::trunc);
    if (!out_) fail(ErrorCode::Io, "cannot write '" + csv_path.string() + "'");
    out_ << kResultHeader << '\n';
    out_.flush();
}

void ResultSink::append(const std::vector<ResultRow>& rows) {
    const std::lock_guard lock(mutex_);
    for (const auto& row : rows) {
        rows_.push_back(row);
        if (out_.is_open()) out_ << format_row(row) << '\n';
    }
    if (out_.is_open()) out_.flush();
}

std::vector<ResultRow> ResultSink::rows() const {
    const std::lock_guard lock(mutex_);
    return rows_;
}

void run_tasks(const std::vector<std::function<std::vector<ResultRow>()>>& tasks, ResultSink& sink, int threads) {
    if (threads <= 1 || tasks.size() <= 1) {
        for (const auto& task : tasks) sink.append(task());
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                sink.append(tasks[i]());
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = tasks.size();
            }
        }
    };
    std::vector<std::jthread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), tasks.size());
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

PointSeeds point_seeds(std::uint64_t base_seed, std::uint64_t seed, int n, int k, int n_cell) {
    const auto point = [&](std::uint64_t stream) {
        return derive_seed(base_seed, {seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(k),
                                       static_cast<std::uint64_t>(n_cell), stream});
    };
    // the dataset depends on the seed only, so every k and n_cell at one
    // seed draws from the same nuisance stream
    return {derive_seed(base_seed, {seed, 0xDA7AULL}), point(1), point(2)};
}

TrainingPoint run_training_point(const ExperimentConfig& config, int n, int k, int n_cell, std::uint64_t seed) {
    const auto seeds = point_seeds(config.base_seed, seed, n, k, n_cell);
    const NkSplit split = build_nk_split(n, k);
    const DatasetSpec spec = dataset_for(config, n, n_cell, seeds.data);
    const LabeledImageSet train_set = generate(spec, split, SplitTag::Train);
    LabeledImageSet test_set;
    if (k < n) {
        test_set = generate(spec, split, SplitTag::Test);
    } else {
        test_set.n = n;
        test_set.channels = spec.channels();
        test_set.image_size = spec.image_size;
    }
    ExtractorConfig ec = config.extractor;
    ec.init_seed = seeds.init;
    TrainConfig tc = config.train;
    tc.shuffle_seed = seeds.shuffle;

    TrainingPoint p;
    p.model = train(train_set, test_set, ec, tc);
    p.train_samples = static_cast<long long>(train_set.size());
    const auto& hist = p.model.history;
    if (p.model.best_epoch >= 1) {
        p.id_accuracy = hist[static_cast<std::size_t>(p.model.best_epoch - 1)].id_accuracy;
        p.ood_accuracy = hist[static_cast<std::size_t>(p.model.best_epoch - 1)].ood_accuracy;
    }
    p.id_accuracy_last = hist.back().id_accuracy;
    p.ood_accuracy_last = hist.back().ood_accuracy;
    return p;
}

std::vector<ResultRow> prop1_point(int n, std::uint64_t seed, double noise, std::uint64_t base_seed) {
    if (n < 3) fail(ErrorCode::InvalidParameter, "the cyclic k = 2 construction needs n >= 3");
    const auto start = Clock::now();
    const int d = 2 * n + 5;
    Rng rng(derive_seed(base_seed, {0x960F1ULL, static_cast<std::uint64_t>(n), seed}));
    Eigen::MatrixXd u1(n, d);
    Eigen::MatrixXd u2(n, d);
    Eigen::VectorXd mean(d);
    for (Eigen::Index i = 0; i < u1.size(); ++i) u1.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < u2.size(); ++i) u2.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < d; ++i) mean(i) = rng.normal();
    // centred ground truth: each concept's vectors sum to zero
    u1.rowwise() -= u1.colwise().mean();
    u2.rowwise() -= u2.colwise().mean();

    const int k = 2;
    const NkSplit split = build_nk_split(n, k);
    auto sample = [&](Combo c) {
        Eigen::VectorXd v = mean + u1.row(c.c1).transpose() + u2.row(c.c2).transpose();
        if (noise > 0.0)
            for (Eigen::Index i = 0; i < d; ++i) v(i) += noise * rng.normal();
        return v;
    };
    EmbeddingTable train;
    train.n = n;
    train.matrix.resize(static_cast<Eigen::Index>(split.train_combos.size()), d);
    for (std::size_t r = 0; r < split.train_combos.size(); ++r) {
        train.matrix.row(static_cast<Eigen::Index>(r)) = sample(split.train_combos[r]).transpose();
        train.labels_c1.push_back(split.train_combos[r].c1);
        train.labels_c2.push_back(split.train_combos[r].c2);
    }
    const JointSet joints = joint_embeddings(train, split.train_combos);
    const FactoredModel model = recover_from_split(joints, n, k);

    std::vector<Combo> predictions;
    std::vector<int> t1;
    std::vector<int> t2;
    for (const auto& c : split.test_combos) {
        predictions.push_back(classify(model, sample(c)));
        t1.push_back(c.c1);
        t2.push_back(c.c2);
    }
    const auto acc = zero_shot_accuracy(predictions, t1, t2);
    const double err = std::max({(model.u1 - u1).cwiseAbs().maxCoeff(), (model.u2 - u2).cwiseAbs().maxCoeff(),
                                 (model.global_mean - mean).cwiseAbs().maxCoeff()});

    const std::string suffix = noise > 0.0 ? "@sigma=" + format_double(noise) : "";
    RowBuilder rb("prop1", n, k, seed, static_cast<long long>(split.train_combos.size()));
    rb.add("accuracy_c1" + suffix, acc.c1);
    rb.add("accuracy_c2" + suffix, acc.c2);
    rb.add("accuracy" + suffix, acc.mean);
    rb.add("max_recovery_error" + suffix, err);
    rb.add("design_rank" + suffix, model.design_rank);
    return rb.finish(seconds_since(start));
}

Eigen::MatrixXd pca_top2(const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(rows.rows(), 2);
    if (rows.rows() < 2) return coords;
    const Eigen::MatrixXd centred = rows.rowwise() - rows.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(rows.rows() - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::Index d = cov.rows();
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, d); ++c) {
        Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - c);  // eigenvalues ascend
        Eigen::Index top = 0;
        axis.cwiseAbs().maxCoeff(&top);
        if (axis(top) < 0) axis = -axis;  // fixed sign for reproducible output
        coords.col(c) = centred * axis;
    }
    return coords;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, const std::string& config_text) {
    config.validate();
    const auto start = Clock::now();
    std::filesystem::create_directories(config.output_dir);

    EmbeddingTable ingested;
    std::vector<Task> tasks;
    const std::string& e = config.experiment;
    if (e == "prop1") {
        tasks = prop1_tasks(config);
    } else if (e == "diversity_n" || e == "diversity_k") {
        tasks = diversity_tasks(config);
    } else if (e == "scale") {
        tasks = scale_tasks(config);
    } else if (e == "three_phase") {
        tasks = three_phase_tasks(config);
    } else {
        ingested = load_ingested(config);
        tasks = e == "ingest_factorize" ? ingest_factorize_tasks(config, ingested) : ingest_probe_tasks(config, ingested);
    }

    int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    if (config.single_thread) threads = 1;

    ResultSink sink(config.output_dir / "results.csv");
    run_tasks(tasks, sink, threads);
    std::vector<ResultRow> rows = sink.rows();
    if (e == "ingest_probe") {
        const std::size_t before = rows.size();
        append_normalized(rows);
        sink.append(std::vector<ResultRow>(rows.begin() + static_cast<std::ptrdiff_t>(before), rows.end()));
    }

    const json effective = config_to_json(config);
    json manifest{{"experiment", e},
                  {"config_hash", hash_hex(effective.dump())},
                  {"config", effective},
                  {"config_text", config_text},
                  {"seeds", config.grid.seeds},
                  {"base_seed", config.base_seed},
                  {"threads", threads},
                  {"single_thread", config.single_thread},
                  {"versions",
                   {{"compgen", "0.1.0"},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                    {"compiler", __VERSION__},
                    {"cplusplus", __cplusplus}}},
                  {"files", {"results.csv", "summary.json", "manifest.json"}}};
    write_text(config.output_dir / "manifest.json", manifest.dump(2) + "\n");

    json summary = summarize(rows);
    summary["experiment"] = e;
    summary["rows"] = rows.size();
    summary["wall_time_s"] = seconds_since(start);
    write_text(config.output_dir / "summary.json", summary.dump(2) + "\n");
    return rows;
}

json summarize(const std::vector<ResultRow>& rows) {
    struct Acc {
        double sum = 0.0;
        double sq = 0.0;
        int count = 0;
        int nan = 0;
    };
    std::map<std::tuple<std::string, int, int, long long, std::string>, Acc> groups;
    for (const auto& r : rows) {
        auto& a = groups[{r.experiment, r.n, r.k, r.dataset_size, r.metric}];
        if (std::isnan(r.value)) {
            ++a.nan;
            continue;
        }
        a.sum += r.value;
        a.sq += r.value * r.value;
        ++a.count;
    }
    json points = json::array();
    for (const auto& [key, a] : groups) {
        const auto& [experiment, n, k, size, metric] = key;
        const double mean = a.count > 0 ? a.sum / a.count : std::numeric_limits<double>::quiet_NaN();
        const double var = a.count > 1 ? std::max(0.0, (a.sq - a.count * mean * mean) / (a.count - 1)) : 0.0;
        json entry{{"experiment", experiment}, {"n", n},         {"k", k},      {"dataset_size", size},
                   {"metric", metric},         {"count", a.count}, {"nan", a.nan}};
        // json has no NaN; absent means undefined
        if (a.count > 0) {
            entry["mean"] = mean;
            entry["std"] = std::sqrt(var);
        }
        points.push_back(entry);
    }
    return json{{"points", points}};
}

double mean_metric(const std::vector<ResultRow>& rows, const std::string& metric, int n, int k,
                   long long dataset_size) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : rows) {
        if (r.metric != metric || r.n != n || r.k != k) continue;
        if (dataset_size >= 0 && r.dataset_size != dataset_size) continue;
        sum += r.value;
        ++count;
    }
    return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace compgen
