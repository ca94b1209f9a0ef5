#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <toml.hpp>

#include "compgen/error.hpp"
#include "compgen/experiments.hpp"
#include "compgen/io.hpp"

namespace compgen {

namespace {

std::vector<std::uint64_t> seed_range(std::uint64_t count) {
    std::vector<std::uint64_t> seeds(count);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
    return seeds;
}

[[noreturn]] void bad_key(const std::string& source, const std::string& key, const std::string& expected) {
    fail(ErrorCode::InvalidParameter, source + ": '" + key + "' must be " + expected);
}

class Reader {
public:
    Reader(const toml::table& root, std::string source) : root_(root), source_(std::move(source)) {}

    const toml::node* find(const std::string& path) const { return root_.at_path(path).node(); }

    template <typename T>
    void scalar(const std::string& path, T& out) const {
        const toml::node* node = find(path);
        if (node == nullptr) return;
        if constexpr (std::is_same_v<T, std::string>) {
            if (!node->is_string()) bad_key(source_, path, "a string");
            out = *node->value<std::string>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!node->is_boolean()) bad_key(source_, path, "a boolean");
            out = *node->value<bool>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!node->is_number()) bad_key(source_, path, "a number");
            out = static_cast<T>(*node->value<double>());
        } else {
            if (!node->is_integer()) bad_key(source_, path, "an integer");
            const auto v = *node->value<std::int64_t>();
            if constexpr (std::is_unsigned_v<T>) {
                if (v < 0) bad_key(source_, path, "non-negative");
            }
            out = static_cast<T>(v);
        }
    }

    template <typename T>
    void list(const std::string& path, std::vector<T>& out) const {
        const toml::node* node = find(path);
        if (node == nullptr) return;
        const toml::array* arr = node->as_array();
        if (arr == nullptr) bad_key(source_, path, "an array");
        std::vector<T> values;
        for (const auto& item : *arr) {
            if constexpr (std::is_same_v<T, std::string>) {
                if (!item.is_string()) bad_key(source_, path, "an array of strings");
                values.push_back(*item.value<std::string>());
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!item.is_number()) bad_key(source_, path, "an array of numbers");
                values.push_back(static_cast<T>(*item.value<double>()));
            } else {
                if (!item.is_integer()) bad_key(source_, path, "an array of integers");
                const auto v = *item.value<std::int64_t>();
                if (std::is_unsigned_v<T> && v < 0) bad_key(source_, path, "non-negative");
                values.push_back(static_cast<T>(v));
            }
        }
        out = std::move(values);
    }

    void train(const std::string& prefix, TrainConfig& tc) const {
        scalar(prefix + ".learning_rate", tc.learning_rate);
        scalar(prefix + ".epochs", tc.epochs);
        scalar(prefix + ".batch_size", tc.batch_size);
        std::string selection;
        scalar(prefix + ".selection", selection);
        if (!selection.empty()) tc.selection = parse_selection(selection);
    }

    const std::string& source() const { return source_; }

private:
    const toml::table& root_;
    std::string source_;
};

}  // namespace

bool is_known_experiment(const std::string& name) {
    return std::find(std::begin(kExperimentNames), std::end(kExperimentNames), name) != std::end(kExperimentNames);
}

int k_from_fraction(double fraction, int n) {
    const int k = static_cast<int>(std::floor(fraction * n + 0.5));
    return std::clamp(k, 1, n);
}

void ExperimentConfig::validate() const {
    if (!is_known_experiment(experiment)) fail(ErrorCode::InvalidParameter, "unknown experiment '" + experiment + "'");
    if (grid.seeds.empty()) fail(ErrorCode::InvalidParameter, "grid.seeds must not be empty");
    extractor.validate();
    train.validate();
    if (train.epochs < 1) fail(ErrorCode::InvalidParameter, "train.epochs must be >= 1");
    if (eval_n_cell < 1) fail(ErrorCode::InvalidParameter, "eval.n_cell must be >= 1");
    auto need = [&](bool ok, const char* what) {
        if (!ok) fail(ErrorCode::InvalidParameter, std::string(experiment) + ": " + what);
    };
    auto all_n = [&](int lo) {
        need(!grid.n.empty(), "grid.n must not be empty");
        for (int n : grid.n) need(n >= lo, "grid.n values too small");
    };
    if (experiment == "prop1") {
        all_n(2);
        for (double s : grid.noise) need(s >= 0.0, "grid.noise must be >= 0");
    } else if (experiment == "diversity_n") {
        all_n(2);
        need(!grid.dataset_size.empty() && grid.dataset_size.front() >= 1, "grid.dataset_size must be set");
    } else if (experiment == "diversity_k") {
        all_n(2);
        need(!grid.k.empty(), "grid.k must not be empty");
        for (int k : grid.k) need(k >= 1 && k < grid.n.front(), "grid.k values must lie in [1, n)");
        need(!grid.dataset_size.empty() && grid.dataset_size.front() >= 1, "grid.dataset_size must be set");
    } else if (experiment == "scale") {
        all_n(2);
        need(!grid.k.empty() && grid.k.front() >= 1 && grid.k.front() < grid.n.front(), "grid.k must lie in [1, n)");
        need(!grid.n_cell.empty(), "grid.n_cell must not be empty");
        for (int c : grid.n_cell) need(c >= 1, "grid.n_cell values must be >= 1");
    } else if (experiment == "three_phase") {
        all_n(2);
        need(!grid.k_fractions.empty(), "grid.k_fractions must not be empty");
        for (double f : grid.k_fractions) need(f > 0.0 && f <= 1.0, "grid.k_fractions must lie in (0, 1]");
        need(!grid.n_cell.empty() && grid.n_cell.front() >= 1, "grid.n_cell must be set");
    } else {
        need(!ingest.matrix.empty() && !ingest.labels.empty(), "ingest.matrix and ingest.labels are required");
        need(!grid.k.empty(), "grid.k must not be empty");
        for (int k : grid.k) need(k >= 1, "grid.k values must be >= 1");
        if (experiment == "ingest_probe") need(!probe_archs.empty(), "probe.archs must not be empty");
    }
}

ExperimentConfig default_config(const std::string& experiment) {
    if (!is_known_experiment(experiment)) fail(ErrorCode::InvalidParameter, "unknown experiment '" + experiment + "'");
    ExperimentConfig c;
    c.experiment = experiment;
    c.output_dir = std::filesystem::path("runs") / experiment;
    c.dataset.family = DatasetFamily::SpriteGlyph;
    c.dataset.image_size = 16;
    c.dataset.concept_spec = {"glyphs", 0, 0, {{"position", 9}, {"scale", 3}}};
    c.extractor.hidden_sizes = {128, 128};
    c.extractor.feature_dim = 32;
    c.train = {1e-3, 50, 64, Selection::Oracle, 0};
    c.grid.seeds = seed_range(5);
    if (experiment == "prop1") {
        c.grid.n = {3, 4, 5, 6, 7, 8, 9, 10};
        c.grid.seeds = seed_range(10);
    } else if (experiment == "diversity_n") {
        c.grid.n = {3, 4, 6, 8, 10};
        c.grid.dataset_size = {2520};
    } else if (experiment == "diversity_k") {
        c.grid.n = {10};
        c.grid.k = {1, 3, 5, 7, 9};
        c.grid.dataset_size = {3150};
    } else if (experiment == "scale") {
        c.grid.n = {3};
        c.grid.k = {1};
        c.grid.n_cell = {50, 100, 200};
    } else if (experiment == "three_phase") {
        c.grid.n = {10};
        c.grid.k_fractions = {0.1, 0.25, 0.5, 0.75, 0.9};
        c.grid.n_cell = {50};
    } else {
        c.grid.k = {2};
        c.grid.seeds = {0};
    }
    return c;
}

ExperimentConfig parse_config(const std::string& toml_text, const std::string& source) {
    toml::table root;
    try {
        root = toml::parse(toml_text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ":" << e.source().begin.line << ": " << e.description();
        fail(ErrorCode::InvalidParameter, msg.str());
    }
    const Reader r(root, source);
    std::string experiment;
    r.scalar("experiment", experiment);
    if (experiment.empty()) fail(ErrorCode::InvalidParameter, source + ": 'experiment' is required");
    ExperimentConfig c = default_config(experiment);

    std::string out_dir;
    r.scalar("output_dir", out_dir);
    if (!out_dir.empty()) c.output_dir = out_dir;
    r.scalar("seed", c.base_seed);
    r.scalar("single_thread", c.single_thread);
    r.scalar("threads", c.threads);

    r.list("grid.n", c.grid.n);
    r.list("grid.k", c.grid.k);
    r.list("grid.k_fractions", c.grid.k_fractions);
    r.list("grid.seeds", c.grid.seeds);
    r.list("grid.n_cell", c.grid.n_cell);
    r.list("grid.dataset_size", c.grid.dataset_size);
    r.list("grid.noise", c.grid.noise);

    std::string family;
    r.scalar("dataset.family", family);
    if (!family.empty()) c.dataset.family = parse_family(family);
    r.scalar("dataset.image_size", c.dataset.image_size);
    r.scalar("dataset.cardinality_c1", c.dataset.concept_spec.cardinality_c1);
    r.scalar("dataset.cardinality_c2", c.dataset.concept_spec.cardinality_c2);
    if (const toml::node* node = r.find("dataset.nuisance")) {
        const toml::array* arr = node->as_array();
        if (arr == nullptr) bad_key(source, "dataset.nuisance", "an array of {name, cardinality} tables");
        c.dataset.concept_spec.nuisance_dims.clear();
        for (const auto& item : *arr) {
            const toml::table* t = item.as_table();
            if (t == nullptr || !(*t)["name"].is_string() || !(*t)["cardinality"].is_integer()) {
                bad_key(source, "dataset.nuisance", "an array of {name, cardinality} tables");
            }
            c.dataset.concept_spec.nuisance_dims.push_back(
                {*(*t)["name"].value<std::string>(), static_cast<int>(*(*t)["cardinality"].value<std::int64_t>())});
        }
    }

    r.list("extractor.hidden_sizes", c.extractor.hidden_sizes);
    r.scalar("extractor.feature_dim", c.extractor.feature_dim);
    r.train("train", c.train);
    r.train("decodability", c.decodability.train);
    r.train("probe", c.probe.train);
    std::vector<std::string> archs;
    r.list("probe.archs", archs);
    if (!archs.empty()) {
        c.probe_archs.clear();
        for (const auto& a : archs) c.probe_archs.push_back(parse_probe_arch(a));
    }
    r.scalar("eval.n_cell", c.eval_n_cell);

    std::string path;
    r.scalar("ingest.matrix", path);
    if (!path.empty()) c.ingest.matrix = path;
    path.clear();
    r.scalar("ingest.labels", path);
    if (!path.empty()) c.ingest.labels = path;
    r.scalar("ingest.n", c.ingest.n);

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open config '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    auto config = parse_config(text.str(), path.string());
    // relative ingest paths resolve against the config file's directory
    const auto base = path.parent_path();
    if (!config.ingest.matrix.empty() && config.ingest.matrix.is_relative()) config.ingest.matrix = base / config.ingest.matrix;
    if (!config.ingest.labels.empty() && config.ingest.labels.is_relative()) config.ingest.labels = base / config.ingest.labels;
    return config;
}

std::string hash_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
}

}  // namespace compgen
