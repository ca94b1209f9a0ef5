#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "compgen/metrics.hpp"
#include "compgen/probes.hpp"
#include "compgen/synth_data.hpp"
#include "compgen/trainer.hpp"

namespace compgen {

inline constexpr const char* kExperimentNames[] = {"prop1",        "diversity_n",      "diversity_k", "scale",
                                                   "three_phase", "ingest_factorize", "ingest_probe"};

bool is_known_experiment(const std::string& name);

/// Grid axes. Which ones an experiment reads:
///   prop1         n, seeds, noise
///   diversity_n   n (k = n - 1), seeds, dataset_size (total training images)
///   diversity_k   n (first entry), k, seeds, dataset_size
///   scale         n, k (first entries), seeds, n_cell (one run per entry)
///   three_phase   n (first entry), k_fractions, seeds, n_cell (first entry)
///   ingest_*      k, seeds
struct GridConfig {
    std::vector<int> n;
    std::vector<int> k;
    std::vector<double> k_fractions;
    std::vector<std::uint64_t> seeds{0};
    std::vector<int> n_cell;
    std::vector<int> dataset_size;
    std::vector<double> noise{0.0};
};

struct IngestConfig {
    std::filesystem::path matrix;
    std::filesystem::path labels;
    int n = 0;  // 0 infers from the labels
};

struct ExperimentConfig {
    std::string experiment;
    GridConfig grid;
    /// n_cell and seed are overwritten per grid point; concept cardinalities of
    /// 0 mean "equal to the grid point's n".
    DatasetSpec dataset;
    ExtractorConfig extractor;
    TrainConfig train;
    DecodabilityConfig decodability;
    ProbeSpec probe;
    std::vector<ProbeArch> probe_archs{std::begin(kAllProbeArchs), std::end(kAllProbeArchs)};
    int eval_n_cell = 20;  // samples per combination for structure metrics
    IngestConfig ingest;
    std::filesystem::path output_dir = "runs";
    std::uint64_t base_seed = 0;
    bool single_thread = false;
    int threads = 0;  // 0 = hardware concurrency

    void validate() const;
};

/// Desk-scale defaults for an experiment.
ExperimentConfig default_config(const std::string& experiment);

/// Parses TOML. Keys absent from the document keep the experiment's defaults.
ExperimentConfig parse_config(const std::string& toml_text, const std::string& source = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Stable 64-bit FNV-1a hash, hex encoded.
std::string hash_hex(const std::string& text);

/// Round-half-up of fraction * n, clamped to [1, n].
int k_from_fraction(double fraction, int n);

struct ResultRow {
    std::string experiment;
    int n = 0;
    int k = 0;
    std::uint64_t seed = 0;
    long long dataset_size = 0;
    std::string metric;
    double value = 0.0;
    double wall_time_s = 0.0;
};

inline constexpr const char* kResultHeader = "experiment,n,k,seed,dataset_size,metric,value,wall_time_s";

std::string format_row(const ResultRow& row);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// Thread-safe, append-only collector that mirrors every row to a CSV file
/// when a path is given.
class ResultSink {
public:
    ResultSink() = default;
    explicit ResultSink(const std::filesystem::path& csv_path);

    void append(const std::vector<ResultRow>& rows);
    std::vector<ResultRow> rows() const;

private:
    mutable std::mutex mutex_;
    std::ofstream out_;
    std::vector<ResultRow> rows_;
};

/// Runs tasks on a pool of worker threads (or inline when threads <= 1), each
/// task's rows reaching the sink as one block. Inline execution keeps task order.
void run_tasks(const std::vector<std::function<std::vector<ResultRow>()>>& tasks, ResultSink& sink, int threads);

/// Seeds of one grid point: dataset, initialisation and shuffling.
struct PointSeeds {
    std::uint64_t data;
    std::uint64_t init;
    std::uint64_t shuffle;
};

PointSeeds point_seeds(std::uint64_t base_seed, std::uint64_t seed, int n, int k, int n_cell);

/// Everything one from-scratch training point produces.
struct TrainingPoint {
    TrainedModel model;
    double id_accuracy = 0.0;   // selected checkpoint
    double ood_accuracy = 0.0;  // selected checkpoint, 0 when k = n
    double id_accuracy_last = 0.0;
    double ood_accuracy_last = 0.0;
    long long train_samples = 0;
};

TrainingPoint run_training_point(const ExperimentConfig& config, int n, int k, int n_cell, std::uint64_t seed);

/// Noiseless (or noisy) factored ground truth, cyclic k = 2 joints, recovery and
/// classification of every unseen combination. Metrics: accuracy_c1,
/// accuracy_c2, accuracy, max_recovery_error, design_rank.
std::vector<ResultRow> prop1_point(int n, std::uint64_t seed, double noise, std::uint64_t base_seed = 0);

/// Top-2 principal-component coordinates of the rows (exact covariance
/// eigendecomposition), one row per sample.
Eigen::MatrixXd pca_top2(const Eigen::MatrixXd& rows);

/// Runs the configured experiment, writing results.csv, summary.json and
/// manifest.json (plus pca/ files for three_phase) into output_dir.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config, const std::string& config_text = {});

/// Per (experiment, n, k, dataset_size, metric): mean, std and count over seeds.
nlohmann::json summarize(const std::vector<ResultRow>& rows);

/// Mean of a metric over seeds at one grid point; NaN when absent.
double mean_metric(const std::vector<ResultRow>& rows, const std::string& metric, int n, int k,
                   long long dataset_size = -1);

}  // namespace compgen
