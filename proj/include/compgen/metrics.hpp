#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "compgen/embedding_table.hpp"
#include "compgen/factorization.hpp"
#include "compgen/trainer.hpp"

namespace compgen {

struct AccuracyPair {
    double c1 = 0.0;
    double c2 = 0.0;

    double mean() const { return 0.5 * (c1 + c2); }
};

struct ZeroShotAccuracy {
    double c1 = 0.0;
    double c2 = 0.0;
    double mean = 0.0;
};

/// Fraction of the embedding variance explained by the additive model
/// global_mean + u1[c1] + u2[c2], with vectors from conditional_vectors.
/// Throws degenerate-variance when all embeddings coincide.
double linearity_r2(const EmbeddingTable& table);

/// Mean signed cosine between every (u1[i], u2[j]) pair; with absolute = true
/// the mean of |cos|. Throws degenerate-vector on a zero-norm concept vector.
double orthogonality(const FactoredModel& model, bool absolute = false);

struct DecodabilityConfig {
    TrainConfig train{1e-3, 100, 64, Selection::Last, 0};
    std::uint64_t init_seed = 0;
};

/// Fits one linear probe per concept on table (balanced over all combos) and
/// reports their accuracy on heldout.
AccuracyPair decodability(const EmbeddingTable& table, const EmbeddingTable& heldout,
                          const DecodabilityConfig& config = {});

/// Per-concept and mean accuracy of predictions against labels.
ZeroShotAccuracy zero_shot_accuracy(std::span<const Combo> predictions, std::span<const int> labels_c1,
                                    std::span<const int> labels_c2);

/// Applies predict(row_vector) -> Combo to every row of a test table.
template <typename Predict>
ZeroShotAccuracy zero_shot_accuracy(Predict&& predict, const EmbeddingTable& test) {
    std::vector<Combo> predictions;
    predictions.reserve(static_cast<std::size_t>(test.rows()));
    for (Eigen::Index r = 0; r < test.rows(); ++r) {
        predictions.push_back(predict(Eigen::VectorXd(test.matrix.row(r).transpose())));
    }
    return zero_shot_accuracy(predictions, test.labels_c1, test.labels_c2);
}

struct MetricReport {
    double zero_shot_acc_c1 = 0.0;
    double zero_shot_acc_c2 = 0.0;
    double decodability_c1 = 0.0;
    double decodability_c2 = 0.0;
    double linearity_r2 = 0.0;
    double orthogonality = 0.0;

    int n = 0;
    int k = 0;
    std::uint64_t seed = 0;
    std::string dataset_family;

    /// (metric name, value) pairs in a fixed order.
    std::vector<std::pair<std::string, double>> named_values() const;
};

}  // namespace compgen
