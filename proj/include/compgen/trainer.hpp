#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "compgen/embedding_table.hpp"
#include "compgen/nn.hpp"
#include "compgen/synth_data.hpp"

namespace compgen {

/// MLP backbone over flattened pixels. Every layer (including the feature
/// layer) is followed by ReLU.
struct ExtractorConfig {
    std::vector<int> hidden_sizes{256, 256};
    int feature_dim = 64;
    std::uint64_t init_seed = 0;

    void validate() const;
    std::vector<int> trunk_sizes() const;
};

enum class Selection { Oracle, Last };

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the summed cross-entropy of both heads.
struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 100;
    int batch_size = 64;
    Selection selection = Selection::Oracle;
    std::uint64_t shuffle_seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;             // 1-based
    double id_accuracy = 0.0;  // mean of both heads on the fit data
    double ood_accuracy = 0.0; // mean of both heads on the evaluation data (0 when absent)
    double loss = 0.0;         // mean training loss over the epoch's batches
};

/// Result of the shared optimisation loop.
struct FitResult {
    nn::TwoHeadNet<float> net;
    int best_epoch = 0;  // 0 = initial weights
    std::vector<EpochRecord> history;
};

/// Samples are the columns of x. With Selection::Oracle the returned weights
/// are those of the epoch maximising the evaluation accuracy (the fit accuracy
/// when the evaluation set is empty); earliest epoch wins ties. epochs = 0
/// returns the initial weights untouched.
FitResult fit_two_head(nn::TwoHeadNet<float> net, const nn::Mat<float>& x, std::span<const int> y1,
                       std::span<const int> y2, const nn::Mat<float>& eval_x, std::span<const int> eval_y1,
                       std::span<const int> eval_y2, const TrainConfig& config);

/// Mean of both heads' accuracies.
double mean_head_accuracy(const nn::TwoHeadNet<float>& net, const nn::Mat<float>& x, std::span<const int> y1,
                          std::span<const int> y2);

struct TrainedModel {
    ExtractorConfig extractor;
    TrainConfig train_config;
    int n = 0;
    int input_dim = 0;
    nn::TwoHeadNet<float> net;
    int best_epoch = 0;
    std::vector<EpochRecord> history;
};

/// Images as a (pixels x samples) matrix.
nn::Mat<float> to_matrix(const LabeledImageSet& images);

/// Trains the backbone and both heads from scratch. The test set may be empty.
TrainedModel train(const LabeledImageSet& train_set, const LabeledImageSet& test_set, const ExtractorConfig& ec,
                   const TrainConfig& tc);

/// Backbone features (before the heads), one row per image.
EmbeddingTable embed(const TrainedModel& model, const LabeledImageSet& images);

/// Max relative error |analytic - central difference| / max(|a|, |cd|, 1e-8)
/// over a seeded sample of parameters (up to per_tensor entries per tensor),
/// in double precision with step 1e-5.
double gradient_check(const nn::TwoHeadNet<double>& net, const nn::Mat<double>& x, std::span<const int> y1,
                      std::span<const int> y2, int per_tensor = 24, std::uint64_t seed = 0);

/// Checks the extractor described by ec (with fresh two heads of width n)
/// on a batch of at most 8 images.
double gradient_check(const ExtractorConfig& ec, const LabeledImageSet& probe_batch);

}  // namespace compgen
