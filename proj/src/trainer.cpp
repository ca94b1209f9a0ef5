#include "compgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "compgen/error.hpp"
#include "compgen/rng.hpp"

namespace compgen {

void ExtractorConfig::validate() const {
    if (feature_dim < 1) fail(ErrorCode::InvalidParameter, "feature_dim must be >= 1");
    for (int w : hidden_sizes)
        if (w < 1) fail(ErrorCode::InvalidParameter, "hidden widths must be >= 1");
}

std::vector<int> ExtractorConfig::trunk_sizes() const {
    auto sizes = hidden_sizes;
    sizes.push_back(feature_dim);
    return sizes;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) fail(ErrorCode::InvalidParameter, "learning_rate must be non-negative");
    if (epochs < 0) fail(ErrorCode::InvalidParameter, "epochs must be >= 0");
    if (batch_size < 1) fail(ErrorCode::InvalidParameter, "batch_size must be >= 1");
}

double mean_head_accuracy(const nn::TwoHeadNet<float>& net, const nn::Mat<float>& x, std::span<const int> y1,
                          std::span<const int> y2) {
    if (x.cols() == 0) return 0.0;
    // chunked so evaluation memory stays bounded on large sets
    constexpr Eigen::Index chunk = 1024;
    std::size_t correct1 = 0;
    std::size_t correct2 = 0;
    std::vector<int> p1;
    std::vector<int> p2;
    for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
        const Eigen::Index len = std::min(chunk, x.cols() - start);
        net.predict(x.middleCols(start, len), p1, p2);
        for (Eigen::Index s = 0; s < len; ++s) {
            const auto idx = static_cast<std::size_t>(start + s);
            correct1 += p1[static_cast<std::size_t>(s)] == y1[idx];
            correct2 += p2[static_cast<std::size_t>(s)] == y2[idx];
        }
    }
    const auto total = static_cast<double>(x.cols());
    return 0.5 * (static_cast<double>(correct1) / total + static_cast<double>(correct2) / total);
}

FitResult fit_two_head(nn::TwoHeadNet<float> net, const nn::Mat<float>& x, std::span<const int> y1,
                       std::span<const int> y2, const nn::Mat<float>& eval_x, std::span<const int> eval_y1,
                       std::span<const int> eval_y2, const TrainConfig& config) {
    config.validate();
    const auto samples = static_cast<std::size_t>(x.cols());
    if (samples == 0) fail(ErrorCode::InvalidInput, "empty training set");
    if (y1.size() != samples || y2.size() != samples) fail(ErrorCode::InvalidInput, "label count mismatch");
    if (static_cast<std::size_t>(eval_x.cols()) != eval_y1.size() || eval_y1.size() != eval_y2.size()) {
        fail(ErrorCode::InvalidInput, "evaluation label count mismatch");
    }
    const bool has_eval = eval_x.cols() > 0;

    FitResult result;
    result.net = net;
    result.best_epoch = 0;
    if (config.epochs == 0) return result;

    nn::Adam<float> adam(net.params(), config.learning_rate);
    std::vector<std::size_t> order(samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<nn::Mat<float>> grads;
    nn::Mat<float> batch_x;
    std::vector<int> batch_y1;
    std::vector<int> batch_y2;
    double best_score = -1.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng rng(derive_seed(config.shuffle_seed, {static_cast<std::uint64_t>(epoch)}));
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < samples; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t len = std::min(static_cast<std::size_t>(config.batch_size), samples - start);
            batch_x.resize(x.rows(), static_cast<Eigen::Index>(len));
            batch_y1.resize(len);
            batch_y2.resize(len);
            for (std::size_t b = 0; b < len; ++b) {
                const std::size_t src = order[start + b];
                batch_x.col(static_cast<Eigen::Index>(b)) = x.col(static_cast<Eigen::Index>(src));
                batch_y1[b] = y1[src];
                batch_y2[b] = y2[src];
            }
            const float loss = net.loss(batch_x, batch_y1, batch_y2, &grads);
            if (!std::isfinite(loss)) {
                throw TrainingDivergedError(epoch, "non-finite loss at epoch " + std::to_string(epoch));
            }
            adam.step(net.params(), grads);
            loss_sum += loss;
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / static_cast<double>(batches);
        rec.id_accuracy = mean_head_accuracy(net, x, y1, y2);
        rec.ood_accuracy = has_eval ? mean_head_accuracy(net, eval_x, eval_y1, eval_y2) : 0.0;
        result.history.push_back(rec);

        const double score = has_eval ? rec.ood_accuracy : rec.id_accuracy;
        if (config.selection == Selection::Oracle && score > best_score) {
            best_score = score;
            result.best_epoch = epoch;
            result.net = net;
        }
    }
    if (config.selection == Selection::Last) {
        result.best_epoch = config.epochs;
        result.net = std::move(net);
    }
    return result;
}

nn::Mat<float> to_matrix(const LabeledImageSet& images) {
    const auto ppi = static_cast<Eigen::Index>(images.pixels_per_image());
    const auto count = static_cast<Eigen::Index>(images.size());
    if (count == 0) return nn::Mat<float>(ppi, 0);
    return Eigen::Map<const nn::Mat<float>>(images.pixels.data(), ppi, count);
}

TrainedModel train(const LabeledImageSet& train_set, const LabeledImageSet& test_set, const ExtractorConfig& ec,
                   const TrainConfig& tc) {
    ec.validate();
    tc.validate();
    if (tc.epochs < 1) fail(ErrorCode::InvalidParameter, "epochs must be >= 1");
    if (train_set.size() == 0) fail(ErrorCode::InvalidInput, "empty training set");
    if (test_set.size() > 0 &&
        (test_set.n != train_set.n || test_set.pixels_per_image() != train_set.pixels_per_image())) {
        fail(ErrorCode::InvalidInput, "train and test label or image spaces disagree");
    }
    TrainedModel model;
    model.extractor = ec;
    model.train_config = tc;
    model.n = train_set.n;
    model.input_dim = train_set.pixels_per_image();

    nn::TwoHeadNet<float> net(model.input_dim, ec.trunk_sizes(), model.n, model.n);
    net.initialize(ec.init_seed);

    const auto x = to_matrix(train_set);
    const auto tx = to_matrix(test_set);
    auto fit = fit_two_head(std::move(net), x, train_set.labels_c1, train_set.labels_c2, tx, test_set.labels_c1,
                            test_set.labels_c2, tc);
    model.net = std::move(fit.net);
    model.best_epoch = fit.best_epoch;
    model.history = std::move(fit.history);
    return model;
}

EmbeddingTable embed(const TrainedModel& model, const LabeledImageSet& images) {
    if (images.pixels_per_image() != model.input_dim) {
        fail(ErrorCode::InvalidInput, "image shape does not match the trained model");
    }
    EmbeddingTable table;
    table.n = model.n;
    table.labels_c1 = images.labels_c1;
    table.labels_c2 = images.labels_c2;
    const auto x = to_matrix(images);
    table.matrix.resize(x.cols(), model.net.feature_dim());
    constexpr Eigen::Index chunk = 1024;
    for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
        const Eigen::Index len = std::min(chunk, x.cols() - start);
        table.matrix.middleRows(start, len) =
            model.net.features(x.middleCols(start, len)).transpose().cast<double>();
    }
    return table;
}

double gradient_check(const nn::TwoHeadNet<double>& net, const nn::Mat<double>& x, std::span<const int> y1,
                      std::span<const int> y2, int per_tensor, std::uint64_t seed) {
    constexpr double step = 1e-5;
    std::vector<nn::Mat<double>> grads;
    net.loss(x, y1, y2, &grads);
    auto probe = net;
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < probe.params().size(); ++t) {
        auto& tensor = probe.params()[t];
        const auto size = static_cast<std::uint64_t>(tensor.size());
        const auto picks = std::min<std::uint64_t>(size, static_cast<std::uint64_t>(per_tensor));
        for (std::uint64_t p = 0; p < picks; ++p) {
            const auto idx = static_cast<Eigen::Index>(picks == size ? p : rng.below(size));
            double& w = tensor.data()[idx];
            const double saved = w;
            w = saved + step;
            const double plus = probe.loss(x, y1, y2);
            w = saved - step;
            const double minus = probe.loss(x, y1, y2);
            w = saved;
            const double numeric = (plus - minus) / (2.0 * step);
            const double analytic = grads[t].data()[idx];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

double gradient_check(const ExtractorConfig& ec, const LabeledImageSet& probe_batch) {
    ec.validate();
    if (probe_batch.size() == 0 || probe_batch.size() > 8) {
        fail(ErrorCode::InvalidParameter, "gradient check expects a batch of 1..8 samples");
    }
    nn::TwoHeadNet<double> net(probe_batch.pixels_per_image(), ec.trunk_sizes(), probe_batch.n, probe_batch.n);
    net.initialize(ec.init_seed);
    const nn::Mat<double> x = to_matrix(probe_batch).cast<double>();
    return gradient_check(net, x, probe_batch.labels_c1, probe_batch.labels_c2, 24, ec.init_seed);
}

}  // namespace compgen
