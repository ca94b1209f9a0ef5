#include "compgen/metrics.hpp"

#include <cmath>

#include "compgen/error.hpp"

namespace compgen {

double linearity_r2(const EmbeddingTable& table) {
    const FactoredModel model = conditional_vectors(table);
    double residual = 0.0;
    double total = 0.0;
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
        const auto i = table.labels_c1[static_cast<std::size_t>(r)];
        const auto j = table.labels_c2[static_cast<std::size_t>(r)];
        const Eigen::RowVectorXd centred = table.matrix.row(r) - model.global_mean.transpose();
        residual += (centred - model.u1.row(i) - model.u2.row(j)).squaredNorm();
        total += centred.squaredNorm();
    }
    if (!(total > 0.0)) fail(ErrorCode::DegenerateVariance, "embeddings have zero total variance");
    return 1.0 - residual / total;
}

double orthogonality(const FactoredModel& model, bool absolute) {
    const Eigen::Index n1 = model.u1.rows();
    const Eigen::Index n2 = model.u2.rows();
    if (n1 == 0 || n2 == 0) fail(ErrorCode::InvalidInput, "empty factored model");
    Eigen::VectorXd norm1 = model.u1.rowwise().norm();
    Eigen::VectorXd norm2 = model.u2.rowwise().norm();
    if (norm1.minCoeff() == 0.0 || norm2.minCoeff() == 0.0) {
        fail(ErrorCode::DegenerateVector, "zero-norm concept vector");
    }
    const Eigen::MatrixXd dots = model.u1 * model.u2.transpose();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n1; ++i) {
        for (Eigen::Index j = 0; j < n2; ++j) {
            const double c = dots(i, j) / (norm1(i) * norm2(j));
            sum += absolute ? std::abs(c) : c;
        }
    }
    return sum / static_cast<double>(n1 * n2);
}

AccuracyPair decodability(const EmbeddingTable& table, const EmbeddingTable& heldout,
                          const DecodabilityConfig& config) {
    table.validate();
    heldout.validate();
    if (table.n != heldout.n || table.dim() != heldout.dim()) {
        fail(ErrorCode::InvalidInput, "probe and held-out label or feature spaces disagree");
    }
    const int n = table.n;
    std::vector<long long> counts(static_cast<std::size_t>(n) * n, 0);
    for (std::size_t r = 0; r < table.labels_c1.size(); ++r) {
        ++counts[static_cast<std::size_t>(table.labels_c1[r]) * n + table.labels_c2[r]];
    }
    for (auto c : counts) {
        if (c == 0 || c != counts.front()) {
            fail(ErrorCode::BalanceViolation, "decodability probes need a balanced table over all combinations");
        }
    }

    // empty trunk: two independent linear heads, one per concept
    nn::TwoHeadNet<float> probe(static_cast<int>(table.dim()), {}, n, n);
    probe.initialize(config.init_seed);
    const nn::Mat<float> x = table.matrix.transpose().cast<float>();
    const nn::Mat<float> hx = heldout.matrix.transpose().cast<float>();
    const nn::Mat<float> none(x.rows(), 0);
    const auto fit = fit_two_head(probe, x, table.labels_c1, table.labels_c2, none, {}, {}, config.train);

    std::vector<int> p1;
    std::vector<int> p2;
    fit.net.predict(hx, p1, p2);
    std::vector<Combo> predictions(p1.size());
    for (std::size_t r = 0; r < p1.size(); ++r) predictions[r] = {p1[r], p2[r]};
    const auto acc = zero_shot_accuracy(predictions, heldout.labels_c1, heldout.labels_c2);
    return {acc.c1, acc.c2};
}

ZeroShotAccuracy zero_shot_accuracy(std::span<const Combo> predictions, std::span<const int> labels_c1,
                                    std::span<const int> labels_c2) {
    if (predictions.empty()) fail(ErrorCode::InvalidInput, "empty test set");
    if (predictions.size() != labels_c1.size() || predictions.size() != labels_c2.size()) {
        fail(ErrorCode::InvalidInput, "prediction and label counts disagree");
    }
    std::size_t hit1 = 0;
    std::size_t hit2 = 0;
    for (std::size_t r = 0; r < predictions.size(); ++r) {
        hit1 += predictions[r].c1 == labels_c1[r];
        hit2 += predictions[r].c2 == labels_c2[r];
    }
    ZeroShotAccuracy out;
    const auto total = static_cast<double>(predictions.size());
    out.c1 = static_cast<double>(hit1) / total;
    out.c2 = static_cast<double>(hit2) / total;
    out.mean = 0.5 * (out.c1 + out.c2);
    return out;
}

std::vector<std::pair<std::string, double>> MetricReport::named_values() const {
    return {{"zero_shot_acc_c1", zero_shot_acc_c1}, {"zero_shot_acc_c2", zero_shot_acc_c2},
            {"decodability_c1", decodability_c1},   {"decodability_c2", decodability_c2},
            {"linearity_r2", linearity_r2},         {"orthogonality", orthogonality}};
}

}  // namespace compgen
