#include "compgen/probes.hpp"

#include <algorithm>

#include "compgen/error.hpp"

namespace compgen {

std::string to_string(ProbeArch arch) {
    switch (arch) {
        case ProbeArch::Linear: return "linear";
        case ProbeArch::Mlp512: return "mlp_512";
        case ProbeArch::Mlp512x512: return "mlp_512_512";
    }
    return "unknown";
}

ProbeArch parse_probe_arch(const std::string& name) {
    for (auto arch : kAllProbeArchs)
        if (to_string(arch) == name) return arch;
    fail(ErrorCode::InvalidParameter, "unknown probe architecture '" + name + "'");
}

std::vector<int> probe_hidden_sizes(ProbeArch arch) {
    switch (arch) {
        case ProbeArch::Linear: return {};
        case ProbeArch::Mlp512: return {512};
        case ProbeArch::Mlp512x512: return {512, 512};
    }
    return {};
}

namespace {

nn::Mat<float> samples_as_columns(const EmbeddingTable& t) { return t.matrix.transpose().cast<float>(); }

}  // namespace

Probe fit_probe(const EmbeddingTable& train, const ProbeSpec& spec, const EmbeddingTable* eval) {
    train.validate();
    if (train.rows() == 0) fail(ErrorCode::InvalidInput, "empty probe training table");
    const bool has_eval = eval != nullptr && eval->rows() > 0;
    if (has_eval) {
        eval->validate();
        if (eval->n != train.n || eval->dim() != train.dim()) {
            fail(ErrorCode::InvalidInput, "probe evaluation table does not match the training table");
        }
    }

    nn::TwoHeadNet<float> net(static_cast<int>(train.dim()), probe_hidden_sizes(spec.arch), train.n, train.n);
    net.initialize(spec.init_seed);
    const auto x = samples_as_columns(train);
    const auto ex = has_eval ? samples_as_columns(*eval) : nn::Mat<float>(x.rows(), 0);
    const std::vector<int> none;
    auto fit = fit_two_head(std::move(net), x, train.labels_c1, train.labels_c2, ex,
                            has_eval ? std::span<const int>(eval->labels_c1) : std::span<const int>(none),
                            has_eval ? std::span<const int>(eval->labels_c2) : std::span<const int>(none),
                            spec.train);

    Probe probe;
    probe.spec = spec;
    probe.n = train.n;
    probe.net = std::move(fit.net);
    probe.best_epoch = fit.best_epoch;
    probe.history = std::move(fit.history);
    probe.train_accuracy = eval_probe(probe, train);
    return probe;
}

AccuracyPair eval_probe(const Probe& probe, const EmbeddingTable& table) {
    table.validate();
    if (table.n != probe.n || table.dim() != probe.net.input_dim()) {
        fail(ErrorCode::InvalidInput, "table does not match the probe's label or feature space");
    }
    if (table.rows() == 0) fail(ErrorCode::InvalidInput, "empty evaluation table");
    std::vector<int> p1;
    std::vector<int> p2;
    probe.net.predict(samples_as_columns(table), p1, p2);
    std::vector<Combo> predictions(p1.size());
    for (std::size_t r = 0; r < p1.size(); ++r) predictions[r] = {p1[r], p2[r]};
    const auto acc = zero_shot_accuracy(predictions, table.labels_c1, table.labels_c2);
    return {acc.c1, acc.c2};
}

ProbeComparison best_probe(const EmbeddingTable& train, const EmbeddingTable& test, const ProbeSpec& base,
                           std::span<const ProbeArch> archs) {
    if (archs.empty()) fail(ErrorCode::InvalidParameter, "no probe architectures to compare");
    ProbeComparison out;
    double best = -1.0;
    for (auto arch : archs) {
        ProbeSpec spec = base;
        spec.arch = arch;
        spec.train.selection = Selection::Oracle;
        const Probe probe = fit_probe(train, spec, &test);
        const AccuracyPair acc = eval_probe(probe, test);
        out.per_arch.emplace_back(arch, acc);
        if (acc.mean() > best) {
            best = acc.mean();
            out.best_arch = arch;
            out.best = acc;
        }
    }
    return out;
}

std::vector<double> normalize_by_max(std::span<const double> values) {
    if (values.empty()) return {};
    const double top = *std::max_element(values.begin(), values.end());
    if (!(top > 0.0)) fail(ErrorCode::InvalidInput, "cannot normalize by a non-positive maximum");
    std::vector<double> out(values.begin(), values.end());
    for (auto& v : out) v /= top;
    return out;
}

double gradient_check(const ProbeSpec& spec, const EmbeddingTable& batch) {
    batch.validate();
    if (batch.rows() == 0 || batch.rows() > 8) {
        fail(ErrorCode::InvalidParameter, "gradient check expects a batch of 1..8 rows");
    }
    nn::TwoHeadNet<double> net(static_cast<int>(batch.dim()), probe_hidden_sizes(spec.arch), batch.n, batch.n);
    net.initialize(spec.init_seed);
    const nn::Mat<double> x = batch.matrix.transpose();
    return gradient_check(net, x, batch.labels_c1, batch.labels_c2, 24, spec.init_seed);
}

}  // namespace compgen
