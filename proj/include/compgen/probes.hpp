#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "compgen/embedding_table.hpp"
#include "compgen/metrics.hpp"
#include "compgen/nn.hpp"
#include "compgen/trainer.hpp"

namespace compgen {

enum class ProbeArch { Linear, Mlp512, Mlp512x512 };

std::string to_string(ProbeArch arch);
ProbeArch parse_probe_arch(const std::string& name);

/// Hidden widths of the shared probe trunk (empty for linear).
std::vector<int> probe_hidden_sizes(ProbeArch arch);

inline constexpr ProbeArch kAllProbeArchs[] = {ProbeArch::Linear, ProbeArch::Mlp512, ProbeArch::Mlp512x512};

struct ProbeSpec {
    ProbeArch arch = ProbeArch::Linear;
    TrainConfig train{1e-3, 100, 64, Selection::Oracle, 0};
    std::uint64_t init_seed = 0;
};

/// MLP probes share their ReLU hidden layers between the two concept heads;
/// the linear probe is two independent linear maps.
struct Probe {
    ProbeSpec spec;
    int n = 0;
    nn::TwoHeadNet<float> net;
    int best_epoch = 0;
    std::vector<EpochRecord> history;
    AccuracyPair train_accuracy;
};

/// Fits a probe on train. When eval is given and non-empty, Selection::Oracle
/// keeps the epoch with the best eval accuracy; otherwise the best fit accuracy.
Probe fit_probe(const EmbeddingTable& train, const ProbeSpec& spec, const EmbeddingTable* eval = nullptr);

AccuracyPair eval_probe(const Probe& probe, const EmbeddingTable& table);

struct ProbeComparison {
    ProbeArch best_arch = ProbeArch::Linear;
    AccuracyPair best;
    std::vector<std::pair<ProbeArch, AccuracyPair>> per_arch;
};

/// Fits every listed architecture on train with oracle selection on test and
/// keeps the one with the highest mean test accuracy (first listed wins ties).
ProbeComparison best_probe(const EmbeddingTable& train, const EmbeddingTable& test, const ProbeSpec& base,
                           std::span<const ProbeArch> archs = kAllProbeArchs);

/// Divides every value by the maximum, so the best entry becomes exactly 1.
/// Throws invalid-input when the maximum is not positive.
std::vector<double> normalize_by_max(std::span<const double> values);

/// Central-difference gradient check of a probe architecture on a batch of at
/// most 8 embedding rows, in double precision.
double gradient_check(const ProbeSpec& spec, const EmbeddingTable& batch);

}  // namespace compgen
