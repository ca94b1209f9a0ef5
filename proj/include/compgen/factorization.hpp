#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "compgen/concept_space.hpp"
#include "compgen/embedding_table.hpp"

namespace compgen {

/// Per-value concept vectors, all centred by global_mean. Row i of u1 is the
/// vector for first-concept value i (likewise u2).
struct FactoredModel {
    Eigen::VectorXd global_mean;
    Eigen::MatrixXd u1;  // n x d
    Eigen::MatrixXd u2;  // n x d
    int design_rank = 0;
    double residual = 0.0;

    int n() const { return static_cast<int>(u1.rows()); }
    Eigen::Index dim() const { return global_mean.size(); }
};

/// Centred mean embedding of every sample sharing one (c1, c2) pair.
struct JointEmbedding {
    Combo pair;
    Eigen::VectorXd vector;
    int count = 0;
};

struct JointSet {
    std::vector<JointEmbedding> joints;
    Eigen::VectorXd train_mean;
};

/// Conditional means minus the global mean, over a balanced complete grid.
/// Throws balance-violation when any cell is missing or counts differ.
FactoredModel conditional_vectors(const EmbeddingTable& full);

/// Per-combo means centred by the training mean, in the order of combos. The
/// training mean weights every listed combo equally (per-combo, not
/// per-sample), which coincides with the sample mean on balanced data.
/// Throws incomplete-split when a listed combo has no rows.
JointSet joint_embeddings(const EmbeddingTable& train, std::span<const Combo> combos);

/// The (m x 2n) indicator system: row r has a 1 in column i and in column n + j
/// for the r-th combo (i, j).
Eigen::MatrixXd design_matrix(std::span<const Combo> combos, int n);

/// Number of singular values above rel_tol * sigma_max.
int numerical_rank(const Eigen::MatrixXd& a, double rel_tol = 1e-8);

/// True when the bipartite value graph induced by the combos is connected over
/// all 2n values.
bool combos_connected(std::span<const Combo> combos, int n);

/// Solves design_matrix * [U1; U2] = V for all dimensions at once with the
/// minimum-norm least-squares solution (singular values below 1e-8 * sigma_max
/// dropped). The design matrix always annihilates (1..1, -1..-1), so its rank
/// is at most 2n - 1; the minimum-norm solution is the one orthogonal to that
/// direction. global_mean is left at zero.
FactoredModel recover_from_split(std::span<const JointEmbedding> joints, int n, int k);

/// Same, with global_mean set to the joint set's training mean.
FactoredModel recover_from_split(const JointSet& joints, int n, int k);

/// global_mean + u1[i] + u2[j].
Eigen::VectorXd reconstruct(const FactoredModel& model, int i, int j);

enum class ClassifierKind {
    NearestReconstruction,
    Projection,
};

/// Nearest factored reconstruction: argmin over (i, j) of
/// |x - global_mean - u1[i] - u2[j]|^2, ties to the smallest i, then j.
Combo classify(const FactoredModel& model, const Eigen::VectorXd& x);

/// Decomposes x - global_mean into components in span(U1) and span(U2) and
/// assigns each to its nearest concept vector.
class ProjectionClassifier {
public:
    explicit ProjectionClassifier(const FactoredModel& model);
    Combo classify(const Eigen::VectorXd& x) const;

private:
    FactoredModel model_;
    Eigen::MatrixXd basis_pinv_;  // 2n x d
};

/// Classifies every row of a matrix.
std::vector<Combo> classify_rows(const FactoredModel& model, const Eigen::MatrixXd& rows,
                                 ClassifierKind kind = ClassifierKind::NearestReconstruction);

void to_json(nlohmann::json& j, const FactoredModel& m);
void from_json(const nlohmann::json& j, FactoredModel& m);

}  // namespace compgen
