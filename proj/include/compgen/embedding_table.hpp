#pragma once

#include <vector>

#include <Eigen/Dense>

namespace compgen {

/// Dense sample x dimension feature matrix with both concept labels per row.
struct EmbeddingTable {
    Eigen::MatrixXd matrix;  // rows = samples
    std::vector<int> labels_c1;
    std::vector<int> labels_c2;
    int n = 0;  // values per concept

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index dim() const { return matrix.cols(); }

    /// Throws invalid-input when counts disagree, labels fall outside [0, n), or d < 1.
    void validate() const;

    /// Rows flagged in keep, in original order.
    EmbeddingTable subset(const std::vector<bool>& keep) const;
};

}  // namespace compgen
