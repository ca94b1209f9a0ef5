#include "compgen/embedding_table.hpp"

#include "compgen/error.hpp"

namespace compgen {

void EmbeddingTable::validate() const {
    const auto s = static_cast<std::size_t>(matrix.rows());
    if (labels_c1.size() != s || labels_c2.size() != s) {
        fail(ErrorCode::RowCountMismatch, "embedding rows (" + std::to_string(s) + ") and labels (" +
                                              std::to_string(labels_c1.size()) + ") disagree");
    }
    if (matrix.cols() < 1) fail(ErrorCode::InvalidInput, "embedding dimension must be >= 1");
    if (n < 1) fail(ErrorCode::InvalidInput, "n must be >= 1");
    for (std::size_t r = 0; r < s; ++r) {
        if (labels_c1[r] < 0 || labels_c1[r] >= n || labels_c2[r] < 0 || labels_c2[r] >= n) {
            fail(ErrorCode::InvalidInput, "label outside [0, n) at row " + std::to_string(r));
        }
    }
}

EmbeddingTable EmbeddingTable::subset(const std::vector<bool>& keep) const {
    EmbeddingTable out;
    out.n = n;
    std::vector<Eigen::Index> rows_kept;
    for (std::size_t r = 0; r < keep.size() && r < labels_c1.size(); ++r)
        if (keep[r]) rows_kept.push_back(static_cast<Eigen::Index>(r));
    out.matrix.resize(static_cast<Eigen::Index>(rows_kept.size()), matrix.cols());
    for (std::size_t i = 0; i < rows_kept.size(); ++i) {
        out.matrix.row(static_cast<Eigen::Index>(i)) = matrix.row(rows_kept[i]);
        out.labels_c1.push_back(labels_c1[static_cast<std::size_t>(rows_kept[i])]);
        out.labels_c2.push_back(labels_c2[static_cast<std::size_t>(rows_kept[i])]);
    }
    return out;
}

}  // namespace compgen
