#include "compgen/factorization.hpp"

#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "compgen/error.hpp"

namespace compgen {

namespace {

void check_square_grid_counts(const std::vector<long long>& counts, int n) {
    const long long expected = counts.front();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            fail(ErrorCode::BalanceViolation, "missing combination (" + std::to_string(c / n) + "," +
                                                  std::to_string(c % n) + ") in a full-grid estimate");
        }
        if (counts[c] != expected) fail(ErrorCode::BalanceViolation, "unequal samples per combination");
    }
}

int find_root(std::vector<int>& parent, int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

}  // namespace

FactoredModel conditional_vectors(const EmbeddingTable& full) {
    full.validate();
    const int n = full.n;
    const Eigen::Index d = full.dim();
    std::vector<long long> counts(static_cast<std::size_t>(n) * n, 0);
    for (std::size_t r = 0; r < full.labels_c1.size(); ++r) {
        ++counts[static_cast<std::size_t>(full.labels_c1[r]) * n + full.labels_c2[r]];
    }
    check_square_grid_counts(counts, n);

    FactoredModel model;
    model.global_mean = full.matrix.colwise().mean().transpose();
    model.u1 = Eigen::MatrixXd::Zero(n, d);
    model.u2 = Eigen::MatrixXd::Zero(n, d);
    std::vector<long long> count1(static_cast<std::size_t>(n), 0);
    std::vector<long long> count2(static_cast<std::size_t>(n), 0);
    for (Eigen::Index r = 0; r < full.rows(); ++r) {
        const auto i = full.labels_c1[static_cast<std::size_t>(r)];
        const auto j = full.labels_c2[static_cast<std::size_t>(r)];
        const auto centred = full.matrix.row(r) - model.global_mean.transpose();
        model.u1.row(i) += centred;
        model.u2.row(j) += centred;
        ++count1[static_cast<std::size_t>(i)];
        ++count2[static_cast<std::size_t>(j)];
    }
    for (int i = 0; i < n; ++i) {
        model.u1.row(i) /= static_cast<double>(count1[static_cast<std::size_t>(i)]);
        model.u2.row(i) /= static_cast<double>(count2[static_cast<std::size_t>(i)]);
    }
    model.design_rank = 2 * n - 1;
    return model;
}

JointSet joint_embeddings(const EmbeddingTable& train, std::span<const Combo> combos) {
    train.validate();
    const int n = train.n;
    const Eigen::Index d = train.dim();
    // cell index -> position in combos
    std::vector<int> slot(static_cast<std::size_t>(n) * n, -1);
    JointSet out;
    out.joints.resize(combos.size());
    for (std::size_t c = 0; c < combos.size(); ++c) {
        const auto& combo = combos[c];
        if (combo.c1 < 0 || combo.c1 >= n || combo.c2 < 0 || combo.c2 >= n) {
            fail(ErrorCode::IndexOutOfRange, "combo outside [0, n)");
        }
        slot[static_cast<std::size_t>(combo.c1) * n + combo.c2] = static_cast<int>(c);
        out.joints[c].pair = combo;
        out.joints[c].vector = Eigen::VectorXd::Zero(d);
    }
    for (Eigen::Index r = 0; r < train.rows(); ++r) {
        const int s = slot[static_cast<std::size_t>(train.labels_c1[static_cast<std::size_t>(r)]) * n +
                           train.labels_c2[static_cast<std::size_t>(r)]];
        if (s < 0) continue;
        out.joints[static_cast<std::size_t>(s)].vector += train.matrix.row(r).transpose();
        ++out.joints[static_cast<std::size_t>(s)].count;
    }
    out.train_mean = Eigen::VectorXd::Zero(d);
    for (auto& joint : out.joints) {
        if (joint.count == 0) {
            fail(ErrorCode::IncompleteSplit, "no samples for combination (" + std::to_string(joint.pair.c1) + "," +
                                                 std::to_string(joint.pair.c2) + ")");
        }
        joint.vector /= static_cast<double>(joint.count);
        out.train_mean += joint.vector;
    }
    if (!out.joints.empty()) out.train_mean /= static_cast<double>(out.joints.size());
    for (auto& joint : out.joints) joint.vector -= out.train_mean;
    return out;
}

Eigen::MatrixXd design_matrix(std::span<const Combo> combos, int n) {
    if (n < 1) fail(ErrorCode::InvalidParameter, "n must be >= 1");
    for (const auto& c : combos) {
        if (c.c1 < 0 || c.c1 >= n || c.c2 < 0 || c.c2 >= n) fail(ErrorCode::IndexOutOfRange, "combo outside [0, n)");
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(combos.size()), 2 * n);
    for (std::size_t r = 0; r < combos.size(); ++r) {
        a(static_cast<Eigen::Index>(r), combos[r].c1) = 1.0;
        a(static_cast<Eigen::Index>(r), n + combos[r].c2) = 1.0;
    }
    return a;
}

int numerical_rank(const Eigen::MatrixXd& a, double rel_tol) {
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * sv(0)) ++rank;
    return rank;
}

bool combos_connected(std::span<const Combo> combos, int n) {
    if (n < 1) fail(ErrorCode::InvalidParameter, "n must be >= 1");
    for (const auto& c : combos) {
        if (c.c1 < 0 || c.c1 >= n || c.c2 < 0 || c.c2 >= n) fail(ErrorCode::IndexOutOfRange, "combo outside [0, n)");
    }
    std::vector<int> parent(static_cast<std::size_t>(2 * n));
    std::iota(parent.begin(), parent.end(), 0);
    for (const auto& c : combos) {
        const int a = find_root(parent, c.c1);
        const int b = find_root(parent, n + c.c2);
        parent[static_cast<std::size_t>(a)] = b;
    }
    const int root = find_root(parent, 0);
    for (int v = 1; v < 2 * n; ++v)
        if (find_root(parent, v) != root) return false;
    return true;
}

FactoredModel recover_from_split(std::span<const JointEmbedding> joints, int n, int k) {
    if (k < 2) fail(ErrorCode::InsufficientCombinations, "recovery needs k >= 2 combinations per value");
    if (n < 1 || joints.empty()) fail(ErrorCode::InvalidParameter, "no joint embeddings to recover from");
    const Eigen::Index d = joints.front().vector.size();
    std::vector<Combo> combos;
    combos.reserve(joints.size());
    Eigen::MatrixXd v(static_cast<Eigen::Index>(joints.size()), d);
    for (std::size_t r = 0; r < joints.size(); ++r) {
        const auto& j = joints[r];
        if (j.pair.c1 < 0 || j.pair.c1 >= n || j.pair.c2 < 0 || j.pair.c2 >= n) {
            fail(ErrorCode::IndexOutOfRange, "joint embedding outside [0, n)");
        }
        if (j.vector.size() != d) fail(ErrorCode::InvalidInput, "joint embeddings differ in dimension");
        combos.push_back(j.pair);
        v.row(static_cast<Eigen::Index>(r)) = j.vector.transpose();
    }
    if (!combos_connected(combos, n)) {
        fail(ErrorCode::Unidentifiable, "combination graph is disconnected; factors are not identifiable");
    }

    const Eigen::MatrixXd a = design_matrix(combos, n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-8);
    const Eigen::MatrixXd solution = svd.solve(v);  // 2n x d, minimum norm

    FactoredModel model;
    model.global_mean = Eigen::VectorXd::Zero(d);
    model.u1 = solution.topRows(n);
    model.u2 = solution.bottomRows(n);
    model.design_rank = static_cast<int>(svd.rank());
    model.residual = (a * solution - v).norm();
    return model;
}

FactoredModel recover_from_split(const JointSet& joints, int n, int k) {
    auto model = recover_from_split(std::span<const JointEmbedding>(joints.joints), n, k);
    model.global_mean = joints.train_mean;
    return model;
}

Eigen::VectorXd reconstruct(const FactoredModel& model, int i, int j) {
    if (i < 0 || i >= model.n() || j < 0 || j >= model.u2.rows()) {
        fail(ErrorCode::IndexOutOfRange, "reconstruct index outside [0, n)");
    }
    return model.global_mean + model.u1.row(i).transpose() + model.u2.row(j).transpose();
}

Combo classify(const FactoredModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.dim()) fail(ErrorCode::InvalidInput, "embedding dimension mismatch");
    const Eigen::VectorXd centred = x - model.global_mean;
    Combo best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < model.n(); ++i) {
        const Eigen::VectorXd rest = centred - model.u1.row(i).transpose();
        for (Eigen::Index j = 0; j < model.u2.rows(); ++j) {
            const double dist = (rest - model.u2.row(j).transpose()).squaredNorm();
            if (dist < best_dist) {
                best_dist = dist;
                best = {i, static_cast<int>(j)};
            }
        }
    }
    return best;
}

ProjectionClassifier::ProjectionClassifier(const FactoredModel& model) : model_(model) {
    Eigen::MatrixXd basis(model.dim(), model.u1.rows() + model.u2.rows());
    basis << model.u1.transpose(), model.u2.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-8);
    basis_pinv_ = svd.solve(Eigen::MatrixXd::Identity(model.dim(), model.dim()));
}

Combo ProjectionClassifier::classify(const Eigen::VectorXd& x) const {
    const auto& m = model_;
    if (x.size() != m.dim()) fail(ErrorCode::InvalidInput, "embedding dimension mismatch");
    const Eigen::VectorXd coeff = basis_pinv_ * (x - m.global_mean);
    const Eigen::VectorXd part1 = m.u1.transpose() * coeff.head(m.u1.rows());
    const Eigen::VectorXd part2 = m.u2.transpose() * coeff.tail(m.u2.rows());
    auto nearest = [](const Eigen::MatrixXd& vectors, const Eigen::VectorXd& p) {
        int best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
            const double dist = (vectors.row(i).transpose() - p).squaredNorm();
            if (dist < best_dist) {
                best_dist = dist;
                best = static_cast<int>(i);
            }
        }
        return best;
    };
    return {nearest(m.u1, part1), nearest(m.u2, part2)};
}

std::vector<Combo> classify_rows(const FactoredModel& model, const Eigen::MatrixXd& rows, ClassifierKind kind) {
    std::vector<Combo> out;
    out.reserve(static_cast<std::size_t>(rows.rows()));
    if (kind == ClassifierKind::Projection) {
        const ProjectionClassifier projector(model);
        for (Eigen::Index r = 0; r < rows.rows(); ++r) out.push_back(projector.classify(rows.row(r).transpose()));
    } else {
        for (Eigen::Index r = 0; r < rows.rows(); ++r) out.push_back(classify(model, rows.row(r).transpose()));
    }
    return out;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto row = j[r].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != cols) fail(ErrorCode::InvalidInput, "ragged matrix in JSON");
        for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}

}  // namespace

void to_json(nlohmann::json& j, const FactoredModel& m) {
    std::vector<double> mean(m.global_mean.data(), m.global_mean.data() + m.global_mean.size());
    j = nlohmann::json{{"global_mean", mean},
                       {"u1", matrix_to_json(m.u1)},
                       {"u2", matrix_to_json(m.u2)},
                       {"design_rank", m.design_rank},
                       {"residual", m.residual}};
}

void from_json(const nlohmann::json& j, FactoredModel& m) {
    const auto mean = j.at("global_mean").get<std::vector<double>>();
    m.global_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    m.u1 = matrix_from_json(j.at("u1"), m.global_mean.size());
    m.u2 = matrix_from_json(j.at("u2"), m.global_mean.size());
    m.design_rank = j.value("design_rank", 0);
    m.residual = j.value("residual", 0.0);
}

}  // namespace compgen
