#pragma once

#include <cmath>
#include <numbers>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "compgen/concept_space.hpp"
#include "compgen/embedding_table.hpp"
#include "compgen/rng.hpp"

namespace compgen::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(COMPGEN_FIXTURES) / name; }

/// Fresh directory under the system temp dir, removed first if present.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("compgen_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct Factors {
    Eigen::VectorXd mean;
    Eigen::MatrixXd u1;  // n x d, columns sum to zero
    Eigen::MatrixXd u2;
};

inline Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

/// Gaussian concept vectors, centred over each concept's values.
inline Factors random_factors(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    Factors f;
    f.mean = gaussian(rng, d, 1).col(0);
    f.u1 = gaussian(rng, n, d);
    f.u2 = gaussian(rng, n, d);
    f.u1.rowwise() -= f.u1.colwise().mean();
    f.u2.rowwise() -= f.u2.colwise().mean();
    return f;
}

/// per_cell rows of mean + u1[i] + u2[j] + noise * N(0, I) for each combo, cell by cell.
inline EmbeddingTable factored_table(const Factors& f, std::span<const Combo> combos, int per_cell, double noise,
                                     std::uint64_t seed) {
    Rng rng(seed);
    EmbeddingTable t;
    t.n = static_cast<int>(f.u1.rows());
    const auto d = f.mean.size();
    t.matrix.resize(static_cast<Eigen::Index>(combos.size()) * per_cell, d);
    Eigen::Index r = 0;
    for (const auto& c : combos) {
        for (int s = 0; s < per_cell; ++s, ++r) {
            t.matrix.row(r) = (f.mean + f.u1.row(c.c1).transpose() + f.u2.row(c.c2).transpose()).transpose();
            if (noise > 0.0)
                for (Eigen::Index k = 0; k < d; ++k) t.matrix(r, k) += noise * rng.normal();
            t.labels_c1.push_back(c.c1);
            t.labels_c2.push_back(c.c2);
        }
    }
    return t;
}

inline EmbeddingTable full_grid_table(const Factors& f, int per_cell, double noise, std::uint64_t seed) {
    const auto split = build_nk_split(static_cast<int>(f.u1.rows()), static_cast<int>(f.u1.rows()));
    return factored_table(f, split.all_combos(), per_cell, noise, seed);
}

inline Eigen::MatrixXd random_orthogonal(int d, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(rng, d, d));
    return qr.householderQ();
}

/// Both labels one-hot encoded with weight 2 plus a small deterministic wiggle;
/// phase shifts the wiggle so a second copy acts as held-out data.
inline EmbeddingTable separable_table(int n, int per_cell, double phase) {
    EmbeddingTable t;
    t.n = n;
    t.matrix.resize(n * n * per_cell, 2 * n);
    int r = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int s = 0; s < per_cell; ++s, ++r) {
                for (int c = 0; c < 2 * n; ++c) t.matrix(r, c) = 0.1 * std::sin(c * 0.9 + r * 1.7 + phase);
                t.matrix(r, i) += 2.0;
                t.matrix(r, n + j) += 2.0;
                t.labels_c1.push_back(i);
                t.labels_c2.push_back(j);
            }
        }
    }
    return t;
}

/// One-dimensional feature over m unit segments whose labels alternate, so no
/// single threshold separates them (best threshold accuracy 7/12 for m = 12).
// Points on the unit circle in m equal angular sectors labelled by sector parity; m = 4 is the quadrant XOR.
inline EmbeddingTable xor_table(int m = 12, int per_segment = 10) {
    EmbeddingTable t;
    t.n = 2;
    t.matrix.resize(m * per_segment, 2);
    int r = 0;
    for (int s = 0; s < m; ++s) {
        for (int p = 0; p < per_segment; ++p, ++r) {
            const double angle = 2.0 * std::numbers::pi * (s + (p + 0.5) / per_segment) / m;
            t.matrix(r, 0) = std::cos(angle);
            t.matrix(r, 1) = std::sin(angle);
            t.labels_c1.push_back(s % 2);
            t.labels_c2.push_back(s % 2);
        }
    }
    return t;
}

}  // namespace compgen::testing
