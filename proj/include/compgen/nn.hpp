#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "compgen/error.hpp"
#include "compgen/rng.hpp"

namespace compgen::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A ReLU trunk followed by two linear classification heads sharing the trunk
/// output. Columns of every activation matrix are samples.
///
/// Parameters are stored flat, in declaration order:
///   trunk W0, b0, W1, b1, ..., head1 W, b, head2 W, b
/// Biases are single-column matrices so all tensors share one type.
template <typename Scalar>
class TwoHeadNet {
public:
    TwoHeadNet() = default;

    TwoHeadNet(int input_dim, std::vector<int> trunk_sizes, int classes1, int classes2)
        : input_dim_(input_dim), trunk_sizes_(std::move(trunk_sizes)), classes1_(classes1), classes2_(classes2) {
        if (input_dim < 1 || classes1 < 1 || classes2 < 1) fail(ErrorCode::InvalidParameter, "network sizes must be >= 1");
        int fan_in = input_dim;
        for (int width : trunk_sizes_) {
            if (width < 1) fail(ErrorCode::InvalidParameter, "layer widths must be >= 1");
            params_.push_back(Mat<Scalar>::Zero(width, fan_in));
            params_.push_back(Mat<Scalar>::Zero(width, 1));
            fan_in = width;
        }
        params_.push_back(Mat<Scalar>::Zero(classes1, fan_in));
        params_.push_back(Mat<Scalar>::Zero(classes1, 1));
        params_.push_back(Mat<Scalar>::Zero(classes2, fan_in));
        params_.push_back(Mat<Scalar>::Zero(classes2, 1));
    }

    /// He-uniform for ReLU layers, 1/sqrt(fan_in) uniform for the heads, zero biases.
    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        const std::size_t layers = params_.size() / 2;
        for (std::size_t l = 0; l < layers; ++l) {
            auto& w = params_[2 * l];
            const bool head = l >= trunk_sizes_.size();
            const double fan_in = static_cast<double>(w.cols());
            const double bound = head ? 1.0 / std::sqrt(fan_in) : std::sqrt(6.0 / fan_in);
            // column-major fill keeps the draw order independent of Eigen internals
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
            params_[2 * l + 1].setZero();
        }
    }

    int input_dim() const { return input_dim_; }
    int feature_dim() const { return trunk_sizes_.empty() ? input_dim_ : trunk_sizes_.back(); }
    int classes1() const { return classes1_; }
    int classes2() const { return classes2_; }
    const std::vector<int>& trunk_sizes() const { return trunk_sizes_; }

    std::vector<Mat<Scalar>>& params() { return params_; }
    const std::vector<Mat<Scalar>>& params() const { return params_; }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const auto& p : params_) total += static_cast<std::size_t>(p.size());
        return total;
    }

    Mat<Scalar> features(const Mat<Scalar>& x) const {
        check_input(x);
        Mat<Scalar> a = x;
        for (std::size_t l = 0; l < trunk_sizes_.size(); ++l) {
            a = ((params_[2 * l] * a).colwise() + params_[2 * l + 1].col(0)).cwiseMax(Scalar(0));
        }
        return a;
    }

    std::pair<Mat<Scalar>, Mat<Scalar>> logits_from_features(const Mat<Scalar>& f) const {
        const std::size_t h = 2 * trunk_sizes_.size();
        Mat<Scalar> z1 = (params_[h] * f).colwise() + params_[h + 1].col(0);
        Mat<Scalar> z2 = (params_[h + 2] * f).colwise() + params_[h + 3].col(0);
        return {std::move(z1), std::move(z2)};
    }

    /// Argmax predictions of both heads.
    void predict(const Mat<Scalar>& x, std::vector<int>& out1, std::vector<int>& out2) const {
        const auto [z1, z2] = logits_from_features(features(x));
        out1.resize(static_cast<std::size_t>(x.cols()));
        out2.resize(static_cast<std::size_t>(x.cols()));
        for (Eigen::Index s = 0; s < x.cols(); ++s) {
            Eigen::Index a = 0;
            Eigen::Index b = 0;
            z1.col(s).maxCoeff(&a);
            z2.col(s).maxCoeff(&b);
            out1[static_cast<std::size_t>(s)] = static_cast<int>(a);
            out2[static_cast<std::size_t>(s)] = static_cast<int>(b);
        }
    }

    /// Mean over the batch of the summed cross-entropy of both heads. When
    /// grads is non-null it receives d(loss)/d(param) for every parameter.
    Scalar loss(const Mat<Scalar>& x, std::span<const int> y1, std::span<const int> y2,
                std::vector<Mat<Scalar>>* grads = nullptr) const {
        check_input(x);
        const Eigen::Index batch = x.cols();
        if (static_cast<Eigen::Index>(y1.size()) != batch || static_cast<Eigen::Index>(y2.size()) != batch) {
            fail(ErrorCode::InvalidInput, "label count does not match batch");
        }
        std::vector<Mat<Scalar>> acts;
        acts.reserve(trunk_sizes_.size() + 1);
        acts.push_back(x);
        for (std::size_t l = 0; l < trunk_sizes_.size(); ++l) {
            acts.push_back(((params_[2 * l] * acts.back()).colwise() + params_[2 * l + 1].col(0)).cwiseMax(Scalar(0)));
        }
        auto [z1, z2] = logits_from_features(acts.back());
        const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
        Scalar total = softmax_xent(z1, y1) + softmax_xent(z2, y2);  // z now holds (p - onehot)
        total *= inv_batch;
        if (grads == nullptr) return total;

        z1 *= inv_batch;
        z2 *= inv_batch;
        grads->resize(params_.size());
        const std::size_t h = 2 * trunk_sizes_.size();
        const Mat<Scalar>& f = acts.back();
        (*grads)[h] = z1 * f.transpose();
        (*grads)[h + 1] = z1.rowwise().sum();
        (*grads)[h + 2] = z2 * f.transpose();
        (*grads)[h + 3] = z2.rowwise().sum();
        Mat<Scalar> delta = params_[h].transpose() * z1 + params_[h + 2].transpose() * z2;
        for (std::size_t l = trunk_sizes_.size(); l-- > 0;) {
            // acts[l + 1] = relu(z); derivative is 1 where the output is positive
            delta = delta.cwiseProduct((acts[l + 1].array() > Scalar(0)).template cast<Scalar>().matrix());
            (*grads)[2 * l] = delta * acts[l].transpose();
            (*grads)[2 * l + 1] = delta.rowwise().sum();
            if (l > 0) delta = params_[2 * l].transpose() * delta;
        }
        return total;
    }

    template <typename Other>
    TwoHeadNet<Other> cast() const {
        TwoHeadNet<Other> out(input_dim_, trunk_sizes_, classes1_, classes2_);
        for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = params_[i].template cast<Other>();
        return out;
    }

private:
    void check_input(const Mat<Scalar>& x) const {
        if (x.rows() != input_dim_) fail(ErrorCode::InvalidInput, "input dimension mismatch");
    }

    /// Returns the summed cross-entropy; overwrites logits with softmax - onehot.
    static Scalar softmax_xent(Mat<Scalar>& z, std::span<const int> y) {
        Scalar total = 0;
        for (Eigen::Index s = 0; s < z.cols(); ++s) {
            auto col = z.col(s);
            const Scalar m = col.maxCoeff();
            col.array() = (col.array() - m).exp();
            const Scalar sum = col.sum();
            col /= sum;
            const auto label = static_cast<Eigen::Index>(y[static_cast<std::size_t>(s)]);
            if (label < 0 || label >= z.rows()) fail(ErrorCode::InvalidInput, "label outside the head's range");
            total -= std::log(std::max(col(label), std::numeric_limits<Scalar>::min()));
            col(label) -= Scalar(1);
        }
        return total;
    }

    int input_dim_ = 0;
    std::vector<int> trunk_sizes_;
    int classes1_ = 0;
    int classes2_ = 0;
    std::vector<Mat<Scalar>> params_;
};

/// Adam with bias correction.
template <typename Scalar>
class Adam {
public:
    Adam(const std::vector<Mat<Scalar>>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params) {
            m_.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
            v_.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
        }
    }

    void step(std::vector<Mat<Scalar>>& params, const std::vector<Mat<Scalar>>& grads) {
        ++t_;
        const auto b1 = static_cast<Scalar>(beta1_);
        const auto b2 = static_cast<Scalar>(beta2_);
        const auto step_size =
            static_cast<Scalar>(lr_ * std::sqrt(1.0 - std::pow(beta2_, t_)) / (1.0 - std::pow(beta1_, t_)));
        const auto eps = static_cast<Scalar>(eps_ * std::sqrt(1.0 - std::pow(beta2_, t_)));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grads[i];
            v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grads[i].cwiseProduct(grads[i]);
            params[i].array() -= step_size * m_[i].array() / (v_[i].array().sqrt() + eps);
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Mat<Scalar>> m_, v_;
};

}  // namespace compgen::nn
