#pragma once

// Reference implementations used as test oracles. Nothing here calls into the
// autodiff engine, the kernels or the allocation code.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "snella/autodiff/tensor.hpp"

namespace snella::test {

// Rank by Gaussian elimination with full pivoting; independent of the SVD path.
inline std::size_t elimination_rank(ad::Tensor m, double tol) {
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    std::size_t rank = 0;
    double scale = 0.0;
    for (double v : m.data()) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0;
    std::vector<bool> row_used(rows, false), col_used(cols, false);
    for (std::size_t step = 0; step < std::min(rows, cols); ++step) {
        double best = 0.0;
        std::size_t pr = 0, pc = 0;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                if (!row_used[i] && !col_used[j] && std::abs(m.at(i, j)) > best) {
                    best = std::abs(m.at(i, j));
                    pr = i;
                    pc = j;
                }
        if (best <= tol * scale) break;
        row_used[pr] = col_used[pc] = true;
        ++rank;
        for (std::size_t i = 0; i < rows; ++i) {
            if (row_used[i]) continue;
            const double f = m.at(i, pc) / m.at(pr, pc);
            for (std::size_t j = 0; j < cols; ++j) m.at(i, j) -= f * m.at(pr, j);
        }
    }
    return rank;
}

inline Eigen::MatrixXd to_eigen(const ad::Tensor& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m(i, j) = t.at(i, j);
    return m;
}

// Plain low-rank adapter on a tanh MLP: W_l = W0_l + B_l A_l^T, MSE loss, Adam with bias
// correction, hand-written backward pass.
struct LoraOracle {
    struct Layer {
        Eigen::MatrixXd W0, A, B;
        std::optional<Eigen::VectorXd> bias;
    };
    std::vector<Layer> layers;
    double lr = 1e-2, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    // moments for A and B of each layer
    std::vector<Eigen::MatrixXd> mA, vA, mB, vB;
    int t = 0;

    Eigen::MatrixXd weight(const Layer& l) const { return l.W0 + l.B * l.A.transpose(); }

    double step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
        const std::size_t L = layers.size();
        std::vector<Eigen::MatrixXd> acts{X};  // inputs to each layer
        for (std::size_t l = 0; l < L; ++l) {
            Eigen::MatrixXd z = acts.back() * weight(layers[l]).transpose();
            if (layers[l].bias) z.rowwise() += layers[l].bias->transpose();
            acts.push_back(l + 1 < L ? Eigen::MatrixXd(z.array().tanh()) : z);
        }
        const Eigen::MatrixXd diff = acts.back() - Y;
        const double loss = diff.array().square().sum() / static_cast<double>(diff.size());

        std::vector<Eigen::MatrixXd> gA(L), gB(L);
        Eigen::MatrixXd delta = 2.0 * diff / static_cast<double>(diff.size());  // dLoss/dz of the top layer
        for (std::size_t l = L; l-- > 0;) {
            const Eigen::MatrixXd gW = delta.transpose() * acts[l];  // m x n
            gB[l] = gW * layers[l].A;
            gA[l] = gW.transpose() * layers[l].B;
            if (l > 0) {
                const Eigen::MatrixXd dh = delta * weight(layers[l]);
                delta = dh.array() * (1.0 - acts[l].array().square());
            }
        }

        if (mA.empty()) {
            for (const auto& l : layers) {
                mA.push_back(Eigen::MatrixXd::Zero(l.A.rows(), l.A.cols()));
                vA.push_back(mA.back());
                mB.push_back(Eigen::MatrixXd::Zero(l.B.rows(), l.B.cols()));
                vB.push_back(mB.back());
            }
        }
        ++t;
        const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
        auto adam = [&](Eigen::MatrixXd& p, Eigen::MatrixXd& m, Eigen::MatrixXd& v, const Eigen::MatrixXd& g) {
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
            p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        };
        for (std::size_t l = 0; l < L; ++l) {
            adam(layers[l].A, mA[l], vA[l], gA[l]);
            adam(layers[l].B, mB[l], vB[l], gB[l]);
        }
        return loss;
    }
};

}  // namespace snella::test
