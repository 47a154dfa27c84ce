#include "snella/kernels/analysis.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "snella/kernels/merge.hpp"

namespace snella {
namespace {

Eigen::MatrixXd to_eigen(const ad::Tensor& t) {
    ad::require_matrix(t, "to_eigen");
    Eigen::MatrixXd out(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) {
            const double v = t.at(i, j);
            if (!std::isfinite(v)) throw std::invalid_argument("matrix has non-finite entries");
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    return out;
}

}  // namespace

std::vector<double> singular_values(const ad::Tensor& m) {
    const Eigen::MatrixXd mat = to_eigen(m);
    if (mat.size() == 0) return {};
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
    const Eigen::VectorXd& s = svd.singularValues();
    return {s.data(), s.data() + s.size()};
}

std::size_t numerical_rank(const ad::Tensor& m, double eps_rel) {
    if (!(eps_rel > 0.0 && eps_rel < 1.0)) throw std::invalid_argument("eps_rel must lie in (0, 1)");
    const auto sv = singular_values(m);
    if (sv.empty() || sv.front() == 0.0) return 0;
    const double cutoff = eps_rel * sv.front();
    std::size_t rank = 0;
    for (double s : sv)
        if (s >= cutoff) ++rank;
    return rank;
}

ad::Tensor gram_matrix(const KernelSpec& spec, const ad::Tensor& points) {
    ad::require_matrix(points, "gram_matrix");
    const std::size_t k = points.dim(0), r = points.dim(1);
    ad::Tensor g({k, k});
    const auto data = points.data();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            g.at(i, j) = kernel_eval(spec, data.subspan(i * r, r), data.subspan(j * r, r));
    return g;
}

double psd_check(const KernelSpec& spec, const ad::Tensor& points) {
    if (points.rank() != 2 || points.dim(0) < 1) throw std::invalid_argument("psd_check needs at least one point");
    const Eigen::MatrixXd g = to_eigen(gram_matrix(spec, points));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

}  // namespace snella
