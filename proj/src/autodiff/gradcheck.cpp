#include "snella/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace snella::ad {

double GradientReport::worst() const {
    double w = 0.0;
    for (double e : max_rel_error) w = std::max(w, e);
    return w;
}

GradientReport finite_diff_check(const Program& program, std::span<const Tensor> params, double h, double tol) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

    const ValueAndGrad recorded = value_and_grad(program, params);
    if (!std::isfinite(recorded.value)) throw NonFiniteError("program value is not finite");

    std::vector<Tensor> probe(params.begin(), params.end());
    GradientReport report;
    report.step = h;
    report.max_rel_error.assign(params.size(), 0.0);

    for (std::size_t p = 0; p < probe.size(); ++p) {
        const Tensor& analytic = recorded.grads[p];
        for (std::size_t i = 0; i < probe[p].size(); ++i) {
            const double saved = probe[p][i];
            probe[p][i] = saved + h;
            const double up = evaluate(program, probe);
            probe[p][i] = saved - h;
            const double down = evaluate(program, probe);
            probe[p][i] = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double g = analytic[i];
            if (!std::isfinite(numeric) || !std::isfinite(g)) {
                throw NonFiniteError("non-finite gradient at parameter " + std::to_string(p) + ", index " +
                                     std::to_string(i));
            }
            const double scale = std::max(std::abs(g), std::abs(numeric));
            const double err = scale < 1e-8 ? std::abs(g - numeric) : std::abs(g - numeric) / scale;
            report.max_rel_error[p] = std::max(report.max_rel_error[p], err);
        }
    }
    report.passed = report.worst() < tol;
    return report;
}

}  // namespace snella::ad
