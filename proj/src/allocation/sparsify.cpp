#include "snella/allocation/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace snella {

std::string_view sparsify_mode_name(SparsifyMode mode) {
    switch (mode) {
        case SparsifyMode::SoftSign: return "soft";
        case SparsifyMode::LiteralProduct: return "literal";
        case SparsifyMode::HardMask: return "hard";
    }
    return "?";
}

SparsifyMode parse_sparsify_mode(std::string_view name) {
    for (auto m : {SparsifyMode::SoftSign, SparsifyMode::LiteralProduct, SparsifyMode::HardMask})
        if (sparsify_mode_name(m) == name) return m;
    throw std::invalid_argument("unknown sparsify mode '" + std::string(name) + "'");
}

double threshold_for_budget(const ad::Tensor& dw, std::int64_t budget) {
    const auto total = static_cast<std::int64_t>(dw.size());
    if (budget < 0 || budget > total) {
        throw std::out_of_range("budget " + std::to_string(budget) + " outside [0, " + std::to_string(total) + "]");
    }
    if (budget == 0) return std::numeric_limits<double>::infinity();
    if (budget == total) return 0.0;
    std::vector<double> mags(dw.size());
    std::transform(dw.data().begin(), dw.data().end(), mags.begin(), [](double v) { return std::abs(v); });
    auto nth = mags.begin() + budget;  // (b+1)-th largest, 0-based index b in descending order
    std::nth_element(mags.begin(), nth, mags.end(), std::greater<>());
    return *nth;
}

ad::Var sparsify_at(ad::Var dw, double tau, SparsifyMode mode) {
    ad::Tape& tape = dw.tape();
    if (std::isinf(tau)) return tape.constant(ad::Tensor::zeros(dw.shape()));
    ad::Var shrunk = ad::relu(ad::add_scalar(ad::abs(dw), -tau));
    switch (mode) {
        case SparsifyMode::SoftSign: return ad::sign(dw) * shrunk;
        case SparsifyMode::LiteralProduct: return dw * shrunk;
        case SparsifyMode::HardMask: {
            ad::Tensor mask(dw.shape());
            for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = std::abs(dw.value()[i]) > tau ? 1.0 : 0.0;
            return dw * tape.constant(std::move(mask));
        }
    }
    throw std::logic_error("unreachable sparsify mode");
}

ad::Var sparsify(ad::Var dw, std::int64_t budget, SparsifyMode mode) {
    const double tau = threshold_for_budget(dw.value(), budget);
    if (budget == static_cast<std::int64_t>(dw.size()) && mode != SparsifyMode::LiteralProduct) return dw;
    return sparsify_at(dw, tau, mode);
}

ad::Tensor sparsify(const ad::Tensor& dw, std::int64_t budget, SparsifyMode mode) {
    ad::Tape tape;
    return sparsify(tape.constant(dw), budget, mode).value();
}

std::size_t count_nonzero(const ad::Tensor& t) {
    return static_cast<std::size_t>(std::count_if(t.data().begin(), t.data().end(), [](double v) { return v != 0.0; }));
}

}  // namespace snella
