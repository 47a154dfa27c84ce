#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "snella/autodiff/tensor.hpp"

namespace snella {

enum class KernelKind : std::uint8_t {
    Linear = 0,
    PLinear = 1,
    Sigmoid = 2,
    RBF = 3,
    RBFNormalized = 4,
    MixK = 5,
};

std::string_view kernel_name(KernelKind kind);
/// Accepts the names produced by kernel_name(); throws std::invalid_argument otherwise.
KernelKind parse_kernel(std::string_view name);
KernelKind kernel_from_id(std::uint8_t id);
const std::vector<KernelKind>& all_kernels();

/// A kernel kind plus its learnable coefficients.
///
/// Coefficient vector layout (see coefficients()):
///   Linear         -> []
///   PLinear        -> [alpha_1 .. alpha_P]
///   MixK           -> [alpha_1 .. alpha_P, alpha, beta]
///   Sigmoid        -> [sig_alpha, sig_beta, sig_gamma]
///   RBF, RBFNorm.  -> [rbf_alpha, rbf_beta, rbf_gamma]
struct KernelSpec {
    KernelKind kind = KernelKind::MixK;
    std::size_t pieces = 2;
    std::vector<double> alpha_p;
    double alpha = 0.0;
    double beta = 0.0;
    double sig_alpha = 0.0;
    double sig_beta = 1.0;
    double sig_gamma = 0.0;
    double rbf_alpha = 0.0;
    double rbf_beta = 1.0;
    double rbf_gamma = 0.0;

    /// Zero-update initialisation: every output-scaling coefficient is 0, so a merge
    /// evaluates to the zero matrix (RBFNormalized excepted, see merge()).
    static KernelSpec make(KernelKind kind, std::size_t pieces = 2);
    /// All coefficients 1 and offsets 0: the positive semi-definite configuration.
    static KernelSpec canonical(KernelKind kind, std::size_t pieces = 2);

    bool uses_pieces() const { return kind == KernelKind::PLinear || kind == KernelKind::MixK; }

    /// Throws std::invalid_argument when pieces/coefficients are inconsistent with `rank`.
    void validate(std::size_t rank) const;

    std::size_t coefficient_count() const;
    ad::Tensor coefficients() const;
    void set_coefficients(const ad::Tensor& values);

    bool operator==(const KernelSpec&) const = default;
};

}  // namespace snella
