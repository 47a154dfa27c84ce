#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "snella/kernels/merge.hpp"
#include "snella/model/tiny_model.hpp"

namespace snella {

// On-disk layout, all little-endian:
//   "SNLA" | u16 version | u32 layer count
//   per layer: u32 m | u32 n | u32 r | u8 kernel id | u32 coeff count | f64 coeffs[]
//              | f64 A[n*r] | f64 B[m*r]   (row-major)
//   u64 FNV-1a of every preceding byte
inline constexpr std::uint16_t checkpoint_version = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class BadMagicError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class UnsupportedVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class ChecksumError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

struct AdapterRecord {
    LowRankPair pair;
    KernelSpec spec;

    /// Compares what the file stores: kind, coefficients and factors. The piece count of
    /// kernels that have no pieces is not part of the state.
    bool operator==(const AdapterRecord& o) const {
        return spec.kind == o.spec.kind && pair == o.pair && spec.coefficients() == o.spec.coefficients();
    }
};

struct AdapterState {
    std::vector<AdapterRecord> layers;

    static AdapterState capture(const TinyModel& model);
    /// Copies factors and coefficients into `model`; shapes and kernel kinds must match.
    void apply(TinyModel& model) const;

    bool operator==(const AdapterState&) const = default;
};

std::vector<unsigned char> encode_checkpoint(const AdapterState& state);
AdapterState decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const AdapterState& state, const std::filesystem::path& path);
AdapterState load_checkpoint(const std::filesystem::path& path);

}  // namespace snella
