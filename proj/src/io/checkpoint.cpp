#include "snella/io/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "snella/util/fnv.hpp"

namespace snella {

using ad::Tensor;

namespace {

constexpr unsigned char magic[4] = {'S', 'N', 'L', 'A'};

class Writer {
public:
    std::vector<unsigned char> bytes;

    template <typename U>
    void uint(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        uint(bits);
    }
    void u32(std::size_t v) {
        if (v > 0xffffffffu) throw CheckpointError("dimension " + std::to_string(v) + " does not fit in u32");
        uint(static_cast<std::uint32_t>(v));
    }
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    template <typename U>
    U uint() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    double f64() {
        const auto bits = uint<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    Tensor matrix(std::size_t rows, std::size_t cols) {
        if (rows != 0 && cols > (end_ - pos_) / 8 / rows) throw CheckpointError("blob exceeds file size");
        Tensor t({rows, cols});
        for (double& v : t.data()) v = f64();
        return t;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (end_ - pos_ < n) throw CheckpointError("unexpected end of checkpoint payload");
    }

    const std::vector<unsigned char>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

std::size_t pieces_for(KernelKind kind, std::size_t coeffs) {
    switch (kind) {
        case KernelKind::PLinear:
            if (coeffs < 1) throw CheckpointError("PLinear record needs at least 1 coefficient");
            return coeffs;
        case KernelKind::MixK:
            if (coeffs < 3) throw CheckpointError("MixK record needs at least 3 coefficients");
            return coeffs - 2;
        default: return 2;
    }
}

}  // namespace

AdapterState AdapterState::capture(const TinyModel& model) {
    AdapterState s;
    for (const auto& l : model.layers()) s.layers.push_back({l.pair, l.spec});
    return s;
}

void AdapterState::apply(TinyModel& model) const {
    auto& layers = model.layers();
    if (layers.size() != this->layers.size()) {
        throw std::invalid_argument("checkpoint has " + std::to_string(this->layers.size()) + " layers, model has " +
                                    std::to_string(layers.size()));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& rec = this->layers[l];
        if (rec.pair.A.shape() != layers[l].pair.A.shape() || rec.pair.B.shape() != layers[l].pair.B.shape() ||
            rec.spec.kind != layers[l].spec.kind) {
            throw std::invalid_argument("checkpoint layer " + std::to_string(l) + " does not match " + layers[l].name);
        }
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].pair = this->layers[l].pair;
        layers[l].spec = this->layers[l].spec;
    }
}

std::vector<unsigned char> encode_checkpoint(const AdapterState& state) {
    Writer w;
    w.bytes.assign(std::begin(magic), std::end(magic));
    w.uint(checkpoint_version);
    w.u32(state.layers.size());
    for (const auto& rec : state.layers) {
        rec.pair.validate();
        w.u32(rec.pair.rows());
        w.u32(rec.pair.cols());
        w.u32(rec.pair.rank());
        w.uint(static_cast<std::uint8_t>(rec.spec.kind));
        const Tensor c = rec.spec.coefficients();
        w.u32(c.size());
        for (double v : c.data()) w.f64(v);
        for (double v : rec.pair.A.data()) w.f64(v);
        for (double v : rec.pair.B.data()) w.f64(v);
    }
    w.uint(fnv1a(std::span<const unsigned char>(w.bytes)));
    return w.bytes;
}

AdapterState decode_checkpoint(const std::vector<unsigned char>& bytes) {
    const std::size_t head = std::min<std::size_t>(bytes.size(), 4);
    if (head < 4 || std::memcmp(bytes.data(), magic, 4) != 0) throw BadMagicError("not a checkpoint (bad magic)");
    if (bytes.size() < 6) throw ChecksumError("checkpoint truncated before the version field");
    const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != checkpoint_version) {
        throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version));
    }
    if (bytes.size() < 6 + 8) throw ChecksumError("checkpoint truncated: no checksum");
    const std::size_t end = bytes.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[end + i]) << (8 * i);
    if (fnv1a(std::span<const unsigned char>(bytes.data(), end)) != stored) {
        throw ChecksumError("checkpoint checksum mismatch");
    }

    Reader r(bytes, end);
    r.uint<std::uint32_t>();  // magic
    r.uint<std::uint16_t>();
    const std::uint32_t count = r.uint<std::uint32_t>();
    AdapterState state;
    for (std::uint32_t l = 0; l < count; ++l) {
        const std::size_t m = r.uint<std::uint32_t>(), n = r.uint<std::uint32_t>(), rank = r.uint<std::uint32_t>();
        KernelKind kind;
        try {
            kind = kernel_from_id(r.uint<std::uint8_t>());
        } catch (const std::invalid_argument& e) {
            throw CheckpointError(e.what());
        }
        const std::size_t nc = r.uint<std::uint32_t>();
        Tensor c = r.matrix(1, nc);
        AdapterRecord rec;
        rec.spec = KernelSpec::make(kind, pieces_for(kind, nc));
        if (rec.spec.coefficient_count() != nc) {
            throw CheckpointError("layer " + std::to_string(l) + ": wrong coefficient count for " +
                                  std::string(kernel_name(kind)));
        }
        rec.spec.set_coefficients(Tensor({nc}, std::vector<double>(c.data().begin(), c.data().end())));
        rec.pair.A = r.matrix(n, rank);
        rec.pair.B = r.matrix(m, rank);
        state.layers.push_back(std::move(rec));
    }
    if (r.pos() != end) throw CheckpointError("trailing bytes after the last layer record");
    return state;
}

void save_checkpoint(const AdapterState& state, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(state);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + path.string());
}

AdapterState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace snella
