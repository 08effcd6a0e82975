#pragma once

// Flat checkpoint container:
//   "MDNCKPT1" | u32 version | str config_hash | u32 entry count |
//   entries of { str path | u32 rank (=2) | u64 rows | u64 cols | rows*cols f64, row-major }
// All integers and reals little-endian.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "mocap/binary_io.hpp"
#include "mocap/nn/layers.hpp"

namespace mocap::nn {

inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string config_hash;
    std::vector<std::pair<std::string, Matrix>> entries;

    const Matrix* find(const std::string& path) const {
        for (const auto& [name, m] : entries)
            if (name == path) return &m;
        return nullptr;
    }
    const Matrix& at(const std::string& path) const {
        if (const auto* m = find(path)) return *m;
        throw Error(ErrorCode::InvalidFile, "checkpoint has no entry " + path);
    }
    void put(const std::string& path, Matrix m) {
        for (auto& [name, existing] : entries) {
            if (name == path) {
                existing = std::move(m);
                return;
            }
        }
        entries.emplace_back(path, std::move(m));
    }
    void put_params(const ParamStore& store, const std::string& prefix = "") {
        for (const auto& [name, t] : store.entries()) put(prefix + name, t.value());
    }
    // Loads every parameter of the store from `prefix + name`.
    void restore_params(ParamStore& store, const std::string& prefix = "") const {
        for (auto& [name, t] : store.entries()) {
            const Matrix& m = at(prefix + name);
            if (m.rows() != t.rows() || m.cols() != t.cols())
                throw Error(ErrorCode::ShapeMismatch, "checkpoint entry " + prefix + name + " has a different shape");
            t.mutable_value() = m;
        }
    }
};

inline std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
    io::Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.str(ckpt.config_hash);
    w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
    for (const auto& [name, m] : ckpt.entries) {
        w.str(name);
        w.u32(2);
        w.u64(static_cast<std::uint64_t>(m.rows()));
        w.u64(static_cast<std::uint64_t>(m.cols()));
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
    }
    return w.take();
}

inline Checkpoint decode(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic)))
        throw Error(ErrorCode::InvalidFile, "not a checkpoint file");
    if (r.u32() != kCheckpointVersion) throw Error(ErrorCode::InvalidFile, "unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.config_hash = r.str();
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const auto rank = r.u32();
        if (rank != 2) throw Error(ErrorCode::InvalidFile, "checkpoint entry of unsupported rank");
        const auto rows = static_cast<Index>(r.u64());
        const auto cols = static_cast<Index>(r.u64());
        Matrix m(rows, cols);
        for (Index a = 0; a < rows; ++a)
            for (Index b = 0; b < cols; ++b) m(a, b) = r.f64();
        ckpt.entries.emplace_back(std::move(name), std::move(m));
    }
    if (!r.done()) throw Error(ErrorCode::InvalidFile, "trailing bytes after checkpoint entries");
    return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode(bytes);
}

// Rejects a checkpoint written under another configuration.
inline void require_hash(const Checkpoint& ckpt, const std::string& expected) {
    if (ckpt.config_hash != expected)
        throw Error(ErrorCode::ChecksumMismatch, "checkpoint config hash " + ckpt.config_hash + " != " + expected);
}

} // namespace mocap::nn
