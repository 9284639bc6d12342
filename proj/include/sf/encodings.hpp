#pragma once

#include <cstdint>
#include <vector>

#include "sf/rng.hpp"
#include "sf/tape.hpp"

namespace sf {

// Low-frequency sin/cos encoding for the coarse field. Components are
// bounded in [-1,1]; the identity pass-through is configurable.
struct PositionalEncodingConfig {
    std::size_t levels = 7;
    bool include_identity = true;

    std::size_t output_dim() const { return (include_identity ? 3 : 0) + 6 * levels; }
};

// positions: [P,3] with coordinates pre-normalized to [-1,1].
// Layout per point: [x,y,z (if identity)], then for each level l and each
// coordinate p: sin(2^l pi p), cos(2^l pi p).
Array positional_encode(const Array& positions, const PositionalEncodingConfig& cfg);

// Multi-resolution hash grid for the fine field.
struct HashGridConfig {
    std::size_t levels = 8;       // M
    std::size_t n_min = 128;
    std::size_t n_max = 512;
    std::size_t feat_dim = 4;     // F
    std::size_t table_log2 = 19;  // T_h = 2^table_log2

    std::size_t table_size() const { return std::size_t(1) << table_log2; }
    std::size_t output_dim() const { return levels * feat_dim; }
    double growth_factor() const;  // b = exp((ln n_max - ln n_min) / (M-1))
};

// N_m = floor(n_min * b^m) for m in [0, M-1]. Requires M >= 2.
std::vector<std::size_t> grid_resolutions(const HashGridConfig& cfg);

// XOR-prime spatial hash of a nonnegative integer cell, modulo the table
// size. Deterministic; the level only selects the grid resolution upstream.
std::uint32_t hash_index(std::uint64_t cx, std::uint64_t cy, std::uint64_t cz,
                         std::size_t level, const HashGridConfig& cfg);

// One learnable table per level, [T_h, F], init uniform in [-1e-4, 1e-4].
struct HashGridParams {
    std::vector<NodePtr> tables;

    HashGridParams() = default;
    HashGridParams(const HashGridConfig& cfg, Rng& rng);
    std::vector<std::pair<std::string, NodePtr>> named_params() const;  // "grid.level<m>"
};

// Trilinear hash encoding of positions [P,3] in the unit cube; output
// [P, M*F], differentiable w.r.t. the tables. Throws on non-finite input.
NodePtr hash_encode(const Array& positions, const HashGridParams& params,
                    const HashGridConfig& cfg);
Array hash_encode_plain(const Array& positions, const HashGridParams& params,
                        const HashGridConfig& cfg);

}  // namespace sf
