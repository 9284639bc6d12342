#include "sf/encodings.hpp"

#include <cmath>

#include "sf/errors.hpp"
#include "sf/kernels.hpp"

namespace sf {

Array positional_encode(const Array& positions, const PositionalEncodingConfig& cfg) {
    if (positions.rank() != 2 || positions.extent(1) != 3)
        fail("encodings", "positional_encode: positions must be [P,3], got " +
                              shape_str(positions.shape()));
    if (cfg.levels < 1) fail("encodings", "positional_encode: levels must be >= 1");
    const std::size_t p_count = positions.extent(0);
    const std::size_t dim = cfg.output_dim();
    Array out(Shape{p_count, dim});
    constexpr double kPi = 3.14159265358979323846;
    for (std::size_t p = 0; p < p_count; ++p) {
        const double* x = positions.data() + p * 3;
        double* dst = out.data() + p * dim;
        std::size_t k = 0;
        if (cfg.include_identity)
            for (std::size_t c = 0; c < 3; ++c) dst[k++] = x[c];
        double freq = kPi;  // 2^l * pi
        for (std::size_t l = 0; l < cfg.levels; ++l, freq *= 2.0)
            for (std::size_t c = 0; c < 3; ++c) {
                dst[k++] = std::sin(freq * x[c]);
                dst[k++] = std::cos(freq * x[c]);
            }
    }
    return out;
}

double HashGridConfig::growth_factor() const {
    if (levels < 2) fail("encodings", "hash grid: growth factor needs at least 2 levels");
    return std::exp((std::log(static_cast<double>(n_max)) -
                     std::log(static_cast<double>(n_min))) /
                    static_cast<double>(levels - 1));
}

std::vector<std::size_t> grid_resolutions(const HashGridConfig& cfg) {
    if (cfg.levels < 2) fail("encodings", "grid_resolutions: need at least 2 levels");
    if (cfg.n_min > cfg.n_max) fail("encodings", "grid_resolutions: n_min must be <= n_max");
    const double b = cfg.growth_factor();
    std::vector<std::size_t> res(cfg.levels);
    for (std::size_t m = 0; m < cfg.levels; ++m) {
        // The 1e-9 nudge absorbs a 1-ulp shortfall when b^(M-1) should land
        // exactly on n_max.
        res[m] = static_cast<std::size_t>(
            std::floor(static_cast<double>(cfg.n_min) * std::pow(b, static_cast<double>(m)) +
                       1e-9));
    }
    return res;
}

std::uint32_t hash_index(std::uint64_t cx, std::uint64_t cy, std::uint64_t cz,
                         std::size_t level, const HashGridConfig& cfg) {
    (void)level;  // same hash at every level; the level picks the resolution
    const std::uint32_t h = static_cast<std::uint32_t>(cx) * 1u ^
                            static_cast<std::uint32_t>(cy) * 2654435761u ^
                            static_cast<std::uint32_t>(cz) * 805459861u;
    return h & static_cast<std::uint32_t>(cfg.table_size() - 1);
}

HashGridParams::HashGridParams(const HashGridConfig& cfg, Rng& rng) {
    tables.reserve(cfg.levels);
    for (std::size_t m = 0; m < cfg.levels; ++m) {
        Array table(Shape{cfg.table_size(), cfg.feat_dim});
        for (std::size_t i = 0; i < table.size(); ++i) table[i] = rng.uniform(-1e-4, 1e-4);
        tables.push_back(param(std::move(table)));
    }
}

std::vector<std::pair<std::string, NodePtr>> HashGridParams::named_params() const {
    std::vector<std::pair<std::string, NodePtr>> out;
    for (std::size_t m = 0; m < tables.size(); ++m)
        out.emplace_back("grid.level" + std::to_string(m), tables[m]);
    return out;
}

namespace {

// Per-level corner indices and trilinear weights for a batch of unit-cube
// points. Corner order: bit 0 -> +x, bit 1 -> +y, bit 2 -> +z.
void corner_lookup(const Array& positions, std::size_t resolution, std::size_t level,
                   const HashGridConfig& cfg, std::vector<std::uint32_t>& idx,
                   std::vector<double>& w) {
    const std::size_t p_count = positions.extent(0);
    idx.resize(p_count * 8);
    w.resize(p_count * 8);
    const double res = static_cast<double>(resolution);
    for (std::size_t p = 0; p < p_count; ++p) {
        const double* x = positions.data() + p * 3;
        double fpos[3], frac[3];
        std::uint64_t cell[3];
        for (int c = 0; c < 3; ++c) {
            if (!std::isfinite(x[c]))
                fail("encodings", "hash_encode: non-finite coordinate at point " +
                                      std::to_string(p));
            double v = x[c];
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            fpos[c] = v * res;
            cell[c] = static_cast<std::uint64_t>(fpos[c]);
            frac[c] = fpos[c] - static_cast<double>(cell[c]);
        }
        for (std::uint32_t corner = 0; corner < 8; ++corner) {
            const std::uint64_t cx = cell[0] + (corner & 1u);
            const std::uint64_t cy = cell[1] + ((corner >> 1) & 1u);
            const std::uint64_t cz = cell[2] + ((corner >> 2) & 1u);
            double weight = 1.0;
            weight *= (corner & 1u) ? frac[0] : 1.0 - frac[0];
            weight *= ((corner >> 1) & 1u) ? frac[1] : 1.0 - frac[1];
            weight *= ((corner >> 2) & 1u) ? frac[2] : 1.0 - frac[2];
            idx[p * 8 + corner] = hash_index(cx, cy, cz, level, cfg);
            w[p * 8 + corner] = weight;
        }
    }
}

}  // namespace

NodePtr hash_encode(const Array& positions, const HashGridParams& params,
                    const HashGridConfig& cfg) {
    if (positions.rank() != 2 || positions.extent(1) != 3)
        fail("encodings", "hash_encode: positions must be [P,3], got " +
                              shape_str(positions.shape()));
    if (params.tables.size() != cfg.levels)
        fail("encodings", "hash_encode: params have " + std::to_string(params.tables.size()) +
                              " levels, config wants " + std::to_string(cfg.levels));
    const auto resolutions = grid_resolutions(cfg);
    std::vector<NodePtr> per_level;
    per_level.reserve(cfg.levels);
    std::vector<std::uint32_t> idx;
    std::vector<double> w;
    for (std::size_t m = 0; m < cfg.levels; ++m) {
        corner_lookup(positions, resolutions[m], m, cfg, idx, w);
        per_level.push_back(weighted_gather_rows(params.tables[m], idx, w, 8));
    }
    return concat(per_level);
}

Array hash_encode_plain(const Array& positions, const HashGridParams& params,
                        const HashGridConfig& cfg) {
    if (positions.rank() != 2 || positions.extent(1) != 3)
        fail("encodings", "hash_encode: positions must be [P,3], got " +
                              shape_str(positions.shape()));
    const auto resolutions = grid_resolutions(cfg);
    std::vector<Array> levels;
    levels.reserve(cfg.levels);
    std::vector<std::uint32_t> idx;
    std::vector<double> w;
    for (std::size_t m = 0; m < cfg.levels; ++m) {
        corner_lookup(positions, resolutions[m], m, cfg, idx, w);
        levels.push_back(kernels::weighted_gather_rows(params.tables[m]->value, idx, w, 8));
    }
    std::vector<const Array*> parts;
    for (const Array& l : levels) parts.push_back(&l);
    return kernels::concat_last(parts);
}

}  // namespace sf
