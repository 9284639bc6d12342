#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "sf/checkpoint.hpp"
#include "sf/encodings.hpp"
#include "sf/rng.hpp"
#include "sf/tape.hpp"

namespace sf {

struct Linear {
    NodePtr w, b;  // [in,out], [out]

    Linear() = default;
    Linear(std::size_t in, std::size_t out, double weight_std, Rng& rng);
    static Linear zeros(std::size_t in, std::size_t out);

    NodePtr operator()(const NodePtr& x) const { return add(matmul(x, w), b); }
    Array plain(const Array& x) const;
};

struct FieldDims {
    std::size_t coarse_width = 128;
    std::size_t coarse_layers = 6;
    std::size_t ec_dim = 64;
    std::size_t color_width = 64;
    std::size_t fine_width = 256;
    std::size_t fine_layers = 2;
};

struct CoarseOutputs {
    NodePtr sigma;  // [P,1], >= 0
    NodePtr ec;     // [P,E]
    NodePtr color;  // [P,3] in (0,1)
};
struct CoarseOutputsPlain {
    Array sigma, ec, color;
};

// Shift that makes the softplus density head evaluate to exactly zero at a
// zero pre-activation: sigma = max(0, softplus(z) - softplus(0)).
extern const double kDensityShift;

// Low-frequency MLP: 6 relu hidden layers on gamma(x); heads for density,
// geometric feature e_c, and a view-conditioned color branch on
// concat(e_c, d).
class CoarseField {
public:
    CoarseField(const FieldDims& dims, const PositionalEncodingConfig& pe, Rng& rng);

    // positions: [P,3] normalized to [-1,1]; dirs: [P,3] unit world vectors.
    CoarseOutputs eval(const Array& positions, const Array& dirs) const;
    CoarseOutputsPlain eval_plain(const Array& positions, const Array& dirs) const;

    std::vector<std::pair<std::string, NodePtr>> named_params() const;  // "coarse.*"
    const PositionalEncodingConfig& pe_config() const { return pe_; }
    std::size_t ec_dim() const { return dims_.ec_dim; }

private:
    FieldDims dims_;
    PositionalEncodingConfig pe_;
    std::vector<Linear> trunk_;
    Linear density_, feat_, color_hidden_, color_out_;
};

struct FineOutputs {
    NodePtr sigma_res;  // [P,1], unbounded pre-activation
    NodePtr color;      // [P,3] in (0,1)
};
struct FineOutputsPlain {
    Array sigma_res, color;
};

enum class FineInput { HashAndEc, PeAndEc, EcOnly };

// Residual MLP on concat(encoding(x), e_c); no view direction input. Heads
// start at zero so a fresh stage 2 reproduces the coarse geometry.
class FineField {
public:
    FineField(std::size_t input_dim, const FieldDims& dims, Rng& rng);

    FineOutputs eval(const NodePtr& input) const;
    FineOutputsPlain eval_plain(const Array& input) const;

    std::vector<std::pair<std::string, NodePtr>> named_params() const;  // "fine.*"
    std::size_t input_dim() const { return input_dim_; }

private:
    std::size_t input_dim_ = 0;
    std::vector<Linear> trunk_;
    Linear density_, color_;
};

struct AxisBounds {
    Eigen::Vector3d lo{-1.5, -1.5, -1.5};
    Eigen::Vector3d hi{1.5, 1.5, 1.5};

    double diameter() const { return (hi - lo).norm(); }
};

struct HierarchicalOutputsPlain {
    Array sigma_f, color_f, sigma_c, color_c;
};

// sigma_f = max(0, sigma_c + sigma_res)
Array compose_density(const Array& sigma_c, const Array& sigma_res);

// The full two-level representation plus scene bounds used to normalize
// coordinates ([0,1]^3 for the hash grid, [-1,1]^3 for gamma).
class HierarchicalField {
public:
    HierarchicalField(const FieldDims& dims, const PositionalEncodingConfig& coarse_pe,
                      const HashGridConfig& grid_cfg,
                      const PositionalEncodingConfig& fine_pe, FineInput fine_input,
                      bool use_residual_density, Rng& rng);

    // world positions [P,3], unit directions [P,3]
    CoarseOutputs eval_coarse(const Array& world_pos, const Array& dirs) const;
    CoarseOutputsPlain eval_coarse_plain(const Array& world_pos, const Array& dirs) const;

    // e_c from eval_coarse at the same positions; matching row counts required.
    FineOutputs eval_fine(const Array& world_pos, const NodePtr& ec) const;
    FineOutputsPlain eval_fine_plain(const Array& world_pos, const Array& ec) const;

    HierarchicalOutputsPlain eval_hierarchical_plain(const Array& world_pos,
                                                     const Array& dirs) const;

    // Stage-2 training path: coarse outputs are precomputed constants, the
    // graph spans only fine + grid parameters.
    struct FineRender {
        NodePtr sigma_f;  // [P,1]
        NodePtr color_f;  // [P,3]
    };
    FineRender eval_hierarchical_tape(const Array& world_pos, const Array& sigma_c,
                                      const Array& ec) const;

    CoarseField& coarse() { return coarse_; }
    const CoarseField& coarse() const { return coarse_; }
    FineField& fine() { return fine_; }
    HashGridParams& grid() { return grid_; }
    const HashGridConfig& grid_config() const { return grid_cfg_; }
    FineInput fine_input() const { return fine_input_; }
    bool use_residual_density() const { return use_residual_; }

    AxisBounds bounds;

    std::vector<std::pair<std::string, NodePtr>> coarse_params() const;
    std::vector<std::pair<std::string, NodePtr>> style_params() const;  // fine.* + grid.*
    std::vector<std::pair<std::string, NodePtr>> all_params() const;

    NamedArrays snapshot(const std::vector<std::pair<std::string, NodePtr>>& params) const;
    void load_params(const NamedArrays& arrays, const std::string& prefix_filter);

    Array normalize_unit(const Array& world_pos) const;  // [0,1]^3, clamped
    Array normalize_sym(const Array& world_pos) const;   // [-1,1]^3, unclamped

private:
    NodePtr fine_encoding(const Array& world_pos, const NodePtr& ec) const;
    Array fine_encoding_plain(const Array& world_pos, const Array& ec) const;

    FieldDims dims_;
    HashGridConfig grid_cfg_;
    PositionalEncodingConfig fine_pe_;
    FineInput fine_input_;
    bool use_residual_;
    CoarseField coarse_;
    FineField fine_;
    HashGridParams grid_;
};

std::size_t fine_input_dim(FineInput mode, const HashGridConfig& grid,
                           const PositionalEncodingConfig& fine_pe, std::size_t ec_dim);

}  // namespace sf
