#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "sf/camera.hpp"
#include "sf/fields.hpp"
#include "sf/rng.hpp"
#include "sf/tape.hpp"

namespace sf {

struct RayBatch {
    Array origins;  // [R,3]
    Array dirs;     // [R,3] unit
};

RayBatch generate_rays(const Camera& camera,
                       const std::vector<std::pair<std::size_t, std::size_t>>& pixels);

// Quadrature nodes along [near, far]. Without stratification samples sit at
// bin centers; stratified mode jitters one uniform draw per bin (consumed
// ray-major, bin-minor). Deltas are consecutive differences with the last
// delta wrapping both end caps so the segments always tile [near, far].
struct Samples {
    Array t;      // [R,S], strictly increasing per ray
    Array delta;  // [R,S], positive, sums to far - near per ray
};
Samples sample_along(std::size_t n_rays, std::size_t n_samples, double near, double far,
                     bool stratified, Rng& rng);

// positions [R*S,3] = origin + t * dir, and dirs repeated per sample.
Array sample_positions(const RayBatch& rays, const Array& t);
Array expand_dirs(const RayBatch& rays, std::size_t n_samples);

// alpha_i = 1 - exp(-sigma_i delta_i); T_i = exp(-sum_{j<i} sigma_j delta_j);
// w_i = T_i alpha_i; C = sum w_i c_i + (1 - sum w) * background;
// depth = sum w_i t_i / max(sum w, 1e-10). Negative densities are a contract
// violation and throw.
struct CompositePlain {
    Array color;    // [R,3]
    Array depth;    // [R]
    Array weights;  // [R,S]
    Array opacity;  // [R]
};
CompositePlain composite_plain(const Array& sigma, const Array& color, const Array& delta,
                               const Array& t, const Eigen::Vector3d& background);

struct CompositeTape {
    NodePtr color;
    NodePtr depth;
    NodePtr weights;
    NodePtr opacity;
};
CompositeTape composite(const NodePtr& sigma, const NodePtr& color, const Array& delta,
                        const Array& t, const Eigen::Vector3d& background);

// Plain per-point field evaluation: positions/dirs [P,3] -> (sigma [P,1], color [P,3]).
using PlainFieldFn =
    std::function<std::pair<Array, Array>(const Array& positions, const Array& dirs)>;

enum class RenderMode { Coarse, Hierarchical };

struct RenderedImage {
    Array image;    // [H,W,3]
    Array depth;    // [H,W]
    Array opacity;  // [H,W]
};

RenderedImage render_image(const PlainFieldFn& field, const Camera& camera, std::size_t ns,
                           std::uint64_t seed, bool stratified,
                           const Eigen::Vector3d& background, std::size_t chunk_rays = 512);

RenderedImage render_field(const HierarchicalField& field, RenderMode mode,
                           const Camera& camera, std::size_t ns, std::uint64_t seed,
                           bool stratified, const Eigen::Vector3d& background,
                           std::size_t chunk_rays = 512);

PlainFieldFn make_field_fn(const HierarchicalField& field, RenderMode mode);

}  // namespace sf
