#include "sf/renderer.hpp"

#include <cassert>
#include <cmath>

#include "sf/errors.hpp"
#include "sf/kernels.hpp"

namespace sf {

namespace k = kernels;

RayBatch generate_rays(const Camera& camera,
                       const std::vector<std::pair<std::size_t, std::size_t>>& pixels) {
    RayBatch batch{Array(Shape{pixels.size(), 3}), Array(Shape{pixels.size(), 3})};
    for (std::size_t r = 0; r < pixels.size(); ++r) {
        const Ray ray = camera.pixel_ray(pixels[r].first, pixels[r].second);
        for (int c = 0; c < 3; ++c) {
            batch.origins[r * 3 + c] = ray.origin[c];
            batch.dirs[r * 3 + c] = ray.dir[c];
        }
    }
    return batch;
}

Samples sample_along(std::size_t n_rays, std::size_t n_samples, double near, double far,
                     bool stratified, Rng& rng) {
    if (n_samples < 2) fail("renderer", "sample_along: need at least 2 samples");
    if (!(near < far)) fail("renderer", "sample_along: need near < far");
    const double bw = (far - near) / static_cast<double>(n_samples);
    Samples s{Array(Shape{n_rays, n_samples}), Array(Shape{n_rays, n_samples})};
    for (std::size_t r = 0; r < n_rays; ++r) {
        double* t = s.t.data() + r * n_samples;
        double* d = s.delta.data() + r * n_samples;
        for (std::size_t i = 0; i < n_samples; ++i) {
            const double u = stratified ? rng.uniform() : 0.5;
            t[i] = near + (static_cast<double>(i) + u) * bw;
        }
        for (std::size_t i = 0; i + 1 < n_samples; ++i) d[i] = t[i + 1] - t[i];
        // Last segment wraps both end caps so the deltas tile [near, far]
        // exactly; a homogeneous medium then integrates to 1 - exp(-sigma D).
        d[n_samples - 1] = (far - t[n_samples - 1]) + (t[0] - near);
    }
    return s;
}

Array sample_positions(const RayBatch& rays, const Array& t) {
    const std::size_t r_count = t.extent(0), s_count = t.extent(1);
    Array out(Shape{r_count * s_count, 3});
    for (std::size_t r = 0; r < r_count; ++r)
        for (std::size_t s = 0; s < s_count; ++s) {
            const double tv = t[r * s_count + s];
            for (int c = 0; c < 3; ++c)
                out[(r * s_count + s) * 3 + c] =
                    rays.origins[r * 3 + c] + tv * rays.dirs[r * 3 + c];
        }
    return out;
}

Array expand_dirs(const RayBatch& rays, std::size_t n_samples) {
    const std::size_t r_count = rays.dirs.extent(0);
    Array out(Shape{r_count * n_samples, 3});
    for (std::size_t r = 0; r < r_count; ++r)
        for (std::size_t s = 0; s < n_samples; ++s)
            for (int c = 0; c < 3; ++c)
                out[(r * n_samples + s) * 3 + c] = rays.dirs[r * 3 + c];
    return out;
}

namespace {

constexpr double kDepthEps = 1e-10;

void check_nonnegative_sigma(const Array& sigma) {
    for (std::size_t i = 0; i < sigma.size(); ++i)
        if (sigma[i] < 0.0)
            fail("renderer", "composite: negative density violates the field contract");
}

bool composite_invariants_hold(const Array& weights, const Array& opacity) {
    const std::size_t r_count = weights.extent(0), s_count = weights.extent(1);
    for (std::size_t r = 0; r < r_count; ++r) {
        double wsum = 0.0;
        for (std::size_t i = 0; i < s_count; ++i) {
            const double w = weights[r * s_count + i];
            if (w < -1e-12 || w > 1.0 + 1e-12) return false;
            wsum += w;
        }
        if (wsum > 1.0 + 1e-9) return false;
        if (std::abs(wsum - opacity[r]) > 1e-9) return false;
    }
    return true;
}

bool transmittance_nonincreasing(const Array& sigdelta) {
    const std::size_t r_count = sigdelta.extent(0), s_count = sigdelta.extent(1);
    for (std::size_t r = 0; r < r_count; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s_count; ++i) {
            const double prev = acc;
            acc += sigdelta[r * s_count + i];
            if (acc + 1e-15 < prev) return false;  // exp(-acc) must not increase
        }
    }
    return true;
}

}  // namespace

CompositePlain composite_plain(const Array& sigma, const Array& color, const Array& delta,
                               const Array& t, const Eigen::Vector3d& background) {
    if (sigma.rank() != 2 || !sigma.same_shape(delta) || !sigma.same_shape(t))
        fail("renderer", "composite: sigma/delta/t must share shape [R,S]");
    if (color.rank() != 3 || color.extent(0) != sigma.extent(0) ||
        color.extent(1) != sigma.extent(1) || color.extent(2) != 3)
        fail("renderer", "composite: color must be [R,S,3], got " + shape_str(color.shape()));
    check_nonnegative_sigma(sigma);

    const std::size_t r_count = sigma.extent(0);
    Array sigdelta = k::binary(sigma, delta, k::Binary::Mul, "composite");
    Array trans = k::exp(k::neg(k::cumsum_exclusive_last(sigdelta)));
    Array alpha = k::neg(k::add_scalar(k::exp(k::neg(sigdelta)), -1.0));  // 1 - exp(-sd)
    Array weights = k::binary(trans, alpha, k::Binary::Mul, "composite");
    Array opacity = k::sum_axis(weights, 1, false);

    Shape w3{sigma.extent(0), sigma.extent(1), 1};
    Array wcol = k::sum_axis(k::binary(weights.reshaped(w3), color, k::Binary::Mul, "composite"),
                             1, false);
    Array out_color(Shape{r_count, 3});
    for (std::size_t r = 0; r < r_count; ++r)
        for (int c = 0; c < 3; ++c)
            out_color[r * 3 + c] = wcol[r * 3 + c] + (1.0 - opacity[r]) * background[c];

    Array wt = k::sum_axis(k::binary(weights, t, k::Binary::Mul, "composite"), 1, false);
    Array depth(Shape{r_count});
    for (std::size_t r = 0; r < r_count; ++r)
        depth[r] = wt[r] / std::max(opacity[r], kDepthEps);

    assert(composite_invariants_hold(weights, opacity));
    assert(transmittance_nonincreasing(sigdelta));
    return {std::move(out_color), std::move(depth), std::move(weights), std::move(opacity)};
}

CompositeTape composite(const NodePtr& sigma, const NodePtr& color, const Array& delta,
                        const Array& t, const Eigen::Vector3d& background) {
    if (sigma->value.rank() != 2 || !sigma->value.same_shape(delta) ||
        !sigma->value.same_shape(t))
        fail("renderer", "composite: sigma/delta/t must share shape [R,S]");
    check_nonnegative_sigma(sigma->value);

    const std::size_t r_count = sigma->value.extent(0), s_count = sigma->value.extent(1);
    NodePtr sigdelta = mul(sigma, constant(delta));
    NodePtr trans = sf::exp(neg(cumsum_exclusive_last(sigdelta)));
    NodePtr alpha = neg(add_scalar(sf::exp(neg(sigdelta)), -1.0));
    NodePtr weights = mul(trans, alpha);
    NodePtr opacity = sum_axis(weights, 1, false);

    NodePtr w3 = reshape(weights, Shape{r_count, s_count, 1});
    NodePtr wcol = sum_axis(mul(w3, color), 1, false);
    Array bg(Shape{3});
    for (int c = 0; c < 3; ++c) bg[c] = background[c];
    NodePtr transmitted = reshape(neg(add_scalar(opacity, -1.0)), Shape{r_count, 1});
    NodePtr out_color = add(wcol, mul(transmitted, constant(bg)));

    NodePtr wt = sum_axis(mul(weights, constant(t)), 1, false);
    // max(opacity, eps) = relu(opacity - eps) + eps, exact for opacity >= 0
    NodePtr guard = add_scalar(relu(add_scalar(opacity, -kDepthEps)), kDepthEps);
    NodePtr depth = div(wt, guard);

    assert(composite_invariants_hold(weights->value, opacity->value));
    return {out_color, depth, weights, opacity};
}

PlainFieldFn make_field_fn(const HierarchicalField& field, RenderMode mode) {
    if (mode == RenderMode::Coarse)
        return [&field](const Array& pos, const Array& dirs) {
            CoarseOutputsPlain out = field.eval_coarse_plain(pos, dirs);
            return std::make_pair(std::move(out.sigma), std::move(out.color));
        };
    return [&field](const Array& pos, const Array& dirs) {
        HierarchicalOutputsPlain out = field.eval_hierarchical_plain(pos, dirs);
        return std::make_pair(std::move(out.sigma_f), std::move(out.color_f));
    };
}

RenderedImage render_image(const PlainFieldFn& field, const Camera& camera, std::size_t ns,
                           std::uint64_t seed, bool stratified,
                           const Eigen::Vector3d& background, std::size_t chunk_rays) {
    camera.validate();
    if (!std::isfinite(background.sum())) fail("renderer", "render_image: non-finite background");
    const std::size_t w = camera.width, h = camera.height;
    RenderedImage out{Array(Shape{h, w, 3}), Array(Shape{h, w}), Array(Shape{h, w})};
    Rng rng(seed);

    std::vector<std::pair<std::size_t, std::size_t>> pixels;
    pixels.reserve(chunk_rays);
    std::size_t flat = 0;
    while (flat < w * h) {
        pixels.clear();
        const std::size_t chunk_end = std::min(flat + chunk_rays, w * h);
        for (std::size_t p = flat; p < chunk_end; ++p) pixels.emplace_back(p % w, p / w);

        RayBatch rays = generate_rays(camera, pixels);
        Samples samples = sample_along(pixels.size(), ns, camera.near, camera.far, stratified, rng);
        Array pos = sample_positions(rays, samples.t);
        Array dirs = expand_dirs(rays, ns);
        auto [sigma, color] = field(pos, dirs);
        CompositePlain comp =
            composite_plain(sigma.reshaped(Shape{pixels.size(), ns}),
                            color.reshaped(Shape{pixels.size(), ns, 3}), samples.delta,
                            samples.t, background);
        for (std::size_t r = 0; r < pixels.size(); ++r) {
            for (int c = 0; c < 3; ++c) out.image[(flat + r) * 3 + c] = comp.color[r * 3 + c];
            out.depth[flat + r] = comp.depth[r];
            out.opacity[flat + r] = comp.opacity[r];
        }
        flat = chunk_end;
    }
    return out;
}

RenderedImage render_field(const HierarchicalField& field, RenderMode mode,
                           const Camera& camera, std::size_t ns, std::uint64_t seed,
                           bool stratified, const Eigen::Vector3d& background,
                           std::size_t chunk_rays) {
    return render_image(make_field_fn(field, mode), camera, ns, seed, stratified, background,
                        chunk_rays);
}

}  // namespace sf
