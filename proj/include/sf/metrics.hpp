#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sf/camera.hpp"
#include "sf/features.hpp"

namespace sf {

// Depth-based forward warp of view A into view B's frame: unproject each A
// pixel along its ray by depth_A, reproject into B, bilinear-splat, and keep
// contributions whose B-ray distance matches depth_B within z_tol. Source
// pixels with non-finite or non-positive depth are skipped.
struct WarpResult {
    Array image;            // [H,W,3], zero where invalid
    Array mask;             // [H,W] in {0,1}
    double fraction_valid;  // mean of mask
};
WarpResult warp(const Array& image_a, const Array& depth_a, const Camera& cam_a,
                const Camera& cam_b, const Array& depth_b, double z_tol);

// sqrt of the mean squared difference over masked pixels (all channels).
double masked_rmse(const Array& img_a, const Array& img_b, const Array& mask);

// Grayscale SSIM (Y = 0.2126R + 0.7152G + 0.0722B, L = 1) with an 11x11
// Gaussian window, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2. The map is computed
// on windows fully inside the image and averaged over mask-true centers.
double ssim(const Array& img_a, const Array& img_b, const Array& mask);
double ssim_full(const Array& img_a, const Array& img_b);  // all-ones mask

// 10 log10(1 / MSE) at unit range; +inf when the images are identical.
double psnr(const Array& img_a, const Array& img_b);

// FPD (proxy): mean cosine feature distance between the two images over
// feature cells whose 4x4 pixel footprint is at least half mask-covered.
// A stand-in for LPIPS, not comparable to it.
double fpd_proxy(const FeatureExtractor& extractor, const Array& img_a, const Array& img_b,
                 const Array& mask);

struct RenderView {
    Array image;  // [H,W,3]
    Array depth;  // [H,W]
    Camera cam;
};

struct PairMetrics {
    std::size_t pair_id;
    std::string range;  // "short" | "long"
    double rmse, ssim, fpd;
};

struct ConsistencyReport {
    std::vector<PairMetrics> pairs;
    double short_rmse = 0, short_ssim = 0, short_fpd = 0;
    double long_rmse = 0, long_ssim = 0, long_fpd = 0;
    std::size_t short_count = 0, long_count = 0;

    std::string table() const;  // aligned text, labels the FPD (proxy) column
    std::string csv() const;    // header: pair_id,range,rmse,ssim,fpd
};

// Short-range pairs are adjacent poses on the evaluation path; long-range
// pairs sit `long_offset` apart (wrapping). z_tol = ztol_frac * scene
// diameter is supplied by the caller.
ConsistencyReport consistency_report(const std::vector<RenderView>& views,
                                     const std::vector<std::pair<std::size_t, std::size_t>>&
                                         short_pairs,
                                     const std::vector<std::pair<std::size_t, std::size_t>>&
                                         long_pairs,
                                     double z_tol, const FeatureExtractor& extractor);

std::vector<std::pair<std::size_t, std::size_t>> adjacent_pairs(std::size_t n_views);
std::vector<std::pair<std::size_t, std::size_t>> offset_pairs(std::size_t n_views,
                                                              std::size_t offset);

}  // namespace sf
