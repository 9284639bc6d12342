#include "sf/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "sf/config.hpp"
#include "sf/errors.hpp"
#include "sf/kernels.hpp"

namespace sf {

WarpResult warp(const Array& image_a, const Array& depth_a, const Camera& cam_a,
                const Camera& cam_b, const Array& depth_b, double z_tol) {
    if (image_a.rank() != 3 || image_a.extent(2) != 3)
        fail("metrics", "warp: image must be [H,W,3]");
    const std::size_t h = image_a.extent(0), w = image_a.extent(1);
    if (depth_a.rank() != 2 || depth_a.extent(0) != h || depth_a.extent(1) != w)
        fail("metrics", "warp: depth_a shape " + shape_str(depth_a.shape()) +
                            " does not match image " + shape_str(image_a.shape()));
    const std::size_t hb = cam_b.height, wb = cam_b.width;
    if (depth_b.rank() != 2 || depth_b.extent(0) != hb || depth_b.extent(1) != wb)
        fail("metrics", "warp: depth_b shape does not match camera B");
    if (z_tol <= 0.0) fail("metrics", "warp: z_tol must be positive");

    Array acc(Shape{hb, wb, 3});
    Array wacc(Shape{hb, wb});

    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double t = depth_a[y * w + x];
            if (!std::isfinite(t) || t <= 0.0) continue;
            const Ray ray = cam_a.pixel_ray(x, y);
            const Eigen::Vector3d world = ray.origin + t * ray.dir;
            const Eigen::Vector3d proj = cam_b.project(world);
            if (!(proj.z() > 0.0)) continue;  // behind camera B
            const double tb = (world - cam_b.position()).norm();

            // Bilinear splat around pixel centers.
            const double sx = proj.x() - 0.5, sy = proj.y() - 0.5;
            const double fx0 = std::floor(sx), fy0 = std::floor(sy);
            const double wx = sx - fx0, wy = sy - fy0;
            const double* src = image_a.data() + (y * w + x) * 3;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double weight = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy);
                    if (weight <= 0.0) continue;
                    const double px = fx0 + dx, py = fy0 + dy;
                    if (px < 0 || py < 0 || px >= static_cast<double>(wb) ||
                        py >= static_cast<double>(hb))
                        continue;
                    const std::size_t ix = static_cast<std::size_t>(px);
                    const std::size_t iy = static_cast<std::size_t>(py);
                    const double db = depth_b[iy * wb + ix];
                    if (!std::isfinite(db) || std::abs(tb - db) > z_tol) continue;  // occluded
                    for (int c = 0; c < 3; ++c) acc[(iy * wb + ix) * 3 + c] += weight * src[c];
                    wacc[iy * wb + ix] += weight;
                }
        }

    WarpResult out{Array(Shape{hb, wb, 3}), Array(Shape{hb, wb}), 0.0};
    std::size_t valid = 0;
    for (std::size_t p = 0; p < hb * wb; ++p) {
        if (wacc[p] > 1e-12) {
            for (int c = 0; c < 3; ++c) out.image[p * 3 + c] = acc[p * 3 + c] / wacc[p];
            out.mask[p] = 1.0;
            ++valid;
        }
    }
    out.fraction_valid = static_cast<double>(valid) / static_cast<double>(hb * wb);
    return out;
}

double masked_rmse(const Array& img_a, const Array& img_b, const Array& mask) {
    if (!img_a.same_shape(img_b))
        fail("metrics", "masked_rmse: image shapes differ: " + shape_str(img_a.shape()) +
                            " vs " + shape_str(img_b.shape()));
    const std::size_t channels = img_a.rank() == 3 ? img_a.extent(2) : 1;
    const std::size_t pixels = img_a.size() / channels;
    if (mask.size() != pixels) fail("metrics", "masked_rmse: mask size mismatch");
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
        if (mask[p] == 0.0) continue;
        for (std::size_t c = 0; c < channels; ++c) {
            const double d = img_a[p * channels + c] - img_b[p * channels + c];
            acc += d * d;
        }
        ++count;
    }
    if (count == 0) fail("metrics", "masked_rmse: empty mask");
    return std::sqrt(acc / static_cast<double>(count * channels));
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

Array to_gray(const Array& img) {
    if (img.rank() == 2) return img;
    if (img.rank() != 3 || img.extent(2) != 3) fail("metrics", "ssim: image must be [H,W,3]");
    const std::size_t h = img.extent(0), w = img.extent(1);
    Array out(Shape{h, w});
    for (std::size_t p = 0; p < h * w; ++p)
        out[p] = 0.2126 * img[p * 3] + 0.7152 * img[p * 3 + 1] + 0.0722 * img[p * 3 + 2];
    return out;
}

const std::vector<double>& gaussian_window() {
    static const std::vector<double> window = [] {
        std::vector<double> w(kWindow * kWindow);
        const double sigma = 1.5;
        double sum = 0.0;
        for (std::size_t y = 0; y < kWindow; ++y)
            for (std::size_t x = 0; x < kWindow; ++x) {
                const double dx = static_cast<double>(x) - 5.0;
                const double dy = static_cast<double>(y) - 5.0;
                w[y * kWindow + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                sum += w[y * kWindow + x];
            }
        for (double& v : w) v /= sum;
        return w;
    }();
    return window;
}

}  // namespace

double ssim(const Array& img_a, const Array& img_b, const Array& mask) {
    if (!img_a.same_shape(img_b)) fail("metrics", "ssim: image shapes differ");
    Array a = to_gray(img_a), b = to_gray(img_b);
    const std::size_t h = a.extent(0), w = a.extent(1);
    if (h < kWindow || w < kWindow)
        fail("metrics", "ssim: image smaller than the 11x11 window");
    if (mask.size() != h * w) fail("metrics", "ssim: mask size mismatch");
    const std::vector<double>& win = gaussian_window();
    const std::size_t half = kWindow / 2;

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t cy = half; cy + half < h; ++cy)
        for (std::size_t cx = half; cx + half < w; ++cx) {
            if (mask[cy * w + cx] == 0.0) continue;
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (std::size_t wy = 0; wy < kWindow; ++wy)
                for (std::size_t wx = 0; wx < kWindow; ++wx) {
                    const double g = win[wy * kWindow + wx];
                    const double va = a[(cy - half + wy) * w + (cx - half + wx)];
                    const double vb = b[(cy - half + wy) * w + (cx - half + wx)];
                    mu_a += g * va;
                    mu_b += g * vb;
                    aa += g * va * va;
                    bb += g * vb * vb;
                    ab += g * va * vb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            const double s = ((2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2)) /
                             ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
            total += s;
            ++count;
        }
    if (count == 0) fail("metrics", "ssim: no valid windows under the mask");
    return total / static_cast<double>(count);
}

double ssim_full(const Array& img_a, const Array& img_b) {
    const std::size_t channels = img_a.rank() == 3 ? img_a.extent(2) : 1;
    return ssim(img_a, img_b, Array::full(Shape{img_a.size() / channels}, 1.0));
}

double psnr(const Array& img_a, const Array& img_b) {
    if (!img_a.same_shape(img_b)) fail("metrics", "psnr: image shapes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < img_a.size(); ++i) {
        const double d = img_a[i] - img_b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(img_a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double fpd_proxy(const FeatureExtractor& extractor, const Array& img_a, const Array& img_b,
                 const Array& mask) {
    if (!img_a.same_shape(img_b)) fail("metrics", "fpd: image shapes differ");
    Array fa = feature_rows(extractor.extract_plain(img_a));
    Array fb = feature_rows(extractor.extract_plain(img_b));
    const std::size_t h = img_a.extent(0), w = img_a.extent(1);
    const std::size_t fh = FeatureExtractor::feature_height(h);
    const std::size_t fw = FeatureExtractor::feature_height(w);

    // Coverage of each feature cell's 4x4 pixel footprint.
    Array cover(Shape{fh, fw});
    Array counts(Shape{fh, fw});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            cover[(y / 4) * fw + (x / 4)] += mask[y * w + x];
            counts[(y / 4) * fw + (x / 4)] += 1.0;
        }

    Array cos = kernels::cosine_rows(fa, fb, 1e-8);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t cell = 0; cell < fh * fw; ++cell) {
        if (cover[cell] < 0.5 * counts[cell]) continue;
        total += 1.0 - cos[cell];
        ++count;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::vector<std::pair<std::size_t, std::size_t>> adjacent_pairs(std::size_t n_views) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i + 1 < n_views; ++i) out.emplace_back(i, i + 1);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> offset_pairs(std::size_t n_views,
                                                              std::size_t offset) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (offset == 0 || offset >= n_views) return out;
    for (std::size_t i = 0; i + offset < n_views; ++i) out.emplace_back(i, i + offset);
    return out;
}

ConsistencyReport consistency_report(
    const std::vector<RenderView>& views,
    const std::vector<std::pair<std::size_t, std::size_t>>& short_pairs,
    const std::vector<std::pair<std::size_t, std::size_t>>& long_pairs, double z_tol,
    const FeatureExtractor& extractor) {
    if (views.size() < 2) fail("metrics", "consistency_report: need at least 2 views");
    ConsistencyReport report;
    std::size_t pair_id = 0;

    auto run_pairs = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                         const char* range) {
        for (const auto& [ia, ib] : pairs) {
            if (ia >= views.size() || ib >= views.size())
                fail("metrics", "consistency_report: pair index out of range");
            const RenderView& a = views[ia];
            const RenderView& b = views[ib];
            WarpResult warped = warp(a.image, a.depth, a.cam, b.cam, b.depth, z_tol);
            PairMetrics m;
            m.pair_id = pair_id++;
            m.range = range;
            m.rmse = masked_rmse(warped.image, b.image, warped.mask);
            m.ssim = ssim(warped.image, b.image, warped.mask);
            m.fpd = fpd_proxy(extractor, warped.image, b.image, warped.mask);
            report.pairs.push_back(m);
            if (m.range == "short") {
                report.short_rmse += m.rmse;
                report.short_ssim += m.ssim;
                report.short_fpd += m.fpd;
                ++report.short_count;
            } else {
                report.long_rmse += m.rmse;
                report.long_ssim += m.ssim;
                report.long_fpd += m.fpd;
                ++report.long_count;
            }
        }
    };
    run_pairs(short_pairs, "short");
    run_pairs(long_pairs, "long");

    if (report.short_count) {
        report.short_rmse /= static_cast<double>(report.short_count);
        report.short_ssim /= static_cast<double>(report.short_count);
        report.short_fpd /= static_cast<double>(report.short_count);
    }
    if (report.long_count) {
        report.long_rmse /= static_cast<double>(report.long_count);
        report.long_ssim /= static_cast<double>(report.long_count);
        report.long_fpd /= static_cast<double>(report.long_count);
    }
    return report;
}

std::string ConsistencyReport::table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %-6s %12s %12s %14s\n", "pair", "range", "RMSE",
                  "SSIM", "FPD (proxy)");
    os << line;
    for (const PairMetrics& m : pairs) {
        std::snprintf(line, sizeof(line), "%-8zu %-6s %12.6f %12.6f %14.6f\n", m.pair_id,
                      m.range.c_str(), m.rmse, m.ssim, m.fpd);
        os << line;
    }
    if (short_count) {
        std::snprintf(line, sizeof(line), "%-8s %-6s %12.6f %12.6f %14.6f\n", "mean", "short",
                      short_rmse, short_ssim, short_fpd);
        os << line;
    }
    if (long_count) {
        std::snprintf(line, sizeof(line), "%-8s %-6s %12.6f %12.6f %14.6f\n", "mean", "long",
                      long_rmse, long_ssim, long_fpd);
        os << line;
    }
    os << "FPD (proxy) is this project's feature-space distance; it is not comparable to "
          "LPIPS.\n";
    return os.str();
}

std::string ConsistencyReport::csv() const {
    std::ostringstream os;
    os << "pair_id,range,rmse,ssim,fpd\n";
    for (const PairMetrics& m : pairs)
        os << m.pair_id << "," << m.range << "," << format_double(m.rmse) << ","
           << format_double(m.ssim) << "," << format_double(m.fpd) << "\n";
    return os.str();
}

}  // namespace sf
