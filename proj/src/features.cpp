#include "sf/features.hpp"

#include <Eigen/Core>
#include <cmath>

#include "sf/checkpoint.hpp"
#include "sf/errors.hpp"
#include "sf/kernels.hpp"
#include "sf/rng.hpp"

namespace sf {

namespace k = kernels;

namespace {

constexpr std::size_t kLayerIn[5] = {3, 32, 32, 64, 64};
constexpr std::size_t kLayerOut[5] = {32, 32, 64, 64, 128};
// avgpool after layers 1 and 3 (0-based)
constexpr bool kPoolAfter[5] = {false, true, false, true, false};

void check_image(const Array& image) {
    if (image.rank() != 3 || image.extent(2) != 3)
        fail("features", "extract: image must be [H,W,3], got " + shape_str(image.shape()));
    if (image.extent(0) < 8 || image.extent(1) < 8)
        fail("features", "extract: image must be at least 8x8");
    for (std::size_t i = 0; i < image.size(); ++i)
        if (!(image[i] >= -1e-6 && image[i] <= 1.0 + 1e-6))
            fail("features", "extract: image values must lie in [0,1]");
}

}  // namespace

FeatureExtractor FeatureExtractor::generate(std::uint64_t seed) {
    FeatureExtractor fx;
    Rng rng(seed);
    for (int l = 0; l < 5; ++l) {
        const std::size_t cin = kLayerIn[l], cout = kLayerOut[l];
        Array w(Shape{3, 3, cin, cout});
        const double std_dev = std::sqrt(2.0 / (9.0 * static_cast<double>(cin)));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std_dev);
        fx.convs_.push_back({constant(std::move(w)), constant(Array(Shape{cout}))});
    }
    return fx;
}

FeatureExtractor FeatureExtractor::from_file(const std::string& path) {
    NamedArrays arrays = load_named_arrays(path, kExtractorMagic);
    FeatureExtractor fx;
    for (int l = 0; l < 5; ++l) {
        const std::string wn = "conv" + std::to_string(l) + ".w";
        const std::string bn = "conv" + std::to_string(l) + ".b";
        Array w, b;
        bool got_w = false, got_b = false;
        for (const auto& [name, arr] : arrays) {
            if (name == wn) w = arr, got_w = true;
            if (name == bn) b = arr, got_b = true;
        }
        if (!got_w || !got_b)
            fail("features", "extractor file " + path + " is missing " + wn + " or " + bn);
        const Shape want{3, 3, kLayerIn[l], kLayerOut[l]};
        if (!(w.shape() == want) || b.size() != kLayerOut[l])
            fail("features", "extractor file " + path + " has wrong shape for layer " +
                                 std::to_string(l));
        fx.convs_.push_back({constant(std::move(w)), constant(std::move(b))});
    }
    return fx;
}

void FeatureExtractor::save(const std::string& path) const {
    NamedArrays arrays;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        arrays.emplace_back("conv" + std::to_string(l) + ".w", convs_[l].w->value);
        arrays.emplace_back("conv" + std::to_string(l) + ".b", convs_[l].b->value);
    }
    save_named_arrays(path, arrays, kExtractorMagic);
}

NodePtr FeatureExtractor::extract(const NodePtr& image) const {
    check_image(image->value);
    NodePtr h = image;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        h = relu(conv2d(h, convs_[l].w, convs_[l].b));
        if (kPoolAfter[l]) h = avgpool2(h);
    }
    return h;
}

Array FeatureExtractor::extract_plain(const Array& image) const {
    check_image(image);
    Array h = image;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        h = k::relu(k::conv2d(h, convs_[l].w->value, convs_[l].b->value));
        if (kPoolAfter[l]) h = k::avgpool2(h);
    }
    return h;
}

Array feature_rows(const Array& fmap) {
    if (fmap.rank() != 3) fail("features", "feature_rows: expected [H,W,D]");
    return fmap.reshaped(Shape{fmap.extent(0) * fmap.extent(1), fmap.extent(2)});
}

NnMatches nn_match(const Array& rendered_rows, const Array& style_rows) {
    if (rendered_rows.rank() != 2 || style_rows.rank() != 2)
        fail("features", "nn_match: inputs must be [N,D] and [M,D]");
    if (rendered_rows.extent(1) != style_rows.extent(1))
        fail("features", "nn_match: channel dims differ: " + shape_str(rendered_rows.shape()) +
                             " vs " + shape_str(style_rows.shape()));
    const std::size_t n = rendered_rows.extent(0);
    const std::size_t m_count = style_rows.extent(0);
    const std::size_t d = rendered_rows.extent(1);
    if (m_count == 0) fail("features", "nn_match: empty style feature map");
    constexpr double kEps = 1e-8;

    std::vector<double> rnorm(n), snorm(m_count);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* p = rendered_rows.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) acc += p[j] * p[j];
        rnorm[i] = std::sqrt(acc);
    }
    for (std::size_t i = 0; i < m_count; ++i) {
        double acc = 0.0;
        const double* p = style_rows.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) acc += p[j] * p[j];
        snorm[i] = std::sqrt(acc);
    }

    NnMatches out;
    out.indices.resize(n);
    out.distances = Array(Shape{n});

    using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const MatRM> fr(rendered_rows.data(), static_cast<Eigen::Index>(n),
                               static_cast<Eigen::Index>(d));
    Eigen::Map<const MatRM> sr(style_rows.data(), static_cast<Eigen::Index>(m_count),
                               static_cast<Eigen::Index>(d));

    const std::size_t block = 256;
    MatRM dots;
    for (std::size_t r0 = 0; r0 < n; r0 += block) {
        const std::size_t rows = std::min(block, n - r0);
        dots.noalias() = fr.middleRows(static_cast<Eigen::Index>(r0),
                                       static_cast<Eigen::Index>(rows)) *
                         sr.transpose();
        for (std::size_t i = 0; i < rows; ++i) {
            double best = 3.0;  // distances live in [0,2]
            std::uint32_t best_j = 0;
            for (std::size_t j = 0; j < m_count; ++j) {
                const double dist = 1.0 - dots(static_cast<Eigen::Index>(i),
                                               static_cast<Eigen::Index>(j)) /
                                              (rnorm[r0 + i] * snorm[j] + kEps);
                if (dist < best) {
                    best = dist;
                    best_j = static_cast<std::uint32_t>(j);
                }
            }
            out.indices[r0 + i] = best_j;
            out.distances[r0 + i] = best;
        }
    }
    return out;
}

}  // namespace sf
