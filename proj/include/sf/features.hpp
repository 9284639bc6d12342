#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/tape.hpp"

namespace sf {

inline constexpr std::uint64_t kExtractorSeed = 0xC0FFEE;

// Fixed convolutional feature extractor:
//   conv3x3(3->32) relu, conv3x3(32->32) relu, avgpool2,
//   conv3x3(32->64) relu, conv3x3(64->64) relu, avgpool2,
//   conv3x3(64->128) relu
// Output is 1/4 resolution with 128 channels. Weights are immutable after
// construction; the forward pass is differentiable w.r.t. the input image
// only. Weights ship in an "SFFX" file so installations agree bit-exactly;
// real conv weights can be imported through the same container.
class FeatureExtractor {
public:
    static FeatureExtractor generate(std::uint64_t seed = kExtractorSeed);
    static FeatureExtractor from_file(const std::string& path);
    void save(const std::string& path) const;

    // image: [H,W,3], H,W >= 8, values in [0,1] (within 1e-6).
    NodePtr extract(const NodePtr& image) const;
    Array extract_plain(const Array& image) const;

    static std::size_t channels() { return 128; }
    static std::size_t feature_height(std::size_t h) { return (h + 3) / 4; }

private:
    FeatureExtractor() = default;
    struct Conv {
        NodePtr w;  // [3,3,cin,cout], constant
        NodePtr b;  // [cout], constant
    };
    std::vector<Conv> convs_;
};

// [H',W',D] feature map flattened to [H'*W', D] rows.
Array feature_rows(const Array& fmap);

// Nearest style row per rendered row under cosine distance
// D = 1 - <f,s>/(|f||s| + 1e-8); ties break to the smallest style index.
struct NnMatches {
    std::vector<std::uint32_t> indices;  // per rendered row
    Array distances;                     // [N], in [0,2]
};
NnMatches nn_match(const Array& rendered_rows, const Array& style_rows);

}  // namespace sf
