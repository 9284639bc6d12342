#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/features.hpp"
#include "sf/tape.hpp"

namespace sf {

// Content-strength annealing: lambda = lambda0 * alpha^(t/T) for t <= T,
// constant lambda0 * alpha afterwards. t/T is real division (smooth decay).
struct AnnealSchedule {
    double lambda0 = 10.0;
    double alpha = 0.01;
    std::int64_t T = 100;
};

double lambda_at(const AnnealSchedule& schedule, std::int64_t t);

// Mean over rays of the squared L2 color error.
NodePtr recon_loss(const NodePtr& rendered, const Array& ground_truth);

// Mean squared difference over every feature-map element. With `normalized`
// the vectors are L2-normalized per location first.
NodePtr content_loss(const NodePtr& rendered_feat, const Array& content_feat,
                     bool normalized = false);

// Mean nearest-neighbor cosine distance against the style rows. The match
// indices are recomputed from the current values and held constant for
// differentiation.
struct StyleLoss {
    NodePtr loss;
    std::vector<std::uint32_t> matches;
};
StyleLoss style_loss(const NodePtr& rendered_rows, const Array& style_rows);

NodePtr total_loss(const NodePtr& content, const NodePtr& style, double lambda);

struct LossReport {
    std::int64_t iter = 0;
    double lambda = 0;
    double recon = 0;
    double content = 0;
    double style = 0;
    double total = 0;

    std::string line() const;  // "iter=.. lambda=.. recon=.. content=.. style=.. total=.."
};

LossReport parse_loss_line(const std::string& line);

// Newline-delimited append-only trace, one record per step.
void append_loss_log(const std::string& path, const LossReport& report);
std::vector<LossReport> read_loss_log(const std::string& path);

}  // namespace sf
