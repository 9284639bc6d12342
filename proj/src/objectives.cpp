#include "sf/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sf/config.hpp"
#include "sf/errors.hpp"

namespace sf {

double lambda_at(const AnnealSchedule& schedule, std::int64_t t) {
    if (!(schedule.lambda0 > 0.0)) fail("objectives", "anneal: lambda0 must be positive");
    if (!(schedule.alpha > 0.0 && schedule.alpha <= 1.0))
        fail("objectives", "anneal: alpha must lie in (0,1]");
    if (schedule.T < 1) fail("objectives", "anneal: T must be >= 1");
    if (t < 0) fail("objectives", "anneal: t must be >= 0");
    if (t > schedule.T) return schedule.lambda0 * schedule.alpha;
    const double exponent = static_cast<double>(t) / static_cast<double>(schedule.T);
    return schedule.lambda0 * std::pow(schedule.alpha, exponent);
}

NodePtr recon_loss(const NodePtr& rendered, const Array& ground_truth) {
    if (!rendered->value.same_shape(ground_truth))
        fail("objectives", "recon_loss: rendered " + shape_str(rendered->value.shape()) +
                               " vs ground truth " + shape_str(ground_truth.shape()));
    if (rendered->value.rank() != 2)
        fail("objectives", "recon_loss: expected [R,C] color rows");
    const double inv_rays = 1.0 / static_cast<double>(rendered->value.extent(0));
    NodePtr d = sub(rendered, constant(ground_truth));
    return scale(sum_all(mul(d, d)), inv_rays);
}

namespace {

NodePtr normalize_rows(const NodePtr& rows) {
    NodePtr n2 = sum_axis(mul(rows, rows), 1, true);
    return div(rows, add_scalar(sqrt(n2), 1e-8));
}

}  // namespace

NodePtr content_loss(const NodePtr& rendered_feat, const Array& content_feat, bool normalized) {
    if (!rendered_feat->value.same_shape(content_feat))
        fail("objectives", "content_loss: feature shapes differ: " +
                               shape_str(rendered_feat->value.shape()) + " vs " +
                               shape_str(content_feat.shape()));
    if (!normalized) {
        NodePtr d = sub(rendered_feat, constant(content_feat));
        return mean_all(mul(d, d));
    }
    const Array& f = rendered_feat->value;
    const Shape rows_shape{f.size() / f.shape().back(), f.shape().back()};
    NodePtr fr = normalize_rows(reshape(rendered_feat, rows_shape));
    NodePtr cr = normalize_rows(constant(content_feat.reshaped(rows_shape)));
    NodePtr d = sub(fr, cr);
    return mean_all(mul(d, d));
}

StyleLoss style_loss(const NodePtr& rendered_rows, const Array& style_rows) {
    NnMatches matches = nn_match(rendered_rows->value, style_rows);
    Array gathered(Shape{matches.indices.size(), style_rows.extent(1)});
    const std::size_t d = style_rows.extent(1);
    for (std::size_t i = 0; i < matches.indices.size(); ++i)
        std::copy(style_rows.data() + matches.indices[i] * d,
                  style_rows.data() + (matches.indices[i] + 1) * d, gathered.data() + i * d);
    NodePtr cos = cosine_rows(rendered_rows, constant(gathered), 1e-8);
    // mean distance = 1 - mean cosine
    NodePtr loss = add_scalar(neg(mean_all(cos)), 1.0);
    return {loss, std::move(matches.indices)};
}

NodePtr total_loss(const NodePtr& content, const NodePtr& style, double lambda) {
    if (lambda < 0.0) fail("objectives", "total_loss: lambda must be >= 0");
    return add(scale(content, lambda), style);
}

std::string LossReport::line() const {
    std::string out = "iter=" + std::to_string(iter);
    out += " lambda=" + format_double(lambda);
    out += " recon=" + format_double(recon);
    out += " content=" + format_double(content);
    out += " style=" + format_double(style);
    out += " total=" + format_double(total);
    return out;
}

LossReport parse_loss_line(const std::string& line) {
    LossReport r;
    int fields = 0;
    std::size_t pos = 0;
    while (pos < line.size()) {
        const auto eq = line.find('=', pos);
        if (eq == std::string::npos) break;
        const std::string key = line.substr(pos, eq - pos);
        auto end = line.find(' ', eq + 1);
        if (end == std::string::npos) end = line.size();
        const std::string value = line.substr(eq + 1, end - (eq + 1));
        if (key == "iter")
            r.iter = std::strtoll(value.c_str(), nullptr, 10), ++fields;
        else if (key == "lambda")
            r.lambda = std::strtod(value.c_str(), nullptr), ++fields;
        else if (key == "recon")
            r.recon = std::strtod(value.c_str(), nullptr), ++fields;
        else if (key == "content")
            r.content = std::strtod(value.c_str(), nullptr), ++fields;
        else if (key == "style")
            r.style = std::strtod(value.c_str(), nullptr), ++fields;
        else if (key == "total")
            r.total = std::strtod(value.c_str(), nullptr), ++fields;
        pos = end + 1;
    }
    if (fields != 6) fail("objectives", "loss log line is malformed: " + line);
    return r;
}

void append_loss_log(const std::string& path, const LossReport& report) {
    std::ofstream out(path, std::ios::app);
    if (!out) fail("objectives", "cannot append to loss log " + path);
    out << report.line() << "\n";
}

std::vector<LossReport> read_loss_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("objectives", "cannot open loss log " + path);
    std::vector<LossReport> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(parse_loss_line(line));
    return out;
}

}  // namespace sf
