#include "sf/fields.hpp"

#include <cmath>

#include "sf/errors.hpp"
#include "sf/kernels.hpp"

namespace sf {

namespace k = kernels;

const double kDensityShift = std::log1p(1.0);  // softplus(0)

Linear::Linear(std::size_t in, std::size_t out, double weight_std, Rng& rng) {
    Array wv(Shape{in, out});
    for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = rng.normal(0.0, weight_std);
    w = param(std::move(wv));
    b = param(Array(Shape{out}));
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
    Linear l;
    l.w = param(Array(Shape{in, out}));
    l.b = param(Array(Shape{out}));
    return l;
}

Array Linear::plain(const Array& x) const {
    return k::binary(k::matmul(x, w->value), b->value, k::Binary::Add, "add");
}

namespace {

double he_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }
double head_std(std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); }

void check_pos_dirs(const Array& positions, const Array& dirs, const char* where) {
    if (positions.rank() != 2 || positions.extent(1) != 3)
        fail("fields", std::string(where) + ": positions must be [P,3], got " +
                           shape_str(positions.shape()));
    if (!dirs.same_shape(positions))
        fail("fields", std::string(where) + ": dirs shape " + shape_str(dirs.shape()) +
                           " does not match positions " + shape_str(positions.shape()));
    if (!positions.all_finite() || !dirs.all_finite())
        fail("fields", std::string(where) + ": non-finite inputs");
}

}  // namespace

CoarseField::CoarseField(const FieldDims& dims, const PositionalEncodingConfig& pe, Rng& rng)
    : dims_(dims), pe_(pe) {
    std::size_t in = pe_.output_dim();
    for (std::size_t l = 0; l < dims_.coarse_layers; ++l) {
        trunk_.emplace_back(in, dims_.coarse_width, he_std(in), rng);
        in = dims_.coarse_width;
    }
    density_ = Linear(in, 1, head_std(in), rng);
    feat_ = Linear(in, dims_.ec_dim, head_std(in), rng);
    color_hidden_ = Linear(dims_.ec_dim + 3, dims_.color_width, he_std(dims_.ec_dim + 3), rng);
    color_out_ = Linear(dims_.color_width, 3, head_std(dims_.color_width), rng);
}

CoarseOutputs CoarseField::eval(const Array& positions, const Array& dirs) const {
    check_pos_dirs(positions, dirs, "eval_coarse");
    NodePtr h = constant(positional_encode(positions, pe_));
    for (const Linear& layer : trunk_) h = relu(layer(h));
    NodePtr sigma = relu(add_scalar(softplus(density_(h)), -kDensityShift));
    NodePtr ec = feat_(h);
    NodePtr ch = relu(color_hidden_(concat({ec, constant(dirs)})));
    NodePtr color = sigmoid(color_out_(ch));
    return {sigma, ec, color};
}

CoarseOutputsPlain CoarseField::eval_plain(const Array& positions, const Array& dirs) const {
    check_pos_dirs(positions, dirs, "eval_coarse");
    Array h = positional_encode(positions, pe_);
    for (const Linear& layer : trunk_) h = k::relu(layer.plain(h));
    Array sigma = k::relu(k::add_scalar(k::softplus(density_.plain(h)), -kDensityShift));
    Array ec = feat_.plain(h);
    std::vector<const Array*> cat{&ec, &dirs};
    Array ch = k::relu(color_hidden_.plain(k::concat_last(cat)));
    Array color = k::sigmoid(color_out_.plain(ch));
    return {std::move(sigma), std::move(ec), std::move(color)};
}

std::vector<std::pair<std::string, NodePtr>> CoarseField::named_params() const {
    std::vector<std::pair<std::string, NodePtr>> out;
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
        out.emplace_back("coarse.trunk" + std::to_string(l) + ".w", trunk_[l].w);
        out.emplace_back("coarse.trunk" + std::to_string(l) + ".b", trunk_[l].b);
    }
    out.emplace_back("coarse.density.w", density_.w);
    out.emplace_back("coarse.density.b", density_.b);
    out.emplace_back("coarse.feat.w", feat_.w);
    out.emplace_back("coarse.feat.b", feat_.b);
    out.emplace_back("coarse.color0.w", color_hidden_.w);
    out.emplace_back("coarse.color0.b", color_hidden_.b);
    out.emplace_back("coarse.color1.w", color_out_.w);
    out.emplace_back("coarse.color1.b", color_out_.b);
    return out;
}

FineField::FineField(std::size_t input_dim, const FieldDims& dims, Rng& rng)
    : input_dim_(input_dim) {
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < dims.fine_layers; ++l) {
        trunk_.emplace_back(in, dims.fine_width, he_std(in), rng);
        in = dims.fine_width;
    }
    // Zero heads: a fresh stage 2 renders the coarse geometry.
    density_ = Linear::zeros(in, 1);
    color_ = Linear::zeros(in, 3);
}

FineOutputs FineField::eval(const NodePtr& input) const {
    if (input->value.rank() != 2 || input->value.extent(1) != input_dim_)
        fail("fields", "eval_fine: input dim " + shape_str(input->value.shape()) +
                           " does not match field input dim " + std::to_string(input_dim_));
    NodePtr h = input;
    for (const Linear& layer : trunk_) h = relu(layer(h));
    return {density_(h), sigmoid(color_(h))};
}

FineOutputsPlain FineField::eval_plain(const Array& input) const {
    if (input.rank() != 2 || input.extent(1) != input_dim_)
        fail("fields", "eval_fine: input dim " + shape_str(input.shape()) +
                           " does not match field input dim " + std::to_string(input_dim_));
    Array h = input;
    for (const Linear& layer : trunk_) h = k::relu(layer.plain(h));
    return {density_.plain(h), k::sigmoid(color_.plain(h))};
}

std::vector<std::pair<std::string, NodePtr>> FineField::named_params() const {
    std::vector<std::pair<std::string, NodePtr>> out;
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
        out.emplace_back("fine.trunk" + std::to_string(l) + ".w", trunk_[l].w);
        out.emplace_back("fine.trunk" + std::to_string(l) + ".b", trunk_[l].b);
    }
    out.emplace_back("fine.density.w", density_.w);
    out.emplace_back("fine.density.b", density_.b);
    out.emplace_back("fine.color.w", color_.w);
    out.emplace_back("fine.color.b", color_.b);
    return out;
}

std::size_t fine_input_dim(FineInput mode, const HashGridConfig& grid,
                           const PositionalEncodingConfig& fine_pe, std::size_t ec_dim) {
    switch (mode) {
        case FineInput::HashAndEc: return grid.output_dim() + ec_dim;
        case FineInput::PeAndEc: return fine_pe.output_dim() + ec_dim;
        case FineInput::EcOnly: return ec_dim;
    }
    return 0;
}

Array compose_density(const Array& sigma_c, const Array& sigma_res) {
    return k::relu(k::binary(sigma_c, sigma_res, k::Binary::Add, "compose_density"));
}

HierarchicalField::HierarchicalField(const FieldDims& dims,
                                     const PositionalEncodingConfig& coarse_pe,
                                     const HashGridConfig& grid_cfg,
                                     const PositionalEncodingConfig& fine_pe,
                                     FineInput fine_input, bool use_residual_density, Rng& rng)
    : dims_(dims),
      grid_cfg_(grid_cfg),
      fine_pe_(fine_pe),
      fine_input_(fine_input),
      use_residual_(use_residual_density),
      coarse_(dims, coarse_pe, rng),
      fine_(fine_input_dim(fine_input, grid_cfg, fine_pe, dims.ec_dim), dims, rng),
      grid_(grid_cfg, rng) {}

Array HierarchicalField::normalize_unit(const Array& world_pos) const {
    Array out(world_pos.shape());
    const std::size_t p = world_pos.extent(0);
    for (std::size_t i = 0; i < p; ++i)
        for (int c = 0; c < 3; ++c) {
            double v = (world_pos[i * 3 + c] - bounds.lo[c]) / (bounds.hi[c] - bounds.lo[c]);
            out[i * 3 + c] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
    return out;
}

Array HierarchicalField::normalize_sym(const Array& world_pos) const {
    Array out(world_pos.shape());
    const std::size_t p = world_pos.extent(0);
    for (std::size_t i = 0; i < p; ++i)
        for (int c = 0; c < 3; ++c)
            out[i * 3 + c] =
                2.0 * (world_pos[i * 3 + c] - bounds.lo[c]) / (bounds.hi[c] - bounds.lo[c]) - 1.0;
    return out;
}

CoarseOutputs HierarchicalField::eval_coarse(const Array& world_pos, const Array& dirs) const {
    return coarse_.eval(normalize_sym(world_pos), dirs);
}

CoarseOutputsPlain HierarchicalField::eval_coarse_plain(const Array& world_pos,
                                                        const Array& dirs) const {
    return coarse_.eval_plain(normalize_sym(world_pos), dirs);
}

NodePtr HierarchicalField::fine_encoding(const Array& world_pos, const NodePtr& ec) const {
    switch (fine_input_) {
        case FineInput::HashAndEc:
            return concat({hash_encode(normalize_unit(world_pos), grid_, grid_cfg_), ec});
        case FineInput::PeAndEc:
            return concat({constant(positional_encode(normalize_sym(world_pos), fine_pe_)), ec});
        case FineInput::EcOnly: return ec;
    }
    fail("fields", "unknown fine input mode");
}

Array HierarchicalField::fine_encoding_plain(const Array& world_pos, const Array& ec) const {
    switch (fine_input_) {
        case FineInput::HashAndEc: {
            Array enc = hash_encode_plain(normalize_unit(world_pos), grid_, grid_cfg_);
            std::vector<const Array*> parts{&enc, &ec};
            return k::concat_last(parts);
        }
        case FineInput::PeAndEc: {
            Array enc = positional_encode(normalize_sym(world_pos), fine_pe_);
            std::vector<const Array*> parts{&enc, &ec};
            return k::concat_last(parts);
        }
        case FineInput::EcOnly: return ec;
    }
    fail("fields", "unknown fine input mode");
}

FineOutputs HierarchicalField::eval_fine(const Array& world_pos, const NodePtr& ec) const {
    if (ec->value.extent(0) != world_pos.extent(0))
        fail("fields", "eval_fine: e_c rows " + std::to_string(ec->value.extent(0)) +
                           " do not match positions " + std::to_string(world_pos.extent(0)));
    return fine_.eval(fine_encoding(world_pos, ec));
}

FineOutputsPlain HierarchicalField::eval_fine_plain(const Array& world_pos,
                                                    const Array& ec) const {
    if (ec.extent(0) != world_pos.extent(0))
        fail("fields", "eval_fine: e_c rows " + std::to_string(ec.extent(0)) +
                           " do not match positions " + std::to_string(world_pos.extent(0)));
    return fine_.eval_plain(fine_encoding_plain(world_pos, ec));
}

HierarchicalOutputsPlain HierarchicalField::eval_hierarchical_plain(const Array& world_pos,
                                                                    const Array& dirs) const {
    CoarseOutputsPlain c = eval_coarse_plain(world_pos, dirs);
    FineOutputsPlain f = eval_fine_plain(world_pos, c.ec);
    Array sigma_f = use_residual_ ? compose_density(c.sigma, f.sigma_res) : c.sigma;
    return {std::move(sigma_f), std::move(f.color), std::move(c.sigma), std::move(c.color)};
}

HierarchicalField::FineRender HierarchicalField::eval_hierarchical_tape(const Array& world_pos,
                                                                        const Array& sigma_c,
                                                                        const Array& ec) const {
    FineOutputs f = eval_fine(world_pos, constant(ec));
    NodePtr sigma_f = use_residual_ ? relu(add(constant(sigma_c), f.sigma_res))
                                    : constant(sigma_c);
    return {sigma_f, f.color};
}

std::vector<std::pair<std::string, NodePtr>> HierarchicalField::coarse_params() const {
    return coarse_.named_params();
}

std::vector<std::pair<std::string, NodePtr>> HierarchicalField::style_params() const {
    auto out = fine_.named_params();
    for (auto& p : grid_.named_params()) out.push_back(std::move(p));
    return out;
}

std::vector<std::pair<std::string, NodePtr>> HierarchicalField::all_params() const {
    auto out = coarse_params();
    for (auto& p : style_params()) out.push_back(std::move(p));
    return out;
}

NamedArrays HierarchicalField::snapshot(
    const std::vector<std::pair<std::string, NodePtr>>& params) const {
    NamedArrays out;
    out.reserve(params.size());
    for (const auto& [name, node] : params) out.emplace_back(name, node->value);
    return out;
}

void HierarchicalField::load_params(const NamedArrays& arrays, const std::string& prefix_filter) {
    auto params = all_params();
    std::size_t loaded = 0;
    for (const auto& [name, value] : arrays) {
        if (!prefix_filter.empty() && name.rfind(prefix_filter, 0) != 0) continue;
        bool found = false;
        for (auto& [pname, node] : params) {
            if (pname != name) continue;
            if (!(node->value.shape() == value.shape()))
                fail("fields", "checkpoint array " + name + " has shape " +
                                   shape_str(value.shape()) + ", field expects " +
                                   shape_str(node->value.shape()));
            node->value = value;
            found = true;
            ++loaded;
            break;
        }
        if (!found) fail("fields", "checkpoint contains unknown parameter " + name);
    }
    if (loaded == 0)
        fail("fields", "checkpoint holds no parameters matching '" + prefix_filter + "'");
}

}  // namespace sf
