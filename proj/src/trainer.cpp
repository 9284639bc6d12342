#include "sf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "sf/adam.hpp"
#include "sf/errors.hpp"
#include "sf/kernels.hpp"

namespace sf {

namespace fs = std::filesystem;
namespace k = kernels;

AblationSpec ablation_mode(const std::vector<std::string>& flags) {
    AblationSpec spec;
    bool have_encoding = false;
    for (const std::string& flag : flags) {
        if (flag == "no-residual-density") {
            spec.use_residual = false;
        } else if (flag == "pe-instead-of-hash" || flag == "ec-only") {
            if (have_encoding)
                fail("trainer", "ablation flags conflict: only one encoding variant may be set");
            have_encoding = true;
            spec.fine_input = flag == "ec-only" ? FineInput::EcOnly : FineInput::PeAndEc;
        } else if (flag.rfind("constant-lambda=", 0) == 0) {
            spec.constant_lambda = std::strtod(flag.c_str() + 16, nullptr);
            if (spec.constant_lambda < 0.0)
                fail("trainer", "constant-lambda must be >= 0");
        } else {
            fail("trainer", "unknown ablation flag '" + flag + "'");
        }
    }
    return spec;
}

AblationSpec ablation_from_config(const RunConfig& cfg) {
    std::vector<std::string> flags;
    const std::string& mode = cfg.s("ablation.mode");
    if (mode == "no-residual")
        flags.push_back("no-residual-density");
    else if (mode == "pe-not-hash")
        flags.push_back("pe-instead-of-hash");
    else if (mode == "ec-only")
        flags.push_back("ec-only");
    else if (mode != "full")
        fail("trainer", "ablation.mode must be full, no-residual, pe-not-hash or ec-only");
    const double cl = cfg.d("style.constant_lambda");
    if (cl >= 0.0) flags.push_back("constant-lambda=" + format_double(cl));
    return ablation_mode(flags);
}

namespace {

FieldDims dims_from_config(const RunConfig& cfg) {
    FieldDims d;
    d.coarse_width = static_cast<std::size_t>(cfg.i("coarse.width"));
    d.coarse_layers = static_cast<std::size_t>(cfg.i("coarse.layers"));
    d.ec_dim = static_cast<std::size_t>(cfg.i("coarse.ecdim"));
    d.color_width = static_cast<std::size_t>(cfg.i("coarse.color_width"));
    d.fine_width = static_cast<std::size_t>(cfg.i("fine.width"));
    d.fine_layers = static_cast<std::size_t>(cfg.i("fine.layers"));
    return d;
}

HashGridConfig grid_from_config(const RunConfig& cfg) {
    HashGridConfig g;
    g.levels = static_cast<std::size_t>(cfg.i("grid.levels"));
    g.n_min = static_cast<std::size_t>(cfg.i("grid.nmin"));
    g.n_max = static_cast<std::size_t>(cfg.i("grid.nmax"));
    g.feat_dim = static_cast<std::size_t>(cfg.i("grid.featdim"));
    g.table_log2 = static_cast<std::size_t>(cfg.i("grid.table_log2"));
    return g;
}

struct RenderParams {
    std::size_t ns;
    double near, far;
    Eigen::Vector3d background;
    bool stratified;
    std::size_t chunk;
};

RenderParams render_params(const RunConfig& cfg, const SceneDataset& ds) {
    RenderParams p;
    p.ns = static_cast<std::size_t>(cfg.i("render.ns"));
    p.near = cfg.d("render.near") > 0.0 ? cfg.d("render.near") : ds.near;
    p.far = cfg.d("render.far") > 0.0 ? cfg.d("render.far") : ds.far;
    if (!(0.0 < p.near && p.near < p.far))
        fail("trainer", "invalid near/far: set render.near/render.far or scene metadata");
    p.background = resolve_background(cfg.s("render.background"), ds.pattern);
    p.stratified = cfg.b("render.stratified");
    p.chunk = static_cast<std::size_t>(cfg.i("render.chunk"));
    return p;
}

}  // namespace

std::unique_ptr<HierarchicalField> build_field(const RunConfig& cfg, const AblationSpec& ab,
                                               const AxisBounds& bounds, std::uint64_t seed) {
    PositionalEncodingConfig pe{static_cast<std::size_t>(cfg.i("pe.levels")),
                                cfg.b("pe.identity")};
    PositionalEncodingConfig fine_pe{static_cast<std::size_t>(cfg.i("fine.pe_levels")), true};
    Rng rng(derive_seed(seed, 1));
    auto field = std::make_unique<HierarchicalField>(dims_from_config(cfg), pe,
                                                     grid_from_config(cfg), fine_pe,
                                                     ab.fine_input, ab.use_residual, rng);
    field->bounds = bounds;
    return field;
}

namespace {

constexpr double kMetaVersion = 1.0;

NamedArrays field_meta(const HierarchicalField& field, bool coarse_only) {
    const HashGridConfig& g = field.grid_config();
    const PositionalEncodingConfig& pe = field.coarse().pe_config();
    // Recover dims from the parameter shapes where convenient.
    auto params = field.all_params();
    auto shape_of = [&](const std::string& name) -> Shape {
        for (const auto& [n, node] : params)
            if (n == name) return node->value.shape();
        fail("trainer", "field is missing parameter " + name);
    };
    const Shape trunk0 = shape_of("coarse.trunk0.w");
    const Shape feat = shape_of("coarse.feat.w");
    const Shape color0 = shape_of("coarse.color0.w");
    const Shape fine0 = shape_of("fine.trunk0.w");

    std::size_t coarse_layers = 0, fine_layers = 0;
    for (const auto& [n, node] : params) {
        if (n.rfind("coarse.trunk", 0) == 0 && n.back() == 'w') ++coarse_layers;
        if (n.rfind("fine.trunk", 0) == 0 && n.back() == 'w') ++fine_layers;
    }

    Array arch(Shape{18});
    arch[0] = kMetaVersion;
    arch[1] = static_cast<double>(trunk0[1]);              // coarse width
    arch[2] = static_cast<double>(coarse_layers);
    arch[3] = static_cast<double>(feat[1]);                // ec dim
    arch[4] = static_cast<double>(color0[1]);              // color width
    arch[5] = static_cast<double>(fine0[1]);               // fine width
    arch[6] = static_cast<double>(fine_layers);
    arch[7] = static_cast<double>(pe.levels);
    arch[8] = pe.include_identity ? 1.0 : 0.0;
    arch[9] = static_cast<double>(g.levels);
    arch[10] = static_cast<double>(g.n_min);
    arch[11] = static_cast<double>(g.n_max);
    arch[12] = static_cast<double>(g.feat_dim);
    arch[13] = static_cast<double>(g.table_log2);
    arch[14] = 0.0;  // fine pe levels, set below
    arch[15] = static_cast<double>(static_cast<int>(field.fine_input()));
    arch[16] = field.use_residual_density() ? 1.0 : 0.0;
    arch[17] = coarse_only ? 0.0 : 1.0;

    Array bounds(Shape{6});
    for (int c = 0; c < 3; ++c) {
        bounds[c] = field.bounds.lo[c];
        bounds[3 + c] = field.bounds.hi[c];
    }
    NamedArrays meta;
    meta.emplace_back("meta.arch", std::move(arch));
    meta.emplace_back("meta.bounds", std::move(bounds));
    return meta;
}

}  // namespace

void save_field_checkpoint(const std::string& path, const HierarchicalField& field,
                           bool coarse_only) {
    NamedArrays meta = field_meta(field, coarse_only);
    // Fine input dim pins the fine PE level count for the pe-not-hash variant.
    if (field.fine_input() == FineInput::PeAndEc) {
        const std::size_t pe_dim = field.fine().input_dim() - field.coarse().ec_dim();
        meta[0].second[14] = static_cast<double>((pe_dim - 3) / 6);
    }
    NamedArrays arrays =
        field.snapshot(coarse_only ? field.coarse_params() : field.all_params());
    for (auto& m : meta) arrays.push_back(std::move(m));
    save_named_arrays(path, arrays);
}

LoadedField load_field_checkpoint(const std::string& path) {
    NamedArrays arrays = load_named_arrays(path);
    const Array* arch = nullptr;
    const Array* bounds = nullptr;
    for (const auto& [name, arr] : arrays) {
        if (name == "meta.arch") arch = &arr;
        if (name == "meta.bounds") bounds = &arr;
    }
    if (!arch || !bounds || arch->size() < 18 || (*arch)[0] != kMetaVersion)
        fail("trainer", "checkpoint " + path + " is missing usable meta.arch/meta.bounds");

    RunConfig cfg;
    auto set_i = [&cfg](const char* key, double v) {
        cfg.set(key, std::to_string(static_cast<long long>(v)));
    };
    set_i("coarse.width", (*arch)[1]);
    set_i("coarse.layers", (*arch)[2]);
    set_i("coarse.ecdim", (*arch)[3]);
    set_i("coarse.color_width", (*arch)[4]);
    set_i("fine.width", (*arch)[5]);
    set_i("fine.layers", (*arch)[6]);
    set_i("pe.levels", (*arch)[7]);
    cfg.set("pe.identity", (*arch)[8] != 0.0 ? "true" : "false");
    set_i("grid.levels", (*arch)[9]);
    set_i("grid.nmin", (*arch)[10]);
    set_i("grid.nmax", (*arch)[11]);
    set_i("grid.featdim", (*arch)[12]);
    set_i("grid.table_log2", (*arch)[13]);
    if ((*arch)[14] > 0.0) set_i("fine.pe_levels", (*arch)[14]);

    AblationSpec ab;
    ab.fine_input = static_cast<FineInput>(static_cast<int>((*arch)[15]));
    ab.use_residual = (*arch)[16] != 0.0;

    AxisBounds b;
    for (int c = 0; c < 3; ++c) {
        b.lo[c] = (*bounds)[c];
        b.hi[c] = (*bounds)[3 + c];
    }

    LoadedField out;
    out.field = build_field(cfg, ab, b, 0);
    out.has_fine = (*arch)[17] != 0.0;
    out.field->load_params(arrays, out.has_fine ? "" : "coarse.");
    return out;
}

std::vector<double> lr_sequence(double base_lr,
                                const std::vector<std::pair<std::int64_t, double>>& events,
                                std::int64_t iters) {
    std::vector<double> out(static_cast<std::size_t>(iters), base_lr);
    double lr = base_lr;
    for (std::int64_t t = 0; t < iters; ++t) {
        for (const auto& [iter, factor] : events)
            if (iter == t) lr *= factor;
        out[static_cast<std::size_t>(t)] = lr;
    }
    return out;
}

TrainCoarseResult train_coarse(const SceneDataset& dataset, const RunConfig& cfg,
                               std::uint64_t seed, const std::string& out_dir) {
    if (dataset.train.empty()) fail("trainer", "train_coarse: dataset has no training views");
    const RenderParams rp = render_params(cfg, dataset);
    const std::int64_t iters = cfg.i("train.coarse.iters");
    const std::size_t batch = static_cast<std::size_t>(cfg.i("train.coarse.batch"));
    const std::int64_t ckpt_every = cfg.i("train.coarse.ckpt_every");
    if (iters < 0 || batch == 0) fail("trainer", "train_coarse: bad iterations/batch");

    TrainCoarseResult result;
    result.field = build_field(cfg, ablation_from_config(cfg), dataset.bounds, seed);
    HierarchicalField& field = *result.field;

    auto named = field.coarse_params();
    std::vector<NodePtr> nodes;
    for (const auto& [name, node] : named) nodes.push_back(node);
    Adam opt({.lr = cfg.d("train.coarse.lr")}, nodes);
    const std::vector<double> lrs =
        lr_sequence(cfg.d("train.coarse.lr"), parse_decay_events(cfg.s("train.coarse.lr_decay")),
                    std::max<std::int64_t>(iters, 1));

    Rng rng_pix(derive_seed(seed, 2));
    Rng rng_samp(derive_seed(seed, 3));

    const std::string log_path = out_dir.empty() ? "" : out_dir + "/loss_coarse.log";
    NamedArrays last_good = field.snapshot(field.coarse_params());
    auto save_ckpt = [&](const NamedArrays& snap, const std::string& name) {
        if (out_dir.empty()) return;
        NamedArrays meta = field_meta(field, true);
        NamedArrays arrays = snap;
        for (auto& m : meta) arrays.push_back(std::move(m));
        save_named_arrays(out_dir + "/" + name, arrays);
    };

    for (std::int64_t t = 0; t < iters; ++t) {
        opt.set_lr(lrs[static_cast<std::size_t>(t)]);

        RayBatch rays{Array(Shape{batch, 3}), Array(Shape{batch, 3})};
        Array gt(Shape{batch, 3});
        for (std::size_t b = 0; b < batch; ++b) {
            const View& view = dataset.train[rng_pix.below(dataset.train.size())];
            const std::size_t px = rng_pix.below(view.cam.width);
            const std::size_t py = rng_pix.below(view.cam.height);
            const Ray ray = view.cam.pixel_ray(px, py);
            for (int c = 0; c < 3; ++c) {
                rays.origins[b * 3 + c] = ray.origin[c];
                rays.dirs[b * 3 + c] = ray.dir[c];
                gt[b * 3 + c] = view.image[(py * view.cam.width + px) * 3 + c];
            }
        }
        Samples samples = sample_along(batch, rp.ns, rp.near, rp.far, rp.stratified, rng_samp);
        Array pos = sample_positions(rays, samples.t);
        Array dirs = expand_dirs(rays, rp.ns);

        CoarseOutputs out = field.eval_coarse(pos, dirs);
        CompositeTape comp = composite(reshape(out.sigma, Shape{batch, rp.ns}),
                                       reshape(out.color, Shape{batch, rp.ns, 3}),
                                       samples.delta, samples.t, rp.background);
        NodePtr loss = recon_loss(comp.color, gt);
        const double lval = loss->value.item();
        if (!std::isfinite(lval)) {
            save_ckpt(last_good, "coarse.sfck");
            fail("trainer", "train_coarse: non-finite loss at iteration " + std::to_string(t) +
                                "; last good checkpoint saved");
        }
        backward(loss);
        opt.step();

        LossReport report{t, 0.0, lval, 0.0, 0.0, lval};
        result.log.push_back(report);
        if (!log_path.empty()) append_loss_log(log_path, report);

        if (ckpt_every > 0 && (t + 1) % ckpt_every == 0 && t + 1 != iters) {
            last_good = field.snapshot(field.coarse_params());
            result.checkpoints.push_back(last_good);
            char name[64];
            std::snprintf(name, sizeof(name), "coarse_it%06lld.sfck",
                          static_cast<long long>(t + 1));
            save_ckpt(last_good, name);
        }
    }

    NamedArrays final_snap = field.snapshot(field.coarse_params());
    result.checkpoints.push_back(final_snap);
    save_ckpt(final_snap, "coarse.sfck");
    return result;
}

double heldout_psnr(const HierarchicalField& field, const SceneDataset& dataset,
                    RenderMode mode, const RunConfig& cfg) {
    if (dataset.heldout.empty()) fail("trainer", "heldout_psnr: dataset has no held-out views");
    const RenderParams rp = render_params(cfg, dataset);
    double total = 0.0;
    for (const View& view : dataset.heldout) {
        RenderedImage render =
            render_field(field, mode, view.cam, rp.ns, 0, false, rp.background, rp.chunk);
        double mse = 0.0;
        for (std::size_t i = 0; i < render.image.size(); ++i) {
            const double d = render.image[i] - view.image[i];
            mse += d * d;
        }
        mse /= static_cast<double>(render.image.size());
        total += 10.0 * std::log10(1.0 / std::max(mse, 1e-12));
    }
    return total / static_cast<double>(dataset.heldout.size());
}

namespace {

// Fixed per-pose geometry reused every stylization step: ray bundle, sample
// positions, and (when the budget allows) cached frozen-coarse outputs.
struct PoseBundle {
    Camera cam;
    RayBatch rays;
    Samples samples;
    Array sigma_c;  // [P,1], empty when not cached
    Array ec;       // [P,E]
    Array coarse_image;  // [S,S,3] content target
};

Array chunk_rows(const Array& src, std::size_t row0, std::size_t row1) {
    const std::size_t w = src.size() / src.extent(0);
    Shape shape = src.shape();
    shape[0] = row1 - row0;
    Array out(shape);
    std::copy(src.data() + row0 * w, src.data() + row1 * w, out.data());
    return out;
}

}  // namespace

TrainStyleResult train_style(const std::string& coarse_checkpoint, const Array& style_image,
                             const SceneDataset& dataset, const RunConfig& cfg,
                             std::uint64_t seed, const std::string& out_dir) {
    if (style_image.rank() != 3 || style_image.extent(0) < 64 || style_image.extent(1) < 64)
        fail("trainer", "train_style: style image must be at least 64 px");
    if (dataset.train.empty()) fail("trainer", "train_style: dataset has no training views");

    const RenderParams rp_base = render_params(cfg, dataset);
    RenderParams rp = rp_base;
    if (cfg.i("style.ns") > 0) rp.ns = static_cast<std::size_t>(cfg.i("style.ns"));
    const std::size_t side = static_cast<std::size_t>(cfg.i("style.image"));
    const std::size_t chunk = static_cast<std::size_t>(cfg.i("style.chunk"));
    const std::int64_t iters = cfg.i("train.style.iters");
    const AblationSpec ab = ablation_from_config(cfg);

    // Architecture: coarse side comes from the checkpoint, fine side from the
    // current config and ablation spec.
    NamedArrays coarse_arrays = load_named_arrays(coarse_checkpoint);
    const Array* arch = nullptr;
    for (const auto& [name, arr] : coarse_arrays)
        if (name == "meta.arch") arch = &arr;
    if (!arch) fail("trainer", "coarse checkpoint lacks meta.arch: " + coarse_checkpoint);
    RunConfig field_cfg = cfg;
    auto set_i = [&field_cfg](const char* key, double v) {
        field_cfg.set(key, std::to_string(static_cast<long long>(v)));
    };
    set_i("coarse.width", (*arch)[1]);
    set_i("coarse.layers", (*arch)[2]);
    set_i("coarse.ecdim", (*arch)[3]);
    set_i("coarse.color_width", (*arch)[4]);
    set_i("pe.levels", (*arch)[7]);
    field_cfg.set("pe.identity", (*arch)[8] != 0.0 ? "true" : "false");

    TrainStyleResult result;
    result.field = build_field(field_cfg, ab, dataset.bounds, seed);
    HierarchicalField& field = *result.field;
    field.load_params(coarse_arrays, "coarse.");
    const std::uint64_t coarse_hash = hash_arrays(field.snapshot(field.coarse_params()));

    const std::string& weights_path = cfg.s("features.weights");
    const FeatureExtractor extractor = weights_path.empty()
                                           ? FeatureExtractor::generate()
                                           : FeatureExtractor::from_file(weights_path);
    const bool normalized_content = cfg.b("content.normalized");

    // Content poses: training poses plus K novel poses inside the pattern
    // span, all at the stylization resolution.
    std::vector<Camera> cams;
    for (const View& view : dataset.train) cams.push_back(resize_camera(view.cam, side, side));
    const std::size_t novel = static_cast<std::size_t>(cfg.i("style.novel_poses"));
    if (novel > 0) {
        Rng rng(derive_seed(seed, 4));
        const double distance = dataset.train[0].cam.position().norm();
        const bool arc = dataset.pattern == "arc";
        const double az_lo = arc ? -15.0 : 0.0, az_hi = arc ? 15.0 : 90.0;
        const double el = arc ? 0.0 : 25.0;
        for (std::size_t i = 0; i < novel; ++i) {
            const double az = rng.uniform(az_lo, az_hi);
            cams.push_back(make_orbit_camera(az, el + rng.uniform(-3.0, 3.0), distance, side,
                                             rp.near, rp.far));
        }
    }

    // Per-pose fixed sampling (deterministic and cache-friendly); the seed
    // stream is keyed by pose index.
    const std::size_t n_pixels = side * side;
    const std::size_t points = n_pixels * rp.ns;
    const std::size_t ec_dim = field.coarse().ec_dim();
    const double cache_mb =
        static_cast<double>(cams.size() * points * (1 + ec_dim) * sizeof(double)) / 1048576.0;
    const bool cache_coarse = cache_mb <= static_cast<double>(cfg.i("style.cache_mb"));

    std::vector<PoseBundle> bundles;
    bundles.reserve(cams.size());
    for (std::size_t p = 0; p < cams.size(); ++p) {
        PoseBundle bundle;
        bundle.cam = cams[p];
        std::vector<std::pair<std::size_t, std::size_t>> pixels;
        pixels.reserve(n_pixels);
        for (std::size_t i = 0; i < n_pixels; ++i) pixels.emplace_back(i % side, i / side);
        bundle.rays = generate_rays(bundle.cam, pixels);
        const std::uint64_t pose_seed = derive_seed(seed, 100 + p);
        result.pose_seeds.push_back(pose_seed);
        Rng rng(pose_seed);
        bundle.samples = sample_along(n_pixels, rp.ns, rp.near, rp.far, rp.stratified, rng);

        // One full coarse pass gives both the cache and the content render.
        Array image(Shape{side, side, 3});
        Array sigma_all(Shape{points, 1});
        Array ec_all(Shape{points, ec_dim});
        for (std::size_t r0 = 0; r0 < n_pixels; r0 += chunk) {
            const std::size_t r1 = std::min(r0 + chunk, n_pixels);
            RayBatch rays{chunk_rows(bundle.rays.origins, r0, r1),
                          chunk_rows(bundle.rays.dirs, r0, r1)};
            Samples samples{chunk_rows(bundle.samples.t, r0, r1),
                            chunk_rows(bundle.samples.delta, r0, r1)};
            Array pos = sample_positions(rays, samples.t);
            Array dirs = expand_dirs(rays, rp.ns);
            CoarseOutputsPlain out = field.eval_coarse_plain(pos, dirs);
            CompositePlain comp = composite_plain(out.sigma.reshaped(Shape{r1 - r0, rp.ns}),
                                                  out.color.reshaped(Shape{r1 - r0, rp.ns, 3}),
                                                  samples.delta, samples.t, rp.background);
            std::copy(comp.color.data(), comp.color.data() + comp.color.size(),
                      image.data() + r0 * 3);
            std::copy(out.sigma.data(), out.sigma.data() + out.sigma.size(),
                      sigma_all.data() + r0 * rp.ns);
            std::copy(out.ec.data(), out.ec.data() + out.ec.size(),
                      ec_all.data() + r0 * rp.ns * ec_dim);
        }
        bundle.coarse_image = image;
        if (cache_coarse) {
            bundle.sigma_c = std::move(sigma_all);
            bundle.ec = std::move(ec_all);
        }
        result.content_cams.push_back(bundle.cam);
        result.content_renders.push_back(bundle.coarse_image);
        bundles.push_back(std::move(bundle));
    }

    std::vector<Array> content_feats;
    for (const PoseBundle& bundle : bundles)
        content_feats.push_back(extractor.extract_plain(bundle.coarse_image));
    const Array style_rows = feature_rows(extractor.extract_plain(style_image));

    auto named = field.style_params();
    std::vector<NodePtr> nodes;
    for (const auto& [name, node] : named) nodes.push_back(node);
    Adam opt({.lr = cfg.d("train.style.lr")}, nodes);
    const std::vector<double> lrs =
        lr_sequence(cfg.d("train.style.lr"), parse_decay_events(cfg.s("train.style.lr_decay")),
                    std::max<std::int64_t>(iters, 1));
    const AnnealSchedule schedule{cfg.d("style.lambda0"), cfg.d("style.alpha"),
                                  cfg.i("style.T")};

    const std::string log_path = out_dir.empty() ? "" : out_dir + "/loss_style.log";

    for (std::int64_t t = 0; t < iters; ++t) {
        opt.set_lr(lrs[static_cast<std::size_t>(t)]);
        const double lambda = ab.constant_lambda >= 0.0 ? ab.constant_lambda
                                                        : lambda_at(schedule, t);
        PoseBundle& bundle = bundles[static_cast<std::size_t>(t) % bundles.size()];

        // Forward render (no tape) of the current hierarchical field.
        Array image(Shape{side, side, 3});
        std::vector<Array> chunk_sigma_c, chunk_ec, chunk_pos;
        for (std::size_t r0 = 0; r0 < n_pixels; r0 += chunk) {
            const std::size_t r1 = std::min(r0 + chunk, n_pixels);
            RayBatch rays{chunk_rows(bundle.rays.origins, r0, r1),
                          chunk_rows(bundle.rays.dirs, r0, r1)};
            Samples samples{chunk_rows(bundle.samples.t, r0, r1),
                            chunk_rows(bundle.samples.delta, r0, r1)};
            Array pos = sample_positions(rays, samples.t);
            Array sigma_c, ec;
            if (cache_coarse) {
                sigma_c = chunk_rows(bundle.sigma_c, r0 * rp.ns, r1 * rp.ns);
                ec = chunk_rows(bundle.ec, r0 * rp.ns, r1 * rp.ns);
            } else {
                Array dirs = expand_dirs(rays, rp.ns);
                CoarseOutputsPlain out = field.eval_coarse_plain(pos, dirs);
                sigma_c = std::move(out.sigma);
                ec = std::move(out.ec);
            }
            FineOutputsPlain fine = field.eval_fine_plain(pos, ec);
            Array sigma_f = field.use_residual_density()
                                ? compose_density(sigma_c, fine.sigma_res)
                                : sigma_c;
            CompositePlain comp = composite_plain(sigma_f.reshaped(Shape{r1 - r0, rp.ns}),
                                                  fine.color.reshaped(Shape{r1 - r0, rp.ns, 3}),
                                                  samples.delta, samples.t, rp.background);
            std::copy(comp.color.data(), comp.color.data() + comp.color.size(),
                      image.data() + r0 * 3);
            chunk_sigma_c.push_back(std::move(sigma_c));
            chunk_ec.push_back(std::move(ec));
            chunk_pos.push_back(std::move(pos));
        }

        // Image-space objective and its gradient w.r.t. the rendered pixels.
        NodePtr image_node = param(image);
        NodePtr feat = extractor.extract(image_node);
        const std::size_t pose_idx = static_cast<std::size_t>(t) % bundles.size();
        NodePtr content = content_loss(feat, content_feats[pose_idx], normalized_content);
        const Array& fv = feat->value;
        NodePtr rows = reshape(feat, Shape{fv.extent(0) * fv.extent(1), fv.extent(2)});
        StyleLoss style = style_loss(rows, style_rows);
        NodePtr total = total_loss(content, style.loss, lambda);
        const double total_v = total->value.item();
        if (!std::isfinite(total_v))
            fail("trainer", "train_style: non-finite loss at iteration " + std::to_string(t));
        backward(total);
        const Array pixel_grad = image_node->grad;

        // Deferred backpropagation: re-render each chunk on the tape and seed
        // it with the matching slice of the pixel gradient.
        std::size_t chunk_idx = 0;
        for (std::size_t r0 = 0; r0 < n_pixels; r0 += chunk, ++chunk_idx) {
            const std::size_t r1 = std::min(r0 + chunk, n_pixels);
            Samples samples{chunk_rows(bundle.samples.t, r0, r1),
                            chunk_rows(bundle.samples.delta, r0, r1)};
            HierarchicalField::FineRender render = field.eval_hierarchical_tape(
                chunk_pos[chunk_idx], chunk_sigma_c[chunk_idx], chunk_ec[chunk_idx]);
            CompositeTape comp = composite(
                reshape(render.sigma_f, Shape{r1 - r0, rp.ns}),
                reshape(render.color_f, Shape{r1 - r0, rp.ns, 3}), samples.delta, samples.t,
                rp.background);
            Array seed_grad(Shape{r1 - r0, 3});
            std::copy(pixel_grad.data() + r0 * 3, pixel_grad.data() + r1 * 3,
                      seed_grad.data());
            backward_seeded(comp.color, seed_grad);
        }
        opt.step();

        if (hash_arrays(field.snapshot(field.coarse_params())) != coarse_hash)
            fail("trainer", "train_style: freezing contract violated, coarse parameters "
                            "changed at iteration " + std::to_string(t));

        LossReport report{t, lambda, 0.0, content->value.item(), style.loss->value.item(),
                          total_v};
        result.log.push_back(report);
        if (!log_path.empty()) append_loss_log(log_path, report);
    }

    if (!out_dir.empty()) save_field_checkpoint(out_dir + "/hier.sfck", field, false);
    return result;
}

Array stylize_image_2d(const Array& content_image, const Array& style_image,
                       const FeatureExtractor& extractor, const RunConfig& cfg,
                       std::uint64_t seed) {
    (void)seed;  // the baseline is deterministic; kept for interface parity
    const std::int64_t iters = cfg.i("baseline2d.iters");
    const AblationSpec ab = ablation_from_config(cfg);
    const AnnealSchedule schedule{cfg.d("style.lambda0"), cfg.d("style.alpha"),
                                  cfg.i("style.T")};
    const Array content_feat = extractor.extract_plain(content_image);
    const Array style_rows = feature_rows(extractor.extract_plain(style_image));
    const bool normalized_content = cfg.b("content.normalized");

    NodePtr image = param(content_image);
    Adam opt({.lr = cfg.d("baseline2d.lr")}, {image});
    for (std::int64_t t = 0; t < iters; ++t) {
        const double lambda = ab.constant_lambda >= 0.0 ? ab.constant_lambda
                                                        : lambda_at(schedule, t);
        NodePtr feat = extractor.extract(image);
        NodePtr content = content_loss(feat, content_feat, normalized_content);
        const Array& fv = feat->value;
        NodePtr rows = reshape(feat, Shape{fv.extent(0) * fv.extent(1), fv.extent(2)});
        StyleLoss style = style_loss(rows, style_rows);
        NodePtr total = total_loss(content, style.loss, lambda);
        backward(total);
        opt.step();
        for (std::size_t i = 0; i < image->value.size(); ++i) {
            double& v = image->value[i];
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
    }
    return image->value;
}

}  // namespace sf
