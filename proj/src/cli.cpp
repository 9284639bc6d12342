#include "sf/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sf/dataset.hpp"
#include "sf/errors.hpp"
#include "sf/image_io.hpp"
#include "sf/metrics.hpp"
#include "sf/trainer.hpp"

namespace sf {

namespace fs = std::filesystem;

namespace {

void write_manifest(const std::string& out_dir, const std::string& command,
                    std::uint64_t seed, const RunConfig& cfg) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "manifest.txt");
    if (!out) fail("cli", "cannot write manifest in " + out_dir);
    out << kVersion << "\n";
    out << "formats sfck=" << kCheckpointVersion << " sffx=" << kCheckpointVersion << "\n";
    out << "command " << command << "\n";
    out << "seed " << seed << "\n";
    out << cfg.dump();
}

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& sets) {
    RunConfig cfg;
    if (!config_path.empty()) cfg.apply_file(config_path);
    for (const std::string& kv : sets) cfg.apply_override(kv);
    return cfg;
}

FeatureExtractor make_extractor(const RunConfig& cfg) {
    const std::string& path = cfg.s("features.weights");
    return path.empty() ? FeatureExtractor::generate() : FeatureExtractor::from_file(path);
}

int cmd_make_scene(const RunConfig& cfg, const std::string& out, std::uint64_t seed) {
    AnalyticScene scene = make_scene_preset(cfg.s("scene.kind"));
    SceneDataset ds = make_dataset(scene, static_cast<std::size_t>(cfg.i("scene.train_views")),
                                   static_cast<std::size_t>(cfg.i("scene.heldout_views")),
                                   cfg.s("scene.pattern"),
                                   static_cast<std::size_t>(cfg.i("scene.image")), seed);
    write_scene_dir(out, ds);
    fs::create_directories(fs::path(out) / "styles");
    const std::size_t style_size = static_cast<std::size_t>(cfg.i("scene.style_size"));
    int k = 0;
    for (const char* kind : {"stripes", "checker", "perlin"}) {
        Array tex = style_texture(kind, style_size, derive_seed(seed, 0x5700 + k++));
        write_png((fs::path(out) / "styles" / (std::string(kind) + ".png")).string(), tex);
    }
    write_manifest(out, "make-scene", seed, cfg);
    std::cout << "scene written to " << out << " (" << ds.train.size() << " train, "
              << ds.heldout.size() << " heldout views)\n";
    return 0;
}

int cmd_gen_extractor(const std::string& out, std::uint64_t seed) {
    FeatureExtractor::generate(seed).save(out);
    std::cout << "extractor weights written to " << out << "\n";
    return 0;
}

int cmd_train_coarse(const RunConfig& cfg, const std::string& scene_dir,
                     const std::string& out, std::uint64_t seed) {
    SceneDataset ds = load_scene_dir(scene_dir);
    write_manifest(out, "train-coarse", seed, cfg);
    TrainCoarseResult result = train_coarse(ds, cfg, seed, out);
    std::cout << "coarse training done: " << result.log.size() << " iterations, final loss "
              << (result.log.empty() ? 0.0 : result.log.back().total) << "\n";
    if (!ds.heldout.empty())
        std::cout << "held-out PSNR: " << heldout_psnr(*result.field, ds, RenderMode::Coarse, cfg)
                  << " dB\n";
    return 0;
}

int cmd_train_style(const RunConfig& cfg, const std::string& scene_dir,
                    const std::string& coarse, const std::string& style_path,
                    const std::string& out, std::uint64_t seed) {
    SceneDataset ds = load_scene_dir(scene_dir);
    Array style = to_rgb(read_png(style_path), 1.0);
    write_manifest(out, "train-style", seed, cfg);
    TrainStyleResult result = train_style(coarse, style, ds, cfg, seed, out);
    std::cout << "style training done: " << result.log.size() << " iterations";
    if (!result.log.empty())
        std::cout << ", final content " << result.log.back().content << ", style "
                  << result.log.back().style;
    std::cout << "\n";
    return 0;
}

int cmd_render(const RunConfig& cfg, const std::string& scene_dir,
               const std::string& checkpoint, const std::string& mode_flag,
               const std::string& pose_path, std::size_t size, const std::string& out,
               std::uint64_t seed) {
    SceneDataset ds = load_scene_dir(scene_dir);
    LoadedField loaded = load_field_checkpoint(checkpoint);
    RenderMode mode;
    if (mode_flag == "auto")
        mode = loaded.has_fine ? RenderMode::Hierarchical : RenderMode::Coarse;
    else if (mode_flag == "coarse")
        mode = RenderMode::Coarse;
    else if (mode_flag == "hierarchical")
        mode = RenderMode::Hierarchical;
    else
        fail("cli", "render: --mode must be auto, coarse or hierarchical");
    if (mode == RenderMode::Hierarchical && !loaded.has_fine)
        fail("cli", "render: checkpoint " + checkpoint + " holds no fine parameters");

    if (size == 0) size = static_cast<std::size_t>(cfg.i("eval.size"));
    std::vector<Camera> cams;
    if (pose_path == "train" || pose_path == "heldout") {
        const auto& views = pose_path == "train" ? ds.train : ds.heldout;
        if (views.empty()) fail("cli", "render: dataset has no " + pose_path + " views");
        for (const View& view : views) cams.push_back(resize_camera(view.cam, size, size));
    } else {
        cams = eval_path_cameras(ds, pose_path, static_cast<std::size_t>(cfg.i("eval.poses")),
                                 size);
    }

    const std::size_t ns = cfg.i("eval.ns") > 0 ? static_cast<std::size_t>(cfg.i("eval.ns"))
                                                : static_cast<std::size_t>(cfg.i("render.ns"));
    const Eigen::Vector3d bg = resolve_background(cfg.s("render.background"), ds.pattern);
    const std::size_t chunk = static_cast<std::size_t>(cfg.i("render.chunk"));

    fs::create_directories(out);
    RenderManifest manifest;
    manifest.bounds = loaded.field->bounds;
    manifest.background = bg;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        Camera cam = cams[i];
        cam.near = cfg.d("render.near") > 0.0 ? cfg.d("render.near") : ds.near;
        cam.far = cfg.d("render.far") > 0.0 ? cfg.d("render.far") : ds.far;
        RenderedImage render = render_field(*loaded.field, mode, cam, ns,
                                            derive_seed(seed, i), false, bg, chunk);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "%03zu", i);
        RenderManifestEntry entry;
        entry.image_png = "frame_" + std::string(stem) + ".png";
        entry.image_f64 = "frame_" + std::string(stem) + ".f64";
        entry.depth_pfm = "depth_" + std::string(stem) + ".pfm";
        entry.cam = cam;
        write_png((fs::path(out) / entry.image_png).string(), render.image);
        write_f64((fs::path(out) / entry.image_f64).string(), render.image);
        write_pfm((fs::path(out) / entry.depth_pfm).string(), render.depth);
        manifest.entries.push_back(entry);
    }
    write_render_manifest((fs::path(out) / "poses.json").string(), manifest);
    write_manifest(out, "render", seed, cfg);
    std::cout << "rendered " << cams.size() << " poses to " << out << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& renders, const std::string& pairs,
                 const std::string& out, std::uint64_t seed) {
    if (pairs != "auto") fail("cli", "evaluate: only --pairs auto is implemented");
    RenderManifest manifest = read_render_manifest((fs::path(renders) / "poses.json").string());
    std::vector<RenderView> views;
    for (RenderManifestEntry& e : manifest.entries) {
        RenderView view;
        if (!e.image_f64.empty() && fs::exists(fs::path(renders) / e.image_f64))
            view.image = read_f64((fs::path(renders) / e.image_f64).string());
        else
            view.image = to_rgb(read_png((fs::path(renders) / e.image_png).string()), 1.0);
        view.depth = read_pfm((fs::path(renders) / e.depth_pfm).string());
        finalize_manifest_camera(e.cam, manifest.camera_angle_x, view.image.extent(1),
                                 view.image.extent(0));
        view.cam = e.cam;
        views.push_back(std::move(view));
    }
    const double z_tol = cfg.d("eval.ztol_frac") * manifest.bounds.diameter();
    const std::size_t offset = static_cast<std::size_t>(cfg.i("eval.long_offset"));
    ConsistencyReport report =
        consistency_report(views, adjacent_pairs(views.size()),
                           offset_pairs(views.size(), offset), z_tol, make_extractor(cfg));
    fs::create_directories(out);
    {
        std::ofstream csv(fs::path(out) / "report.csv");
        csv << report.csv();
        std::ofstream txt(fs::path(out) / "report.txt");
        txt << report.table();
    }
    write_manifest(out, "evaluate", seed, cfg);
    std::cout << report.table();
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& scene_dir, const std::string& coarse,
               const std::string& style_path, const std::string& out, std::uint64_t seed) {
    SceneDataset ds = load_scene_dir(scene_dir);
    Array style = to_rgb(read_png(style_path), 1.0);
    write_manifest(out, "ablate", seed, cfg);

    struct Variant {
        const char* name;
        const char* mode;
        double constant_lambda;
    };
    const Variant variants[] = {
        {"full", "full", -1.0},          {"no-residual", "no-residual", -1.0},
        {"pe-not-hash", "pe-not-hash", -1.0}, {"ec-only", "ec-only", -1.0},
        {"constant-10", "full", 10.0},   {"constant-0.1", "full", 0.1},
    };

    std::vector<Array> final_renders;
    std::ofstream summary(fs::path(out) / "ablate_summary.csv");
    summary << "variant,final_content,final_style\n";
    std::ofstream traces(fs::path(out) / "ablate_traces.csv");
    traces << "variant,iter,lambda,content,style,total\n";

    for (const Variant& variant : variants) {
        RunConfig vcfg = cfg;
        vcfg.set("ablation.mode", variant.mode);
        vcfg.set("style.constant_lambda", format_double(variant.constant_lambda));
        const std::string vdir = (fs::path(out) / variant.name).string();
        fs::create_directories(vdir);
        TrainStyleResult result = train_style(coarse, style, ds, vcfg, seed, vdir);
        const LossReport& last = result.log.back();
        summary << variant.name << "," << format_double(last.content) << ","
                << format_double(last.style) << "\n";
        for (const LossReport& r : result.log)
            traces << variant.name << "," << r.iter << "," << format_double(r.lambda) << ","
                   << format_double(r.content) << "," << format_double(r.style) << ","
                   << format_double(r.total) << "\n";

        // Shared comparison pose: the middle of the evaluation path.
        const std::size_t side = static_cast<std::size_t>(vcfg.i("style.image"));
        std::vector<Camera> path = eval_path_cameras(ds, "auto", 11, side);
        const std::size_t ns = static_cast<std::size_t>(
            vcfg.i("style.ns") > 0 ? vcfg.i("style.ns") : vcfg.i("render.ns"));
        const Eigen::Vector3d bg = resolve_background(vcfg.s("render.background"), ds.pattern);
        Camera cam = path[path.size() / 2];
        cam.near = ds.near;
        cam.far = ds.far;
        RenderedImage render =
            render_field(*result.field, RenderMode::Hierarchical, cam, ns, 0, false, bg,
                         static_cast<std::size_t>(vcfg.i("render.chunk")));
        write_png((fs::path(vdir) / "final.png").string(), render.image);
        final_renders.push_back(std::move(render.image));
        std::cout << "ablate " << variant.name << ": content "
                  << format_double(last.content) << " style " << format_double(last.style)
                  << "\n";
    }

    // Contact sheet: one row, variant order as above.
    const std::size_t side = final_renders[0].extent(0);
    Array sheet(Shape{side, side * final_renders.size(), 3});
    for (std::size_t v = 0; v < final_renders.size(); ++v)
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x)
                for (int c = 0; c < 3; ++c)
                    sheet[(y * side * final_renders.size() + v * side + x) * 3 + c] =
                        final_renders[v][(y * side + x) * 3 + c];
    write_png((fs::path(out) / "contact_sheet.png").string(), sheet);
    std::cout << "ablation matrix written to " << out << "\n";
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{std::string(kVersion) +
                 " - hierarchical coarse-to-fine stylization of sparse-view scenes"};
    app.require_subcommand(1);

    std::string config_path, out_dir, scene_dir, coarse_path, style_path, checkpoint;
    std::string mode = "auto", pose_path = "auto", pairs = "auto", renders_dir;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    std::size_t size = 0;
    std::uint64_t extractor_seed = kExtractorSeed;

    auto add_common = [&](CLI::App* cmd, bool needs_out = true) {
        cmd->add_option("--config", config_path, "config file of key = value lines");
        cmd->add_option("--set", sets, "override, repeatable: --set key=value");
        cmd->add_option("--seed", seed, "seed threaded to every stochastic component");
        if (needs_out) cmd->add_option("--out", out_dir, "output directory")->required();
    };

    CLI::App* make_scene = app.add_subcommand("make-scene", "generate a synthetic scene");
    add_common(make_scene);

    CLI::App* gen_fx = app.add_subcommand("gen-extractor-weights",
                                          "write the deterministic extractor weight file");
    gen_fx->add_option("--out", out_dir, "output .sffx path")->required();
    gen_fx->add_option("--seed", extractor_seed, "weight seed (default 0xC0FFEE)");

    CLI::App* tc = app.add_subcommand("train-coarse", "stage 1: coarse geometry");
    add_common(tc);
    tc->add_option("--scene", scene_dir, "scene directory")->required();

    CLI::App* ts = app.add_subcommand("train-style", "stage 2: fine stylization");
    add_common(ts);
    ts->add_option("--scene", scene_dir, "scene directory")->required();
    ts->add_option("--coarse", coarse_path, "coarse checkpoint (.sfck)")->required();
    ts->add_option("--style", style_path, "style image (PNG)")->required();

    CLI::App* render = app.add_subcommand("render", "render a camera path from a checkpoint");
    add_common(render);
    render->add_option("--scene", scene_dir, "scene directory")->required();
    render->add_option("--checkpoint", checkpoint, "field checkpoint (.sfck)")->required();
    render->add_option("--mode", mode, "auto|coarse|hierarchical");
    render->add_option("--pose-path", pose_path, "auto|circle60|arc60|train|heldout");
    render->add_option("--size", size, "image side (default eval.size)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "multi-view consistency report");
    add_common(evaluate);
    evaluate->add_option("--renders", renders_dir, "render output directory")->required();
    evaluate->add_option("--pairs", pairs, "pair selection (auto)");

    CLI::App* ablate = app.add_subcommand("ablate", "run the ablation matrix");
    add_common(ablate);
    ablate->add_option("--scene", scene_dir, "scene directory")->required();
    ablate->add_option("--coarse", coarse_path, "coarse checkpoint (.sfck)")->required();
    ablate->add_option("--style", style_path, "style image (PNG)")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        RunConfig cfg = load_config(config_path, sets);
        if (make_scene->parsed()) return cmd_make_scene(cfg, out_dir, seed);
        if (gen_fx->parsed()) return cmd_gen_extractor(out_dir, extractor_seed);
        if (tc->parsed()) return cmd_train_coarse(cfg, scene_dir, out_dir, seed);
        if (ts->parsed())
            return cmd_train_style(cfg, scene_dir, coarse_path, style_path, out_dir, seed);
        if (render->parsed())
            return cmd_render(cfg, scene_dir, checkpoint, mode, pose_path, size, out_dir, seed);
        if (evaluate->parsed()) return cmd_evaluate(cfg, renders_dir, pairs, out_dir, seed);
        if (ablate->parsed())
            return cmd_ablate(cfg, scene_dir, coarse_path, style_path, out_dir, seed);
        std::cerr << "usage error: no subcommand\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace sf
