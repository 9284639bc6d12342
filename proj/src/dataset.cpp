#include "sf/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sf/errors.hpp"
#include "sf/image_io.hpp"
#include "sf/rng.hpp"

namespace sf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;
constexpr double kDefaultFovXDeg = 40.0;

struct PatternSpec {
    double az_lo, az_hi, elevation;
};

PatternSpec pattern_spec(const std::string& pattern) {
    if (pattern == "hemisphere") return {0.0, 90.0, 25.0};
    if (pattern == "arc") return {-15.0, 15.0, 0.0};
    fail("sceneio", "unknown pose pattern '" + pattern + "' (want hemisphere or arc)");
}

}  // namespace

Eigen::Vector3d resolve_background(const std::string& setting, const std::string& pattern) {
    if (setting == "black") return {0, 0, 0};
    if (setting == "white") return {1, 1, 1};
    if (setting == "auto")
        return pattern == "arc" ? Eigen::Vector3d(0, 0, 0) : Eigen::Vector3d(1, 1, 1);
    fail("sceneio", "render.background must be auto, black or white, got '" + setting + "'");
}

Camera make_orbit_camera(double azimuth_deg, double elevation_deg, double distance,
                         std::size_t image_size, double near, double far) {
    const double az = azimuth_deg * kDeg, el = elevation_deg * kDeg;
    const Eigen::Vector3d eye(distance * std::cos(el) * std::cos(az),
                              distance * std::cos(el) * std::sin(az),
                              distance * std::sin(el));
    Camera cam;
    cam.width = cam.height = image_size;
    cam.fx = cam.fy = 0.5 * static_cast<double>(image_size) / std::tan(0.5 * kDefaultFovXDeg * kDeg);
    cam.cx = 0.5 * static_cast<double>(image_size);
    cam.cy = 0.5 * static_cast<double>(image_size);
    cam.near = near;
    cam.far = far;
    cam.rot = look_at_rotation(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, 1));
    cam.trans = eye;
    cam.validate();
    return cam;
}

Camera resize_camera(const Camera& cam, std::size_t new_w, std::size_t new_h) {
    Camera out = cam;
    const double sx = static_cast<double>(new_w) / static_cast<double>(cam.width);
    const double sy = static_cast<double>(new_h) / static_cast<double>(cam.height);
    out.width = new_w;
    out.height = new_h;
    out.fx = cam.fx * sx;
    out.fy = cam.fy * sy;
    out.cx = cam.cx * sx;
    out.cy = cam.cy * sy;
    return out;
}

SceneDataset make_dataset(const AnalyticScene& scene, std::size_t n_train,
                          std::size_t n_heldout, const std::string& pattern,
                          std::size_t image_size, std::uint64_t seed) {
    if (n_train < 1) fail("sceneio", "make_dataset: need at least one training view");
    const PatternSpec spec = pattern_spec(pattern);
    Rng rng(derive_seed(seed, 0xD5));

    SceneDataset ds;
    ds.bounds = scene.bounds;
    ds.pattern = pattern;
    ds.near = scene.near;
    ds.far = scene.far;
    ds.background = pattern == "arc" ? Eigen::Vector3d(0, 0, 0) : Eigen::Vector3d(1, 1, 1);

    AnalyticScene shaded = scene;
    shaded.background = ds.background;

    auto make_view = [&](double az, double el) {
        Camera cam = make_orbit_camera(az, el, scene.cam_distance, image_size, scene.near,
                                       scene.far);
        OracleRender r = oracle_render(shaded, cam);
        return View{std::move(r.image), std::move(r.depth), cam};
    };

    for (std::size_t i = 0; i < n_train; ++i) {
        const double az = n_train == 1 ? 0.5 * (spec.az_lo + spec.az_hi)
                                       : spec.az_lo + (spec.az_hi - spec.az_lo) *
                                                          static_cast<double>(i) /
                                                          static_cast<double>(n_train - 1);
        ds.train.push_back(make_view(az, spec.elevation));
    }
    for (std::size_t j = 0; j < n_heldout; ++j) {
        const double az = spec.az_lo + (spec.az_hi - spec.az_lo) *
                                           (static_cast<double>(j) + 0.5) /
                                           static_cast<double>(n_heldout);
        const double el = spec.elevation + rng.uniform(-2.0, 2.0);
        ds.heldout.push_back(make_view(az, el));
    }
    return ds;
}

std::vector<Camera> eval_path_cameras(const SceneDataset& dataset, const std::string& path,
                                      std::size_t count, std::size_t image_size) {
    if (dataset.train.empty()) fail("sceneio", "eval path: dataset has no training views");
    const double distance = dataset.train[0].cam.position().norm();
    const PatternSpec spec = pattern_spec(dataset.pattern);

    std::string kind = path;
    if (path == "auto") kind = "arc";
    if (path.rfind("circle", 0) == 0) {
        kind = "circle";
        if (path.size() > 6) count = std::strtoull(path.c_str() + 6, nullptr, 10);
    } else if (path.rfind("arc", 0) == 0 && path != "arc") {
        kind = "arc";
        count = std::strtoull(path.c_str() + 3, nullptr, 10);
    }
    if (count < 2) fail("sceneio", "eval path needs at least 2 poses");

    std::vector<Camera> cams;
    cams.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        double az;
        if (kind == "circle") {
            az = 360.0 * static_cast<double>(i) / static_cast<double>(count);
        } else if (kind == "arc") {
            const double lo = spec.az_lo - 5.0, hi = spec.az_hi + 5.0;
            az = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
        } else {
            fail("sceneio", "unknown eval path '" + path + "'");
        }
        cams.push_back(make_orbit_camera(az, spec.elevation, distance, image_size, dataset.near,
                                         dataset.far));
    }
    return cams;
}

namespace {

// Standard synthetic-camera files use OpenGL axes (-z forward, +y up).
Eigen::Matrix3d gl_to_render(const Eigen::Matrix3d& r_gl) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(1, 1) = -1.0;
    flip(2, 2) = -1.0;
    return r_gl * flip;
}

json camera_to_frame(const Camera& cam, const std::string& file_path,
                     const std::string& depth_path) {
    const Eigen::Matrix3d r_gl = gl_to_render(cam.rot);  // involution: same flip both ways
    json m = json::array();
    for (int r = 0; r < 4; ++r) {
        json row = json::array();
        for (int c = 0; c < 4; ++c) {
            double v;
            if (r < 3 && c < 3)
                v = r_gl(r, c);
            else if (r < 3)
                v = cam.trans[r];
            else
                v = c == 3 ? 1.0 : 0.0;
            row.push_back(v);
        }
        m.push_back(row);
    }
    json frame;
    frame["file_path"] = file_path;
    if (!depth_path.empty()) frame["depth_path"] = depth_path;
    frame["transform_matrix"] = m;
    return frame;
}

}  // namespace

std::vector<View> load_transforms_json(const std::string& path, SceneDataset* meta) {
    std::ifstream in(path);
    if (!in) fail("sceneio", "cannot open " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        fail("sceneio", "malformed JSON in " + path + " at byte " + std::to_string(e.byte) +
                            ": " + e.what());
    }
    if (!root.contains("camera_angle_x") || !root.contains("frames"))
        fail("sceneio", path + " is missing camera_angle_x or frames");
    const double angle_x = root["camera_angle_x"].get<double>();

    Eigen::Vector3d background(1, 1, 1);
    if (root.contains("background"))
        for (int c = 0; c < 3; ++c) background[c] = root["background"][c].get<double>();

    double near = 2.0, far = 6.0;
    if (root.contains("near")) near = root["near"].get<double>();
    if (root.contains("far")) far = root["far"].get<double>();

    if (meta) {
        meta->background = background;
        meta->near = near;
        meta->far = far;
        if (root.contains("pattern")) meta->pattern = root["pattern"].get<std::string>();
        if (root.contains("scene_bounds")) {
            for (int c = 0; c < 3; ++c) {
                meta->bounds.lo[c] = root["scene_bounds"][0][c].get<double>();
                meta->bounds.hi[c] = root["scene_bounds"][1][c].get<double>();
            }
        }
    }

    const fs::path dir = fs::path(path).parent_path();
    std::vector<View> views;
    for (const json& frame : root["frames"]) {
        if (!frame.contains("file_path") || !frame.contains("transform_matrix"))
            fail("sceneio", path + ": frame is missing file_path or transform_matrix");
        fs::path img_path = dir / frame["file_path"].get<std::string>();
        if (!img_path.has_extension()) img_path += ".png";
        if (!fs::exists(img_path))
            fail("sceneio", "image file " + img_path.string() + " does not exist");
        Array raw = read_png(img_path.string());
        Array image = to_rgb(raw, background.mean());

        View view;
        view.image = std::move(image);
        view.cam.width = view.image.extent(1);
        view.cam.height = view.image.extent(0);
        view.cam.fx = view.cam.fy =
            0.5 * static_cast<double>(view.cam.width) / std::tan(0.5 * angle_x);
        view.cam.cx = 0.5 * static_cast<double>(view.cam.width);
        view.cam.cy = 0.5 * static_cast<double>(view.cam.height);
        view.cam.near = near;
        view.cam.far = far;

        const json& m = frame["transform_matrix"];
        Eigen::Matrix3d r_gl;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) r_gl(r, c) = m[r][c].get<double>();
            view.cam.trans[r] = m[r][3].get<double>();
        }
        view.cam.rot = gl_to_render(r_gl);
        const double det = view.cam.rot.determinant();
        if (std::abs(det - 1.0) > 1e-6)
            fail("sceneio", path + ": transform_matrix is not a rigid transform (det " +
                                std::to_string(det) + ")");
        view.cam.validate();

        if (frame.contains("depth_path"))
            view.depth = read_pfm((dir / frame["depth_path"].get<std::string>()).string());
        views.push_back(std::move(view));
    }
    return views;
}

SceneDataset load_scene_dir(const std::string& dir) {
    SceneDataset ds;
    const fs::path train_json = fs::path(dir) / "transforms_train.json";
    if (!fs::exists(train_json))
        fail("sceneio", dir + " does not contain transforms_train.json");
    ds.train = load_transforms_json(train_json.string(), &ds);
    const fs::path heldout_json = fs::path(dir) / "transforms_heldout.json";
    if (fs::exists(heldout_json)) ds.heldout = load_transforms_json(heldout_json.string(), nullptr);
    return ds;
}

void write_scene_dir(const std::string& dir, const SceneDataset& dataset) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "depths");

    auto write_split = [&](const std::vector<View>& views, const std::string& split) {
        json root;
        if (!views.empty())
            root["camera_angle_x"] =
                2.0 * std::atan(0.5 * static_cast<double>(views[0].cam.width) / views[0].cam.fx);
        root["scene_bounds"] = {{dataset.bounds.lo[0], dataset.bounds.lo[1], dataset.bounds.lo[2]},
                                {dataset.bounds.hi[0], dataset.bounds.hi[1], dataset.bounds.hi[2]}};
        root["near"] = dataset.near;
        root["far"] = dataset.far;
        root["pattern"] = dataset.pattern;
        root["background"] = {dataset.background[0], dataset.background[1],
                              dataset.background[2]};
        json frames = json::array();
        for (std::size_t i = 0; i < views.size(); ++i) {
            char idx[8];
            std::snprintf(idx, sizeof(idx), "%03zu", i);
            const std::string img_rel = "images/" + split + "_" + idx + ".png";
            const std::string depth_rel = "depths/" + split + "_" + idx + ".pfm";
            write_png((fs::path(dir) / img_rel).string(), views[i].image);
            const bool has_depth = views[i].depth.size() > 0;
            if (has_depth) write_pfm((fs::path(dir) / depth_rel).string(), views[i].depth);
            frames.push_back(camera_to_frame(views[i].cam, img_rel,
                                             has_depth ? depth_rel : std::string()));
        }
        root["frames"] = frames;
        std::ofstream out(fs::path(dir) / ("transforms_" + split + ".json"));
        out << root.dump(2) << "\n";
    };

    write_split(dataset.train, "train");
    if (!dataset.heldout.empty()) write_split(dataset.heldout, "heldout");
}

void write_render_manifest(const std::string& path, const RenderManifest& manifest) {
    json root;
    if (manifest.entries.empty()) fail("sceneio", "render manifest: no frames");
    const Camera& c0 = manifest.entries[0].cam;
    root["camera_angle_x"] = 2.0 * std::atan(0.5 * static_cast<double>(c0.width) / c0.fx);
    root["near"] = c0.near;
    root["far"] = c0.far;
    root["scene_bounds"] = {
        {manifest.bounds.lo[0], manifest.bounds.lo[1], manifest.bounds.lo[2]},
        {manifest.bounds.hi[0], manifest.bounds.hi[1], manifest.bounds.hi[2]}};
    root["background"] = {manifest.background[0], manifest.background[1],
                          manifest.background[2]};
    json frames = json::array();
    for (const RenderManifestEntry& e : manifest.entries) {
        json frame = camera_to_frame(e.cam, e.image_png, e.depth_pfm);
        frame["f64_path"] = e.image_f64;
        frames.push_back(frame);
    }
    root["frames"] = frames;
    std::ofstream out(path);
    if (!out) fail("sceneio", "cannot write " + path);
    out << root.dump(2) << "\n";
}

RenderManifest read_render_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("sceneio", "cannot open " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        fail("sceneio", "malformed JSON in " + path + " at byte " + std::to_string(e.byte) +
                            ": " + e.what());
    }
    RenderManifest manifest;
    for (int c = 0; c < 3; ++c) {
        manifest.bounds.lo[c] = root["scene_bounds"][0][c].get<double>();
        manifest.bounds.hi[c] = root["scene_bounds"][1][c].get<double>();
        manifest.background[c] = root["background"][c].get<double>();
    }
    manifest.camera_angle_x = root["camera_angle_x"].get<double>();
    const double near = root["near"].get<double>();
    const double far = root["far"].get<double>();
    for (const json& frame : root["frames"]) {
        RenderManifestEntry e;
        e.image_png = frame["file_path"].get<std::string>();
        e.image_f64 = frame.value("f64_path", std::string());
        e.depth_pfm = frame.value("depth_path", std::string());
        const json& m = frame["transform_matrix"];
        Eigen::Matrix3d r_gl;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) r_gl(r, c) = m[r][c].get<double>();
            e.cam.trans[r] = m[r][3].get<double>();
        }
        e.cam.rot = gl_to_render(r_gl);
        e.cam.near = near;
        e.cam.far = far;
        manifest.entries.push_back(e);
    }
    return manifest;
}

void finalize_manifest_camera(Camera& cam, double camera_angle_x, std::size_t width,
                              std::size_t height) {
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = 0.5 * static_cast<double>(width) / std::tan(0.5 * camera_angle_x);
    cam.cx = 0.5 * static_cast<double>(width);
    cam.cy = 0.5 * static_cast<double>(height);
    cam.validate();
}

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise on a `cells` x `cells` random lattice (wrapping).
Array value_noise(std::size_t size, std::size_t cells, Rng& rng) {
    std::vector<double> lattice(cells * cells);
    for (double& v : lattice) v = rng.uniform();
    Array out(Shape{size, size});
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double gx = static_cast<double>(x) / static_cast<double>(size) *
                              static_cast<double>(cells);
            const double gy = static_cast<double>(y) / static_cast<double>(size) *
                              static_cast<double>(cells);
            const std::size_t x0 = static_cast<std::size_t>(gx) % cells;
            const std::size_t y0 = static_cast<std::size_t>(gy) % cells;
            const std::size_t x1 = (x0 + 1) % cells;
            const std::size_t y1 = (y0 + 1) % cells;
            const double tx = smoothstep(gx - std::floor(gx));
            const double ty = smoothstep(gy - std::floor(gy));
            const double a = lattice[y0 * cells + x0], b = lattice[y0 * cells + x1];
            const double c = lattice[y1 * cells + x0], d = lattice[y1 * cells + x1];
            out[y * size + x] = (a * (1 - tx) + b * tx) * (1 - ty) +
                                (c * (1 - tx) + d * tx) * ty;
        }
    return out;
}

Eigen::Vector3d lerp3(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double t) {
    return a + (b - a) * t;
}

}  // namespace

Array style_texture(const std::string& kind, std::size_t size, std::uint64_t seed) {
    if (size < 16) fail("sceneio", "style_texture: size must be >= 16");
    Rng rng(derive_seed(seed, 0x57));
    Array out(Shape{size, size, 3});

    if (kind == "stripes") {
        const double angle = rng.uniform(0.3, 1.2);
        const double period = static_cast<double>(size) / rng.uniform(5.0, 8.0);
        const Eigen::Vector3d c1(0.93, 0.76, 0.22), c2(0.18, 0.23, 0.52);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double s = std::cos(angle) * static_cast<double>(x) +
                                 std::sin(angle) * static_cast<double>(y);
                const double v = 0.5 + 0.5 * std::sin(2.0 * 3.14159265358979 * s / period);
                const Eigen::Vector3d col = lerp3(c1, c2, smoothstep(v));
                for (int c = 0; c < 3; ++c) out[(y * size + x) * 3 + c] = col[c];
            }
        return out;
    }

    if (kind == "checker") {
        const std::size_t cell = std::max<std::size_t>(4, size / 8);
        const std::size_t n = (size + cell - 1) / cell;
        std::vector<Eigen::Vector3d> cell_colors(n * n);
        const Eigen::Vector3d c1(0.85, 0.2, 0.25), c2(0.95, 0.9, 0.8);
        for (std::size_t i = 0; i < n * n; ++i) {
            const std::size_t cy = i / n, cx = i % n;
            Eigen::Vector3d base = ((cx + cy) % 2 == 0) ? c1 : c2;
            for (int c = 0; c < 3; ++c) {
                base[c] += rng.uniform(-0.12, 0.12);
                base[c] = std::min(1.0, std::max(0.0, base[c]));
            }
            cell_colors[i] = base;
        }
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const Eigen::Vector3d& col = cell_colors[(y / cell) * n + (x / cell)];
                for (int c = 0; c < 3; ++c) out[(y * size + x) * 3 + c] = col[c];
            }
        return out;
    }

    if (kind == "perlin") {
        Array n1 = value_noise(size, 6, rng);
        Array n2 = value_noise(size, 12, rng);
        Array n3 = value_noise(size, 24, rng);
        const Eigen::Vector3d c1(0.10, 0.17, 0.36), c2(0.33, 0.55, 0.55), c3(0.93, 0.84, 0.55);
        for (std::size_t p = 0; p < size * size; ++p) {
            const double v = 0.55 * n1[p] + 0.3 * n2[p] + 0.15 * n3[p];
            const Eigen::Vector3d col = v < 0.5 ? lerp3(c1, c2, smoothstep(v / 0.5))
                                                : lerp3(c2, c3, smoothstep((v - 0.5) / 0.5));
            for (int c = 0; c < 3; ++c) out[p * 3 + c] = col[c];
        }
        return out;
    }

    fail("sceneio", "unknown style texture '" + kind + "' (want stripes, checker or perlin)");
}

}  // namespace sf
