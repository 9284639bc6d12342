#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sf/analytic_scene.hpp"
#include "sf/camera.hpp"
#include "sf/fields.hpp"

namespace sf {

struct View {
    Array image;  // [H,W,3]
    Array depth;  // [H,W] oracle ray-distance depth; empty for external data
    Camera cam;
};

struct SceneDataset {
    std::vector<View> train, heldout;
    AxisBounds bounds;
    std::string pattern = "hemisphere";  // hemisphere (object) | arc (forward-facing)
    double near = 0, far = 0;
    Eigen::Vector3d background{1, 1, 1};
};

// Resolve the configured background: "auto" picks white for hemisphere
// (object) scenes and black for arc (forward-facing) ones.
Eigen::Vector3d resolve_background(const std::string& setting, const std::string& pattern);

// Poses look at the origin from distance `scene.cam_distance`. Patterns:
//   hemisphere - 90 degree azimuth ring at 25 degrees elevation
//   arc        - forward-facing 30 degree arc at 0 elevation
// Held-out poses interleave the training azimuths; the seed jitters their
// elevation slightly.
SceneDataset make_dataset(const AnalyticScene& scene, std::size_t n_train,
                          std::size_t n_heldout, const std::string& pattern,
                          std::size_t image_size, std::uint64_t seed);

Camera make_orbit_camera(double azimuth_deg, double elevation_deg, double distance,
                         std::size_t image_size, double near, double far);

// Evaluation camera paths. "auto" renders an arc spanning the training
// azimuths; "circle<N>"/"arc<N>" force a layout.
std::vector<Camera> eval_path_cameras(const SceneDataset& dataset, const std::string& path,
                                      std::size_t count, std::size_t image_size);

// Rescale intrinsics to a new square output size.
Camera resize_camera(const Camera& cam, std::size_t new_w, std::size_t new_h);

// Standard synthetic-camera JSON: camera_angle_x plus frames[] of
// {file_path, transform_matrix}. Extra keys written by make-scene
// (scene_bounds, near/far, pattern, background, per-frame depth_path) are
// honored when present. The OpenGL-style axes are converted to +z forward,
// +y down.
std::vector<View> load_transforms_json(const std::string& path, SceneDataset* meta);

// Scene directory produced by make-scene: transforms_train.json (+ images,
// depths, styles) and optionally transforms_heldout.json.
SceneDataset load_scene_dir(const std::string& dir);
void write_scene_dir(const std::string& dir, const SceneDataset& dataset);

// Procedural style textures; `kind` is stripes | checker | perlin.
Array style_texture(const std::string& kind, std::size_t size, std::uint64_t seed);

// poses.json written next to rendered frames so `evaluate` can rebuild
// cameras, load depths, and derive the occlusion tolerance.
struct RenderManifestEntry {
    std::string image_png, image_f64, depth_pfm;  // relative paths
    Camera cam;
};
struct RenderManifest {
    std::vector<RenderManifestEntry> entries;
    AxisBounds bounds;
    Eigen::Vector3d background{1, 1, 1};
    double camera_angle_x = 0;  // intrinsics finalize once an image size is known
};

// Fill fx/fy/cx/cy/width/height of a manifest camera for a loaded image size.
void finalize_manifest_camera(Camera& cam, double camera_angle_x, std::size_t width,
                              std::size_t height);
void write_render_manifest(const std::string& path, const RenderManifest& manifest);
RenderManifest read_render_manifest(const std::string& path);

}  // namespace sf
