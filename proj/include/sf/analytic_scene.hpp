#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sf/camera.hpp"
#include "sf/fields.hpp"

namespace sf {

struct SpherePrim {
    Eigen::Vector3d center;
    double radius;
    Eigen::Vector3d albedo;
};

struct BoxPrim {
    Eigen::Vector3d lo, hi;
    Eigen::Vector3d albedo;
};

// Procedural ground-truth scene with exact ray intersections; stands in for
// captured data so acceptance runs have analytic images and depths.
struct AnalyticScene {
    std::vector<SpherePrim> spheres;
    std::vector<BoxPrim> boxes;
    Eigen::Vector3d light_dir{-0.5, 0.3, -0.8};  // from light toward the scene, unit
    double ambient = 0.3;
    double diffuse = 0.7;
    Eigen::Vector3d background{1.0, 1.0, 1.0};
    AxisBounds bounds;
    double cam_distance = 4.0;
    double near = 2.0;
    double far = 6.5;
};

// Presets: "sphere" (single matte sphere) and "duo" (sphere + box).
AnalyticScene make_scene_preset(const std::string& kind);

struct Hit {
    double t = 0;              // distance along the unit ray
    Eigen::Vector3d normal;    // unit, outward
    Eigen::Vector3d albedo;
};

// Nearest intersection in (t_min, inf); false if the ray misses everything.
bool intersect_scene(const AnalyticScene& scene, const Ray& ray, Hit& hit,
                     double t_min = 1e-9);

struct OracleRender {
    Array image;  // [H,W,3]
    Array depth;  // [H,W], +inf where no primitive is hit
};

// Exact Lambertian render: albedo * (ambient + diffuse * max(0, n . -l)).
OracleRender oracle_render(const AnalyticScene& scene, const Camera& camera);

}  // namespace sf
