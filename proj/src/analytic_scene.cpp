#include "sf/analytic_scene.hpp"

#include <cmath>
#include <limits>

#include "sf/errors.hpp"

namespace sf {

AnalyticScene make_scene_preset(const std::string& kind) {
    AnalyticScene scene;
    scene.light_dir = Eigen::Vector3d(-0.45, 0.35, -0.82).normalized();
    if (kind == "sphere") {
        scene.spheres.push_back({{0.0, 0.0, 0.0}, 1.0, {0.82, 0.38, 0.26}});
    } else if (kind == "duo") {
        scene.spheres.push_back({{-0.55, -0.15, 0.1}, 0.62, {0.82, 0.38, 0.26}});
        scene.boxes.push_back({{0.1, -0.35, -0.75}, {0.95, 0.5, 0.15}, {0.25, 0.45, 0.8}});
    } else {
        fail("sceneio", "unknown scene preset '" + kind + "' (want sphere or duo)");
    }
    scene.bounds.lo = Eigen::Vector3d(-1.5, -1.5, -1.5);
    scene.bounds.hi = Eigen::Vector3d(1.5, 1.5, 1.5);
    scene.cam_distance = 4.0;
    scene.near = 2.0;
    scene.far = 6.5;
    return scene;
}

namespace {

bool intersect_sphere(const SpherePrim& s, const Ray& ray, double t_min, double& t,
                      Eigen::Vector3d& normal) {
    const Eigen::Vector3d oc = ray.origin - s.center;
    const double b = oc.dot(ray.dir);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    const double sq = std::sqrt(disc);
    double root = -b - sq;
    if (root <= t_min) root = -b + sq;
    if (root <= t_min) return false;
    t = root;
    normal = (ray.origin + t * ray.dir - s.center) / s.radius;
    return true;
}

bool intersect_box(const BoxPrim& box, const Ray& ray, double t_min, double& t,
                   Eigen::Vector3d& normal) {
    double t0 = t_min, t1 = std::numeric_limits<double>::infinity();
    int axis = -1;
    bool from_lo = false;
    for (int a = 0; a < 3; ++a) {
        const double inv = 1.0 / ray.dir[a];
        double ta = (box.lo[a] - ray.origin[a]) * inv;
        double tb = (box.hi[a] - ray.origin[a]) * inv;
        bool lo_first = true;
        if (ta > tb) {
            std::swap(ta, tb);
            lo_first = false;
        }
        if (ta > t0) {
            t0 = ta;
            axis = a;
            from_lo = lo_first;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    if (axis < 0) return false;  // origin inside the box; treat as a miss
    t = t0;
    normal = Eigen::Vector3d::Zero();
    normal[axis] = from_lo ? -1.0 : 1.0;
    return true;
}

}  // namespace

bool intersect_scene(const AnalyticScene& scene, const Ray& ray, Hit& hit, double t_min) {
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    double t;
    Eigen::Vector3d n;
    for (const SpherePrim& s : scene.spheres)
        if (intersect_sphere(s, ray, t_min, t, n) && t < best) {
            best = t;
            hit = {t, n, s.albedo};
            found = true;
        }
    for (const BoxPrim& b : scene.boxes)
        if (intersect_box(b, ray, t_min, t, n) && t < best) {
            best = t;
            hit = {t, n, b.albedo};
            found = true;
        }
    return found;
}

OracleRender oracle_render(const AnalyticScene& scene, const Camera& camera) {
    camera.validate();
    const std::size_t w = camera.width, h = camera.height;
    OracleRender out{Array(Shape{h, w, 3}), Array(Shape{h, w})};
    const Eigen::Vector3d to_light = -scene.light_dir;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const Ray ray = camera.pixel_ray(x, y);
            Hit hit;
            const std::size_t p = y * w + x;
            if (intersect_scene(scene, ray, hit)) {
                const double lambert = std::max(0.0, hit.normal.dot(to_light));
                for (int c = 0; c < 3; ++c) {
                    const double v = hit.albedo[c] * (scene.ambient + scene.diffuse * lambert);
                    out.image[p * 3 + c] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                }
                out.depth[p] = hit.t;
            } else {
                for (int c = 0; c < 3; ++c) out.image[p * 3 + c] = scene.background[c];
                out.depth[p] = std::numeric_limits<double>::infinity();
            }
        }
    return out;
}

}  // namespace sf
