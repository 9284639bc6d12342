#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <utility>

namespace sf {

struct Ray {
    Eigen::Vector3d origin;
    Eigen::Vector3d dir;  // unit norm, world space
};

// Pinhole camera. Camera space: +x right, +y down, +z forward into the scene.
// `rot`/`trans` form the rigid camera-to-world transform.
struct Camera {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    std::size_t width = 0, height = 0;
    double near = 0, far = 0;
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    Eigen::Vector3d trans = Eigen::Vector3d::Zero();

    // Throws unless fx,fy > 0, 0 < near < far, and rot is orthonormal
    // (max-norm of R^T R - I below 1e-6).
    void validate() const;

    // Ray through continuous pixel position (px, py); integer pixel (ix, iy)
    // samples its center at (ix + 0.5, iy + 0.5).
    Ray ray(double px, double py) const;
    Ray pixel_ray(std::size_t ix, std::size_t iy) const;

    Eigen::Vector3d position() const { return trans; }

    // World point -> (u, v, depth) in this camera; depth is the +z distance.
    Eigen::Vector3d project(const Eigen::Vector3d& world) const;
};

// Camera at `eye` looking at `target`; +z toward the target, +y down with
// respect to `world_up`.
Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                 const Eigen::Vector3d& world_up);

}  // namespace sf
