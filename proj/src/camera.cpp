#include "sf/camera.hpp"

#include <cmath>

#include "sf/errors.hpp"

namespace sf {

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) fail("renderer", "camera: focal lengths must be positive");
    if (!(0.0 < near && near < far)) fail("renderer", "camera: need 0 < near < far");
    if (width == 0 || height == 0) fail("renderer", "camera: empty image plane");
    const Eigen::Matrix3d gram = rot.transpose() * rot - Eigen::Matrix3d::Identity();
    if (gram.cwiseAbs().maxCoeff() >= 1e-6)
        fail("renderer", "camera: rotation block is not orthonormal");
}

Ray Camera::ray(double px, double py) const {
    const Eigen::Vector3d cam_dir((px - cx) / fx, (py - cy) / fy, 1.0);
    return Ray{trans, (rot * cam_dir).normalized()};
}

Ray Camera::pixel_ray(std::size_t ix, std::size_t iy) const {
    if (ix >= width || iy >= height)
        fail("renderer", "camera: pixel (" + std::to_string(ix) + "," + std::to_string(iy) +
                             ") outside " + std::to_string(width) + "x" + std::to_string(height));
    return ray(static_cast<double>(ix) + 0.5, static_cast<double>(iy) + 0.5);
}

Eigen::Vector3d Camera::project(const Eigen::Vector3d& world) const {
    const Eigen::Vector3d cam = rot.transpose() * (world - trans);
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy, cam.z()};
}

Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                 const Eigen::Vector3d& world_up) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up = world_up;
    if (std::abs(forward.dot(up.normalized())) > 1.0 - 1e-9) up = Eigen::Vector3d(0, 1, 0);
    const Eigen::Vector3d right = forward.cross(up).normalized();
    // Columns: right, down, forward (proper rotation, +y down).
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d rot;
    rot.col(0) = right;
    rot.col(1) = down;
    rot.col(2) = forward;
    return rot;
}

}  // namespace sf
