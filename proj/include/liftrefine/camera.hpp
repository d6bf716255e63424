// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace liftrefine {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera. `rotation` and `translation` map world to camera frame:
/// x_cam = R x_world + t. The camera looks down +z, x right, y down.
struct CameraPose {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    std::int64_t width = 1, height = 1;

    Vec3 center() const { return -rotation.transpose() * translation; }
    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    /// Throws ValueError when the invariants do not hold.
    void validate() const;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;
    double t_near = 0.05;
    double t_far = 100.0;
};

inline constexpr double kMinDepth = 1e-9;

/// Throws BehindCameraError when the camera-frame depth is <= 1e-9.
Vec2 project(const CameraPose& pose, const Vec3& world);

/// Ray through continuous pixel coordinate (u, v). Pixel (j, i) has its
/// centre at (j + 0.5, i + 0.5).
Ray pixel_to_ray(const CameraPose& pose, double u, double v);

/// Entry/exit distances of a ray through the cube [-half, half]^3, clipped to
/// [t_near, t_far]; empty when the ray misses.
std::optional<std::pair<double, double>> intersect_cube(const Ray& ray, double half = 0.5);

/// World-to-camera rotation and translation for a camera at `eye` looking at
/// `target` with world up +y.
CameraPose look_at(const Vec3& eye, const Vec3& target, double fx, double fy, double cx, double cy,
                   std::int64_t width, std::int64_t height);

/// Position on a sphere about the origin. Azimuth is measured from +z toward
/// +x, elevation toward +y; both in radians.
Vec3 spherical_to_cartesian(double radius, double azimuth, double elevation);

/// Look-at-origin camera on a sphere; principal point at the image centre.
CameraPose orbit_pose(double radius, double azimuth, double elevation, double focal, std::int64_t width,
                      std::int64_t height);

struct SphericalCoords {
    double radius;
    double azimuth;
    double elevation;
};

SphericalCoords spherical_coords(const Vec3& position);

enum class InterpolationMode { spherical, linear };

/// Largest `n` accepted by interpolate_poses.
inline constexpr std::int64_t kMaxInterpolatedPoses = 64;

/// n poses strictly between start and end at fractions i/(n+1).
/// Spherical mode requires both cameras to orbit the origin at matching
/// radii (within 1%) and to look at it. The path keeps the mean of the two
/// radii; intrinsics come from `start`. Azimuth follows the shorter arc; an exact half-turn goes toward
/// increasing azimuth. Linear mode lerps translation and slerps rotation.
std::vector<CameraPose> interpolate_poses(const CameraPose& start, const CameraPose& end, std::int64_t n,
                                          InterpolationMode mode);

/// One pose per line: "fx fy cx cy w h r00 r01 ... r22 t0 t1 t2".
void write_poses(const std::filesystem::path& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> read_poses(const std::filesystem::path& path);

} // namespace liftrefine
