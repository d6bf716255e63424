// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/camera.hpp"

#include "liftrefine/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

namespace liftrefine {

namespace {

constexpr double kPi = std::numbers::pi;

// Signed shortest angular step from a to b in (-pi, pi]; a half-turn (within
// rounding) resolves to +pi.
double shortest_arc(double a, double b) {
    double d = std::remainder(b - a, 2.0 * kPi);
    if (std::abs(std::abs(d) - kPi) < 1e-12) d = kPi;
    return d;
}

bool lexicographic_less(const Vec3& a, const Vec3& b) {
    for (int i = 0; i < 3; ++i) {
        if (a[i] != b[i]) return a[i] < b[i];
    }
    return false;
}

void check_orbiting(const CameraPose& pose, const char* which) {
    const Vec3 c = pose.center();
    if (c.norm() < 1e-9) throw ValueError(std::string("interpolate_poses: ") + which + " camera sits at the origin");
    const CameraPose ref = look_at(c, Vec3::Zero(), pose.fx, pose.fy, pose.cx, pose.cy, pose.width, pose.height);
    if ((ref.rotation - pose.rotation).norm() > 1e-6) {
        throw ValueError(std::string("interpolate_poses: ") + which + " camera does not look at the origin");
    }
}

} // namespace

void CameraPose::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValueError("CameraPose: focal lengths must be positive");
    if (width < 1 || height < 1) throw ValueError("CameraPose: image size must be at least 1x1");
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw ValueError("CameraPose: rotation is not orthonormal");
    }
    if (std::abs(rotation.determinant() - 1.0) > 1e-9) throw ValueError("CameraPose: rotation determinant != +1");
    if (!translation.allFinite()) throw ValueError("CameraPose: non-finite translation");
}

Vec2 project(const CameraPose& pose, const Vec3& world) {
    const Vec3 p = pose.to_camera(world);
    if (p.z() <= kMinDepth) {
        std::ostringstream os;
        os << "project: point (" << world.x() << ", " << world.y() << ", " << world.z()
           << ") is behind the camera (depth " << p.z() << ")";
        throw BehindCameraError(os.str());
    }
    return {pose.fx * p.x() / p.z() + pose.cx, pose.fy * p.y() / p.z() + pose.cy};
}

Ray pixel_to_ray(const CameraPose& pose, double u, double v) {
    const Vec3 dir_cam((u - pose.cx) / pose.fx, (v - pose.cy) / pose.fy, 1.0);
    Ray ray;
    ray.origin = pose.center();
    ray.direction = (pose.rotation.transpose() * dir_cam).normalized();
    return ray;
}

std::optional<std::pair<double, double>> intersect_cube(const Ray& ray, double half) {
    double t0 = ray.t_near;
    double t1 = ray.t_far;
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a];
        const double d = ray.direction[a];
        if (std::abs(d) < 1e-15) {
            if (o < -half || o > half) return std::nullopt;
            continue;
        }
        double ta = (-half - o) / d;
        double tb = (half - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 >= t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

CameraPose look_at(const Vec3& eye, const Vec3& target, double fx, double fy, double cx, double cy,
                   std::int64_t width, std::int64_t height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up(0.0, 1.0, 0.0);
    if (forward.cross(up).norm() < 1e-9) up = Vec3(0.0, 0.0, 1.0);
    const Vec3 x = forward.cross(up).normalized();
    const Vec3 y = forward.cross(x);
    CameraPose pose;
    pose.fx = fx;
    pose.fy = fy;
    pose.cx = cx;
    pose.cy = cy;
    pose.width = width;
    pose.height = height;
    pose.rotation.row(0) = x.transpose();
    pose.rotation.row(1) = y.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -pose.rotation * eye;
    return pose;
}

Vec3 spherical_to_cartesian(double radius, double azimuth, double elevation) {
    return {radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation),
            radius * std::cos(elevation) * std::cos(azimuth)};
}

CameraPose orbit_pose(double radius, double azimuth, double elevation, double focal, std::int64_t width,
                      std::int64_t height) {
    return look_at(spherical_to_cartesian(radius, azimuth, elevation), Vec3::Zero(), focal, focal,
                   0.5 * static_cast<double>(width), 0.5 * static_cast<double>(height), width, height);
}

SphericalCoords spherical_coords(const Vec3& position) {
    const double r = position.norm();
    if (r < 1e-12) return {0.0, 0.0, 0.0};
    return {r, std::atan2(position.x(), position.z()), std::asin(std::clamp(position.y() / r, -1.0, 1.0))};
}

std::vector<CameraPose> interpolate_poses(const CameraPose& start, const CameraPose& end, std::int64_t n,
                                          InterpolationMode mode) {
    if (n < 0) throw ValueError("interpolate_poses: n must be >= 0");
    if (n > kMaxInterpolatedPoses) {
        throw ValueError("interpolate_poses: n = " + std::to_string(n) + " exceeds capacity " +
                         std::to_string(kMaxInterpolatedPoses));
    }
    std::vector<CameraPose> out;
    if (n == 0) return out;
    out.reserve(static_cast<std::size_t>(n));
    const double denom = static_cast<double>(n + 1);

    if (mode == InterpolationMode::spherical) {
        check_orbiting(start, "start");
        check_orbiting(end, "end");
        SphericalCoords a = spherical_coords(start.center());
        SphericalCoords b = spherical_coords(end.center());
        if (std::abs(a.radius - b.radius) >= 0.01 * std::max(a.radius, b.radius)) {
            throw ValueError("interpolate_poses: start and end radii differ by 1% or more");
        }
        // Evaluate in a canonical endpoint order so that swapping start and end
        // reproduces the reversed list bit for bit. A half-turn is excluded:
        // its direction depends on which endpoint comes first.
        const bool tie = shortest_arc(a.azimuth, b.azimuth) == kPi;
        const bool flip = !tie && (b.azimuth < a.azimuth || (b.azimuth == a.azimuth && b.elevation < a.elevation));
        const double radius = 0.5 * (a.radius + b.radius);
        if (flip) std::swap(a, b);
        const double d_az = shortest_arc(a.azimuth, b.azimuth);
        for (std::int64_t i = 1; i <= n; ++i) {
            const double wb = static_cast<double>(i) / denom;
            const double az = a.azimuth + wb * d_az;
            const double el = (static_cast<double>(n + 1 - i) / denom) * a.elevation + wb * b.elevation;
            out.push_back(look_at(spherical_to_cartesian(radius, az, el), Vec3::Zero(), start.fx, start.fy,
                                  start.cx, start.cy, start.width, start.height));
        }
        if (flip) std::reverse(out.begin(), out.end());
        return out;
    }

    const CameraPose* p0 = &start;
    const CameraPose* p1 = &end;
    const bool flip = lexicographic_less(end.translation, start.translation);
    if (flip) std::swap(p0, p1);
    const Eigen::Quaterniond q0(p0->rotation);
    const Eigen::Quaterniond q1(p1->rotation);
    for (std::int64_t i = 1; i <= n; ++i) {
        const double wb = static_cast<double>(i) / denom;
        const double wa = static_cast<double>(n + 1 - i) / denom;
        CameraPose p = start;
        p.translation = wa * p0->translation + wb * p1->translation;
        p.rotation = q0.slerp(wb, q1).normalized().toRotationMatrix();
        out.push_back(p);
    }
    if (flip) std::reverse(out.begin(), out.end());
    return out;
}

void write_poses(const std::filesystem::path& path, const std::vector<CameraPose>& poses) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw ValueError("cannot write " + path.string());
    char buf[64];
    auto put = [&](double v, bool last) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        f << buf << (last ? '\n' : ' ');
    };
    for (const auto& p : poses) {
        put(p.fx, false);
        put(p.fy, false);
        put(p.cx, false);
        put(p.cy, false);
        f << p.width << ' ' << p.height << ' ';
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) put(p.rotation(r, c), false);
        for (int i = 0; i < 3; ++i) put(p.translation[i], i == 2);
    }
}

std::vector<CameraPose> read_poses(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValueError("cannot read " + path.string());
    std::vector<CameraPose> poses;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream is(line);
        CameraPose p;
        is >> p.fx >> p.fy >> p.cx >> p.cy >> p.width >> p.height;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) is >> p.rotation(r, c);
        for (int i = 0; i < 3; ++i) is >> p.translation[i];
        std::string extra;
        if (is.fail() || (is >> extra)) {
            throw ValueError(path.string() + ":" + std::to_string(line_no) + ": expected 18 pose fields");
        }
        p.validate();
        poses.push_back(p);
    }
    return poses;
}

} // namespace liftrefine
