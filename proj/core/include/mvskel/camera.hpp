#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mvskel {

/// Pinhole intrinsics with 5-coefficient Brown-Conrady distortion
/// (k1, k2, p1, p2, k3). Focal lengths and principal point in pixels.
struct Intrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    std::array<double, 5> dist = {0, 0, 0, 0, 0};
};

/// Rigid camera-from-world transform: p_cam = R(rotation) * p_world + translation.
/// Rotation is an axis-angle 3-vector (radians), translation in meters.
struct Extrinsics {
    Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct CameraParams {
    std::string name;
    Intrinsics intrinsics;
    Extrinsics extrinsics;
};

void validate_intrinsics(const Intrinsics& intr);
void validate_extrinsics(const Extrinsics& ext);

/// Rodrigues rotation: axis-angle to orthonormal matrix, det = 1.
/// The zero vector maps to the identity. Total function.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& axis_angle);

/// Inverse of rotation_matrix (matrix log). Angle in [0, pi].
Eigen::Vector3d axis_angle(const Eigen::Matrix3d& rotation);

/// Brown-Conrady forward distortion on a normalized image point:
///   r^2 = x^2 + y^2, radial = 1 + k1 r^2 + k2 r^4 + k3 r^6
///   x' = x*radial + 2 p1 x y + p2 (r^2 + 2 x^2)
///   y' = y*radial + p1 (r^2 + 2 y^2) + 2 p2 x y
Eigen::Vector2d distort(const Eigen::Vector2d& p, const std::array<double, 5>& dist);

/// Iterative fixed-point inverse of distort. Converges within 1e-9 near the
/// origin for moderate coefficients (|p| <= 0.7, |k| <= 0.1).
Eigen::Vector2d undistort(const Eigen::Vector2d& p, const std::array<double, 5>& dist,
                          int max_iterations = 20);

/// Projects a camera-frame point to pixels: normalize by z, distort, apply
/// focal/principal point. Throws std::domain_error when z <= 0.
Eigen::Vector2d project(const Intrinsics& intr, const Eigen::Vector3d& p_cam);

/// Non-throwing variant; empty when the point is at or behind the camera.
std::optional<Eigen::Vector2d> try_project(const Intrinsics& intr, const Eigen::Vector3d& p_cam);

/// Full-camera projection of a world point.
Eigen::Vector2d project_world(const CameraParams& cam, const Eigen::Vector3d& p_world);
std::optional<Eigen::Vector2d> try_project(const CameraParams& cam, const Eigen::Vector3d& p_world);

/// Pixel to undistorted normalized image coordinates (ideal pinhole ray
/// direction (x, y, 1)).
Eigen::Vector2d pixel_to_normalized(const Intrinsics& intr, const Eigen::Vector2d& pixel);

Eigen::Vector3d world_to_cam(const Extrinsics& ext, const Eigen::Vector3d& p_world);
Eigen::Vector3d cam_to_world(const Extrinsics& ext, const Eigen::Vector3d& p_cam);

/// Camera center in world coordinates: -R^T * t.
Eigen::Vector3d camera_center(const Extrinsics& ext);

/// Calibration file:
///   {"cameras":[{"name":..., "fx":..,"fy":..,"cx":..,"cy":..,
///     "dist":[k1,k2,p1,p2,k3], "rvec":[..], "tvec":[..]}]}
std::vector<CameraParams> load_calibration(const std::filesystem::path& path);
void save_calibration(const std::filesystem::path& path, const std::vector<CameraParams>& cameras);

}  // namespace mvskel
