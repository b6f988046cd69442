#include "mvskel/camera.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mvskel {

using nlohmann::json;

void validate_intrinsics(const Intrinsics& intr) {
    if (!(intr.fx > 0.0) || !(intr.fy > 0.0))
        throw std::invalid_argument("intrinsics: focal lengths must be positive");
    const double fields[] = {intr.fx, intr.fy, intr.cx, intr.cy};
    for (double f : fields)
        if (!std::isfinite(f)) throw std::invalid_argument("intrinsics: non-finite field");
    for (double k : intr.dist)
        if (!std::isfinite(k))
            throw std::invalid_argument("intrinsics: non-finite distortion coefficient");
}

void validate_extrinsics(const Extrinsics& ext) {
    if (!ext.rotation.allFinite() || !ext.translation.allFinite())
        throw std::invalid_argument("extrinsics: non-finite field");
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& axis_angle) {
    const double theta2 = axis_angle.squaredNorm();
    Eigen::Matrix3d skew;
    skew << 0, -axis_angle.z(), axis_angle.y(),
        axis_angle.z(), 0, -axis_angle.x(),
        -axis_angle.y(), axis_angle.x(), 0;

    double a, b;  // R = I + a*skew + b*skew^2
    if (theta2 < 1e-12) {
        // second-order series, exact to machine precision at this scale
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        const double theta = std::sqrt(theta2);
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    return Eigen::Matrix3d::Identity() + a * skew + b * (skew * skew);
}

Eigen::Vector3d axis_angle(const Eigen::Matrix3d& R) {
    const double cos_theta = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    Eigen::Vector3d vee(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (theta < 1e-8) return 0.5 * vee;
    if (theta > M_PI - 1e-6) {
        // near pi the vee part vanishes; recover the axis from R + I
        Eigen::Matrix3d M = 0.5 * (R + Eigen::Matrix3d::Identity());
        Eigen::Vector3d axis(std::sqrt(std::max(0.0, M(0, 0))),
                             std::sqrt(std::max(0.0, M(1, 1))),
                             std::sqrt(std::max(0.0, M(2, 2))));
        // fix signs using the largest component
        int k = 0;
        M.diagonal().maxCoeff(&k);
        if (axis[k] < 1e-12) return Eigen::Vector3d::Zero();
        for (int i = 0; i < 3; ++i)
            if (i != k) axis[i] = std::copysign(axis[i], M(i, k));
        return theta * axis.normalized();
    }
    return (theta / (2.0 * std::sin(theta))) * vee;
}

Eigen::Vector2d distort(const Eigen::Vector2d& p, const std::array<double, 5>& dist) {
    const double k1 = dist[0], k2 = dist[1], p1 = dist[2], p2 = dist[3], k3 = dist[4];
    const double x = p.x(), y = p.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    return {xd, yd};
}

Eigen::Vector2d undistort(const Eigen::Vector2d& p, const std::array<double, 5>& dist,
                          int max_iterations) {
    Eigen::Vector2d u = p;
    for (int i = 0; i < max_iterations; ++i) {
        const Eigen::Vector2d d = distort(u, dist);
        const Eigen::Vector2d err = d - p;
        u -= err;
        if (err.squaredNorm() < 1e-24) break;
    }
    return u;
}

std::optional<Eigen::Vector2d> try_project(const Intrinsics& intr,
                                           const Eigen::Vector3d& p_cam) {
    if (!(p_cam.z() > 0.0)) return std::nullopt;
    const Eigen::Vector2d n(p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z());
    const Eigen::Vector2d d = distort(n, intr.dist);
    return Eigen::Vector2d(intr.fx * d.x() + intr.cx, intr.fy * d.y() + intr.cy);
}

Eigen::Vector2d project(const Intrinsics& intr, const Eigen::Vector3d& p_cam) {
    auto uv = try_project(intr, p_cam);
    if (!uv)
        throw std::domain_error("project: point at or behind the camera (z = " +
                                std::to_string(p_cam.z()) + ")");
    return *uv;
}

Eigen::Vector2d pixel_to_normalized(const Intrinsics& intr, const Eigen::Vector2d& pixel) {
    const Eigen::Vector2d d((pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy);
    return undistort(d, intr.dist);
}

Eigen::Vector3d world_to_cam(const Extrinsics& ext, const Eigen::Vector3d& p_world) {
    return rotation_matrix(ext.rotation) * p_world + ext.translation;
}

Eigen::Vector3d cam_to_world(const Extrinsics& ext, const Eigen::Vector3d& p_cam) {
    return rotation_matrix(ext.rotation).transpose() * (p_cam - ext.translation);
}

Eigen::Vector3d camera_center(const Extrinsics& ext) {
    return -(rotation_matrix(ext.rotation).transpose() * ext.translation);
}

Eigen::Vector2d project_world(const CameraParams& cam, const Eigen::Vector3d& p_world) {
    return project(cam.intrinsics, world_to_cam(cam.extrinsics, p_world));
}

std::optional<Eigen::Vector2d> try_project(const CameraParams& cam, const Eigen::Vector3d& p_world) {
    return try_project(cam.intrinsics, world_to_cam(cam.extrinsics, p_world));
}

std::vector<CameraParams> load_calibration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open calibration file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("calibration file " + path.string() + ": " + e.what());
    }
    std::vector<CameraParams> cameras;
    for (const auto& c : j.at("cameras")) {
        CameraParams cam;
        cam.name = c.at("name").get<std::string>();
        cam.intrinsics.fx = c.at("fx").get<double>();
        cam.intrinsics.fy = c.at("fy").get<double>();
        cam.intrinsics.cx = c.at("cx").get<double>();
        cam.intrinsics.cy = c.at("cy").get<double>();
        const auto& dist = c.at("dist");
        if (dist.size() != 5)
            throw std::runtime_error(path.string() + ": camera '" + cam.name +
                                     "': dist must have 5 coefficients");
        for (std::size_t k = 0; k < 5; ++k) cam.intrinsics.dist[k] = dist[k].get<double>();
        const auto& rvec = c.at("rvec");
        const auto& tvec = c.at("tvec");
        if (rvec.size() != 3 || tvec.size() != 3)
            throw std::runtime_error(path.string() + ": camera '" + cam.name +
                                     "': rvec/tvec must have 3 entries");
        for (int k = 0; k < 3; ++k) {
            cam.extrinsics.rotation[k] = rvec[k].get<double>();
            cam.extrinsics.translation[k] = tvec[k].get<double>();
        }
        validate_intrinsics(cam.intrinsics);
        validate_extrinsics(cam.extrinsics);
        cameras.push_back(std::move(cam));
    }
    return cameras;
}

void save_calibration(const std::filesystem::path& path, const std::vector<CameraParams>& cameras) {
    json j;
    j["cameras"] = json::array();
    for (const auto& cam : cameras) {
        json c;
        c["name"] = cam.name;
        c["fx"] = cam.intrinsics.fx;
        c["fy"] = cam.intrinsics.fy;
        c["cx"] = cam.intrinsics.cx;
        c["cy"] = cam.intrinsics.cy;
        c["dist"] = cam.intrinsics.dist;
        c["rvec"] = {cam.extrinsics.rotation.x(), cam.extrinsics.rotation.y(),
                     cam.extrinsics.rotation.z()};
        c["tvec"] = {cam.extrinsics.translation.x(), cam.extrinsics.translation.y(),
                     cam.extrinsics.translation.z()};
        j["cameras"].push_back(std::move(c));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write calibration file: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace mvskel
