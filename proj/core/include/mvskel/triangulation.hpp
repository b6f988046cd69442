#pragma once

#include <vector>

#include <Eigen/Core>

#include "mvskel/camera.hpp"
#include "mvskel/skeleton.hpp"

namespace mvskel {

/// One camera's sighting of a single joint.
struct Observation {
    const CameraParams* camera = nullptr;
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    double confidence = 0.0;
};

/// World-frame triangulation output. confidence 0 flags an invalid joint
/// (fewer than two usable views); residual_px is the reprojection RMSE over
/// the contributing views (+infinity when the point re-projects behind one).
struct TriangulatedJoint {
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    double confidence = 0.0;
    double residual_px = 0.0;

    bool valid() const { return confidence > 0.0; }
};

struct TriangulateOptions {
    double min_confidence = 0.1;  // observations below this are ignored
    bool refine = false;          // optional Gauss-Newton polish of the DLT point

    void validate() const;
};

/// Confidence-weighted linear (DLT) triangulation from undistorted normalized
/// rays; each view contributes two homogeneous rows scaled by its confidence,
/// solved by the smallest singular vector. Fewer than two usable observations
/// yield an invalid joint. Output confidence is the mean of the contributing
/// confidences.
TriangulatedJoint triangulate_point(const std::vector<Observation>& observations,
                                    const TriangulateOptions& opts = {});

/// Per-joint triangulate_point across the per-camera views of one person.
/// All views must share the layout; the result is world-frame.
Skeleton3D triangulate_skeleton(const std::vector<Skeleton2D>& views,
                                const std::vector<CameraParams>& cams,
                                const TriangulateOptions& opts = {});

/// Cross-view identity assignment for up to 2 persons per view. Returns
/// groups as per-camera person indices (-1 where a view contributes nobody);
/// the assignment minimizing the summed per-group mean joint residual wins,
/// with groups seen by fewer than two views scored by a fixed 1e6 px penalty.
std::vector<std::vector<int>> match_persons(const std::vector<std::vector<Skeleton2D>>& views,
                                            const std::vector<CameraParams>& cams,
                                            const TriangulateOptions& opts = {});

/// Reprojection RMSE in pixels over all (joint, view) pairs where both the 3D
/// and 2D confidences are positive: sqrt(mean squared pixel distance).
/// Throws when no pair qualifies.
double reprojection_rmse(const Skeleton3D& skeleton, const std::vector<Skeleton2D>& views,
                         const std::vector<CameraParams>& cams);

}  // namespace mvskel
