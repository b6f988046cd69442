#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mvskel/camera.hpp"
#include "mvskel/least_squares.hpp"
#include "mvskel/skeleton.hpp"

namespace mvskel {

/// One camera's paired observation of the same instant: a detected 2D skeleton
/// and the sensor-provided 3D skeleton in that camera's frame.
struct CalibFramePair {
    Skeleton2D cam2d;
    Skeleton3D cam3d;  // CoordFrame::Camera
    std::string camera;
    std::int64_t time_index = 0;
};

/// Circle-rig prior used to initialise extrinsics: cameras on a circle of
/// `circle_radius` around the world origin at `camera_height`, each looking at
/// the point (0, 0, look_at_height). `angles` lists per-camera azimuths;
/// leave empty for an even spacing starting at 0.
struct RigConfig {
    int n_cameras = 3;
    int reference_index = 0;  // camera held fixed during extrinsics fits
    double circle_radius = 3.0;
    double camera_height = 2.0;
    double look_at_height = 1.0;
    std::vector<double> angles;

    void validate() const;
    std::vector<double> resolved_angles() const;
};

/// Iterated outlier removal: after every round except the last, the
/// floor(drop_fraction * N) frames with the highest alignment error are
/// discarded and the fit re-runs on the remainder.
struct OutlierSchedule {
    double drop_fraction = 0.30;
    int rounds = 2;

    void validate() const;
};

struct ExtrinsicsResult {
    std::vector<Extrinsics> extrinsics;
    LsqReport report;                   // from the final round's solve
    std::vector<int> round_frame_counts;  // frames used in each round
};

/// Configurable initial guess for 1920x1080 streams.
Intrinsics default_initial_intrinsics();

/// Fits (fx, fy, cx, cy, k1, k2, p1, p2, k3) for one camera by minimizing
/// confidence-weighted pixel residuals ||project(cam3d_j) - cam2d_j|| over all
/// pairs. Joint weight is min(conf2d, conf3d); zero-weight joints and joints
/// behind the camera are excluded. Requires at least one pair with >= 6
/// usable joints.
std::pair<Intrinsics, LsqReport> estimate_intrinsics(const std::vector<CalibFramePair>& pairs,
                                                     const Intrinsics& init,
                                                     const LsqOptions& opts = {});

/// Look-at placement on the rig circle: camera i sits at
/// (r cos a_i, r sin a_i, camera_height) with its optical axis through
/// (0, 0, look_at_height) and image-down aligned against world +z.
std::vector<Extrinsics> initial_extrinsics(const RigConfig& rig);

/// Mean over non-reference cameras of the mean per-joint distance to the
/// reference camera's skeleton (joints valid in both). Cameras sharing no
/// valid joint with the reference are skipped; throws if all are.
double alignment_error(const std::vector<Skeleton3D>& world_skeletons, int reference = 0);

/// Joint fit of all non-reference cameras' extrinsics (6 parameters each, one
/// stacked vector) minimizing the per-joint world-frame disagreement with the
/// reference camera over all frames. The reference extrinsics are returned
/// bitwise unchanged. Runs schedule.rounds optimization rounds; between
/// rounds the worst floor(drop_fraction * N) frames by alignment error are
/// removed. Sequences hold camera-frame skeletons, one person per frame, all
/// the same length.
ExtrinsicsResult estimate_extrinsics(const std::vector<SkeletonSequence>& sequences,
                                     const std::vector<Extrinsics>& init,
                                     const OutlierSchedule& schedule = {},
                                     const LsqOptions& opts = {}, int reference = 0);

/// One recording as seen by every camera.
using SequenceGroup = std::vector<SkeletonSequence>;

/// Keeps groups usable for calibration: every frame of every camera has
/// exactly one person and the per-camera frame counts agree.
std::vector<SequenceGroup> select_calibration_sequences(const std::vector<SequenceGroup>& groups);

/// Resamples every stream to T = round(mean length) frames by skipping or
/// duplicating: output frame j copies input frame round(j*(L-1)/(T-1))
/// (frame 0 when T == 1). Output time indices are 0..T-1. Rounding is
/// half-away-from-zero.
std::vector<SkeletonSequence> synchronize_streams(const std::vector<SkeletonSequence>& streams);

}  // namespace mvskel
