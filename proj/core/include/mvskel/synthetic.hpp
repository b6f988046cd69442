#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvskel/calibration.hpp"
#include "mvskel/camera.hpp"
#include "mvskel/skeleton.hpp"
#include "mvskel/tracking.hpp"

namespace mvskel {

enum class MotionModel { Static, LinearWalk, CircularWalk };

MotionModel parse_motion_model(const std::string& name);
const char* to_string(MotionModel model);

/// Ground-truth scene recipe. Camera geometry (and therefore the truth
/// extrinsics) comes from the rig alone, so scenes differing only in seed or
/// noise share identical true cameras and true tracks.
struct SceneConfig {
    int n_cameras = 3;
    RigConfig rig;
    int n_frames = 200;
    int n_persons = 1;  // 1 or 2
    MotionModel motion_model = MotionModel::CircularWalk;
    std::string layout_name = "body";
    double joint_noise_2d = 0.0;       // px std-dev on detections
    double joint_noise_3d = 0.0;       // m std-dev on paired camera-frame skeletons
    double confidence_dropout = 0.0;   // probability an observation is zeroed
    bool shuffle_detections = false;   // randomize per-frame person order in views
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticScene {
    std::vector<CameraParams> true_cameras;
    std::vector<Track> true_tracks;                     // world frame, one per person
    std::vector<SkeletonSequence> views;                // per-camera 2D detections
    std::vector<SkeletonSequence> paired_camframe_3d;   // per-camera sensor skeletons
};

/// Builds an animated stick figure per person, projects it through the rig's
/// true cameras (exact projections plus the configured noise), and emits the
/// paired camera-frame 3D streams. Deterministic for a fixed config.
SyntheticScene generate_scene(const SceneConfig& cfg);

/// Zips one camera's 2D and 3D streams (equal length, one person per frame)
/// into calibration frame pairs.
std::vector<CalibFramePair> make_frame_pairs(const SkeletonSequence& view2d,
                                             const SkeletonSequence& cam3d,
                                             const std::string& camera_name);

/// Test-seed perturbations. Intrinsics: fx, fy, cx, cy each scaled by a
/// uniform factor in [1-rel_frac, 1+rel_frac]; distortion reset to zero (the
/// fit always starts from an undistorted guess). Extrinsics: rotation
/// composed with a random-axis rotation of exactly angle_rad; translation
/// shifted by a random direction of exactly shift_m.
Intrinsics perturb_intrinsics(const Intrinsics& truth, double rel_frac, std::mt19937_64& rng);
Extrinsics perturb_extrinsics(const Extrinsics& truth, double angle_rad, double shift_m,
                              std::mt19937_64& rng);

}  // namespace mvskel
