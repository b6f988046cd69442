#include "mvskel/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <Eigen/Geometry>

#include "mvskel/layout.hpp"

namespace mvskel {

MotionModel parse_motion_model(const std::string& name) {
    if (name == "static") return MotionModel::Static;
    if (name == "linear-walk") return MotionModel::LinearWalk;
    if (name == "circular-walk") return MotionModel::CircularWalk;
    throw std::invalid_argument("unknown motion model: " + name);
}

const char* to_string(MotionModel model) {
    switch (model) {
        case MotionModel::Static: return "static";
        case MotionModel::LinearWalk: return "linear-walk";
        case MotionModel::CircularWalk: return "circular-walk";
    }
    return "unknown";
}

void SceneConfig::validate() const {
    if (n_cameras < 2) throw std::invalid_argument("SceneConfig: n_cameras < 2");
    if (rig.n_cameras != n_cameras)
        throw std::invalid_argument("SceneConfig: rig.n_cameras != n_cameras");
    rig.validate();
    if (n_frames < 1) throw std::invalid_argument("SceneConfig: n_frames < 1");
    if (n_persons < 1 || n_persons > 2)
        throw std::invalid_argument("SceneConfig: n_persons must be 1 or 2");
    if (joint_noise_2d < 0.0 || joint_noise_3d < 0.0)
        throw std::invalid_argument("SceneConfig: negative noise");
    if (confidence_dropout < 0.0 || confidence_dropout > 1.0)
        throw std::invalid_argument("SceneConfig: confidence_dropout outside [0,1]");
    builtin_layout(layout_name);  // throws on unknown layout
}

namespace {

// Standing pose in the person's local frame: x forward, y to the person's
// left, z up, feet near z=0. Joints absent from the table hang off their
// parent with a small deterministic offset.
Eigen::Vector3d canonical_position(const JointLayout& layout, std::size_t index,
                                   const std::vector<Eigen::Vector3d>& placed) {
    static const std::map<std::string, Eigen::Vector3d> table = {
        {"nose", {0.10, 0.00, 1.62}},
        {"left_eye", {0.10, 0.04, 1.66}},
        {"right_eye", {0.10, -0.04, 1.66}},
        {"left_ear", {0.04, 0.08, 1.64}},
        {"right_ear", {0.04, -0.08, 1.64}},
        {"neck", {0.00, 0.00, 1.50}},
        {"left_shoulder", {0.00, 0.22, 1.45}},
        {"right_shoulder", {0.00, -0.22, 1.45}},
        {"left_elbow", {0.02, 0.28, 1.18}},
        {"right_elbow", {0.02, -0.28, 1.18}},
        {"left_wrist", {0.06, 0.30, 0.92}},
        {"right_wrist", {0.06, -0.30, 0.92}},
        {"pelvis", {0.00, 0.00, 1.00}},
        {"left_hip", {0.00, 0.12, 0.98}},
        {"right_hip", {0.00, -0.12, 0.98}},
        {"left_knee", {0.02, 0.13, 0.52}},
        {"right_knee", {0.02, -0.13, 0.52}},
        {"left_ankle", {0.00, 0.14, 0.08}},
        {"right_ankle", {0.00, -0.14, 0.08}},
    };
    const auto hit = table.find(layout.joint_names[index]);
    if (hit != table.end()) return hit->second;
    Eigen::Vector3d base = Eigen::Vector3d::Zero();
    if (!layout.is_root(index)) base = placed[static_cast<std::size_t>(layout.parents[index])];
    const int spread = static_cast<int>(index % 5) - 2;
    return base + Eigen::Vector3d(0.04, 0.015 * spread, -0.02);
}

// Limb-swing amplitude along the walking direction; 0 for torso/head joints.
double swing_amplitude(const std::string& name) {
    if (name.find("wrist") != std::string::npos) return 0.18;
    if (name.find("elbow") != std::string::npos) return 0.10;
    if (name.find("knee") != std::string::npos) return 0.08;
    if (name.find("ankle") != std::string::npos) return 0.15;
    if (name.find("toe") != std::string::npos || name.find("heel") != std::string::npos)
        return 0.15;
    if (name.find("hand") != std::string::npos || name.find("palm") != std::string::npos ||
        name.find("thumb") != std::string::npos || name.find("index") != std::string::npos ||
        name.find("middle") != std::string::npos || name.find("ring") != std::string::npos ||
        name.find("pinky") != std::string::npos)
        return 0.18;
    return 0.0;
}

struct PersonAnimator {
    LayoutPtr layout;
    std::vector<Eigen::Vector3d> base_pose;
    std::vector<double> swing_amp;   // per joint
    std::vector<double> swing_sign;  // left/right limbs in anti-phase
    Eigen::Vector3d home = Eigen::Vector3d::Zero();
    double swing_phase = 0.0;
    MotionModel model = MotionModel::Static;

    Skeleton3D pose_at(int t) const {
        constexpr double kWalkPeriod = 100.0;
        constexpr double kSwingPeriod = 25.0;
        constexpr double kWalkRadius = 0.8;
        // The walk phase is shared by every person: walking trajectories are
        // parallel translates of each other, so inter-person separation stays
        // at the home offset (1.2 m) under every motion model.
        const double walk = 2.0 * M_PI * t / kWalkPeriod;

        Eigen::Vector3d center = home;
        double heading = 0.0;
        switch (model) {
            case MotionModel::Static:
                break;
            case MotionModel::LinearWalk:
                center += Eigen::Vector3d(kWalkRadius * std::sin(walk), 0.0, 0.0);
                heading = std::cos(walk) >= 0.0 ? 0.0 : M_PI;
                break;
            case MotionModel::CircularWalk:
                center += kWalkRadius * Eigen::Vector3d(std::cos(walk), std::sin(walk), 0.0);
                heading = walk + M_PI / 2.0;
                break;
        }
        const Eigen::Matrix3d spin =
            Eigen::AngleAxisd(heading, Eigen::Vector3d::UnitZ()).toRotationMatrix();
        const double swing_t = std::sin(2.0 * M_PI * t / kSwingPeriod + swing_phase);

        Skeleton3D skel;
        skel.layout = layout;
        skel.frame = CoordFrame::World;
        skel.joints.resize(layout->count());
        for (std::size_t j = 0; j < layout->count(); ++j) {
            Eigen::Vector3d local = base_pose[j];
            local.x() += swing_amp[j] * swing_sign[j] * swing_t;
            const Eigen::Vector3d world = center + spin * local;
            skel.joints[j] = {world.x(), world.y(), world.z(), 1.0};
        }
        return skel;
    }
};

PersonAnimator make_animator(const LayoutPtr& layout, int person, const SceneConfig& cfg) {
    PersonAnimator anim;
    anim.layout = layout;
    anim.model = cfg.motion_model;
    anim.base_pose.resize(layout->count());
    anim.swing_amp.resize(layout->count());
    anim.swing_sign.resize(layout->count());
    for (std::size_t j = 0; j < layout->count(); ++j) {
        anim.base_pose[j] = canonical_position(*layout, j, anim.base_pose);
        anim.swing_amp[j] = swing_amplitude(layout->joint_names[j]);
        anim.swing_sign[j] =
            layout->joint_names[j].rfind("right", 0) == 0 ? -1.0 : 1.0;
    }
    // Second person walks the same trajectory shifted 1.2 m sideways, limbs
    // swinging in anti-phase; the pair never gets closer than the home offset.
    if (person == 1) {
        anim.home = Eigen::Vector3d(0.0, 1.2, 0.0);
        anim.swing_phase = M_PI;
    }
    return anim;
}

Intrinsics true_intrinsics_for(int camera) {
    Intrinsics intr = default_initial_intrinsics();
    intr.fx += 15.0 * camera;
    intr.fy += 12.0 * camera - 5.0;
    intr.cx += 4.0 * camera;
    intr.cy -= 3.0 * camera;
    intr.dist = {-0.12 + 0.01 * camera, 0.03, 0.0005, -0.0005, 0.002};
    return intr;
}

}  // namespace

SyntheticScene generate_scene(const SceneConfig& cfg) {
    cfg.validate();
    const LayoutPtr layout = builtin_layout(cfg.layout_name);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> conf_draw(0.6, 1.0);

    SyntheticScene scene;
    scene.true_cameras.resize(static_cast<std::size_t>(cfg.n_cameras));
    const std::vector<Extrinsics> extrinsics = initial_extrinsics(cfg.rig);
    for (int k = 0; k < cfg.n_cameras; ++k) {
        CameraParams& cam = scene.true_cameras[static_cast<std::size_t>(k)];
        cam.name = "cam" + std::to_string(k);
        cam.intrinsics = true_intrinsics_for(k);
        cam.extrinsics = extrinsics[static_cast<std::size_t>(k)];
    }

    std::vector<PersonAnimator> animators;
    for (int p = 0; p < cfg.n_persons; ++p) animators.push_back(make_animator(layout, p, cfg));

    scene.true_tracks.resize(static_cast<std::size_t>(cfg.n_persons));
    for (int p = 0; p < cfg.n_persons; ++p) {
        Track& track = scene.true_tracks[static_cast<std::size_t>(p)];
        track.id = p;
        track.status = TrackStatus::Closed;
        for (int t = 0; t < cfg.n_frames; ++t)
            track.entries.push_back({t, animators[static_cast<std::size_t>(p)].pose_at(t)});
    }

    scene.views.resize(static_cast<std::size_t>(cfg.n_cameras));
    scene.paired_camframe_3d.resize(static_cast<std::size_t>(cfg.n_cameras));
    for (int k = 0; k < cfg.n_cameras; ++k) {
        const CameraParams& cam = scene.true_cameras[static_cast<std::size_t>(k)];
        SkeletonSequence& view = scene.views[static_cast<std::size_t>(k)];
        SkeletonSequence& paired = scene.paired_camframe_3d[static_cast<std::size_t>(k)];
        view.source = cam.name;
        paired.source = cam.name;
        for (int t = 0; t < cfg.n_frames; ++t) {
            SequenceFrame frame2d{t, {}};
            SequenceFrame frame3d{t, {}};
            for (int p = 0; p < cfg.n_persons; ++p) {
                const Skeleton3D world =
                    scene.true_tracks[static_cast<std::size_t>(p)].entries[static_cast<std::size_t>(t)].skeleton;

                Skeleton2D det;
                det.layout = layout;
                det.joints.resize(layout->count());
                Skeleton3D sensor;
                sensor.layout = layout;
                sensor.frame = CoordFrame::Camera;
                sensor.joints.resize(layout->count());

                for (std::size_t j = 0; j < layout->count(); ++j) {
                    const Eigen::Vector3d p_world = world.joints[j].pos();
                    const Eigen::Vector3d p_cam = world_to_cam(cam.extrinsics, p_world);
                    const auto pix = try_project(cam, p_world);

                    const double du = cfg.joint_noise_2d * gauss(rng);
                    const double dv = cfg.joint_noise_2d * gauss(rng);
                    const double c2d = conf_draw(rng);
                    const Eigen::Vector3d d3(cfg.joint_noise_3d * gauss(rng),
                                             cfg.joint_noise_3d * gauss(rng),
                                             cfg.joint_noise_3d * gauss(rng));
                    const double c3d = conf_draw(rng);
                    const bool dropped = unit(rng) < cfg.confidence_dropout;

                    if (!pix || dropped) {
                        det.joints[j] = {0.0, 0.0, 0.0};
                        sensor.joints[j] = {0.0, 0.0, 0.0, 0.0};
                        continue;
                    }
                    det.joints[j] = {pix->x() + du, pix->y() + dv, c2d};
                    const Eigen::Vector3d noisy = p_cam + d3;
                    sensor.joints[j] = {noisy.x(), noisy.y(), noisy.z(), c3d};
                }
                frame2d.persons.push_back({std::nullopt, det});
                frame3d.persons.push_back({p, sensor});
            }
            if (cfg.shuffle_detections && frame2d.persons.size() > 1) {
                if (unit(rng) < 0.5) std::swap(frame2d.persons[0], frame2d.persons[1]);
            }
            view.frames.push_back(std::move(frame2d));
            paired.frames.push_back(std::move(frame3d));
        }
    }
    return scene;
}

std::vector<CalibFramePair> make_frame_pairs(const SkeletonSequence& view2d,
                                             const SkeletonSequence& cam3d,
                                             const std::string& camera_name) {
    if (view2d.frames.size() != cam3d.frames.size())
        throw std::invalid_argument("make_frame_pairs: stream lengths differ");
    std::vector<CalibFramePair> pairs;
    pairs.reserve(view2d.frames.size());
    for (std::size_t t = 0; t < view2d.frames.size(); ++t) {
        const SequenceFrame& f2 = view2d.frames[t];
        const SequenceFrame& f3 = cam3d.frames[t];
        if (f2.persons.size() != 1 || f3.persons.size() != 1)
            throw std::invalid_argument("make_frame_pairs: frames must hold exactly 1 person");
        if (!f3.persons[0].is_3d() || f3.persons[0].as_3d().frame != CoordFrame::Camera)
            throw std::invalid_argument("make_frame_pairs: 3D stream must be camera-frame");
        if (f2.persons[0].is_3d())
            throw std::invalid_argument("make_frame_pairs: 2D stream holds a 3D skeleton");
        CalibFramePair pair;
        pair.cam2d = f2.persons[0].as_2d();
        pair.cam3d = f3.persons[0].as_3d();
        pair.camera = camera_name;
        pair.time_index = f2.time_index;
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

Intrinsics perturb_intrinsics(const Intrinsics& truth, double rel_frac, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> factor(1.0 - rel_frac, 1.0 + rel_frac);
    Intrinsics out = truth;
    out.fx = truth.fx * factor(rng);
    out.fy = truth.fy * factor(rng);
    out.cx = truth.cx * factor(rng);
    out.cy = truth.cy * factor(rng);
    out.dist = {0.0, 0.0, 0.0, 0.0, 0.0};
    return out;
}

Extrinsics perturb_extrinsics(const Extrinsics& truth, double angle_rad, double shift_m,
                              std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_unit = [&]() {
        Eigen::Vector3d v;
        do {
            v = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
        } while (v.norm() < 1e-9);
        return Eigen::Vector3d(v.normalized());
    };
    const Eigen::Matrix3d truth_rot = rotation_matrix(truth.rotation);
    const Eigen::Matrix3d tweak =
        Eigen::AngleAxisd(angle_rad, random_unit()).toRotationMatrix();
    Extrinsics out;
    out.rotation = axis_angle(tweak * truth_rot);
    out.translation = truth.translation + shift_m * random_unit();
    return out;
}

}  // namespace mvskel
