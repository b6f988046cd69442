#include "mvskel/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Geometry>

namespace mvskel {

void RigConfig::validate() const {
    if (n_cameras < 2) throw std::invalid_argument("RigConfig: n_cameras < 2");
    if (reference_index < 0 || reference_index >= n_cameras)
        throw std::invalid_argument("RigConfig: reference_index out of range");
    if (!(circle_radius > 0.0)) throw std::invalid_argument("RigConfig: circle_radius <= 0");
    if (!std::isfinite(camera_height) || !std::isfinite(look_at_height))
        throw std::invalid_argument("RigConfig: non-finite heights");
    if (!angles.empty() && angles.size() != static_cast<std::size_t>(n_cameras))
        throw std::invalid_argument("RigConfig: angles size != n_cameras");
    for (double a : angles)
        if (!std::isfinite(a)) throw std::invalid_argument("RigConfig: non-finite angle");
}

std::vector<double> RigConfig::resolved_angles() const {
    if (!angles.empty()) return angles;
    std::vector<double> out(static_cast<std::size_t>(n_cameras));
    for (int i = 0; i < n_cameras; ++i) out[static_cast<std::size_t>(i)] = 2.0 * M_PI * i / n_cameras;
    return out;
}

void OutlierSchedule::validate() const {
    if (!(drop_fraction >= 0.0) || drop_fraction >= 1.0)
        throw std::invalid_argument("OutlierSchedule: drop_fraction outside [0,1)");
    if (rounds < 1) throw std::invalid_argument("OutlierSchedule: rounds < 1");
}

Intrinsics default_initial_intrinsics() {
    Intrinsics intr;
    intr.fx = 1050.0;
    intr.fy = 1050.0;
    intr.cx = 960.0;
    intr.cy = 540.0;
    intr.dist = {0.0, 0.0, 0.0, 0.0, 0.0};
    return intr;
}

namespace {

Intrinsics intrinsics_from_params(const Eigen::VectorXd& x) {
    Intrinsics intr;
    intr.fx = x[0];
    intr.fy = x[1];
    intr.cx = x[2];
    intr.cy = x[3];
    intr.dist = {x[4], x[5], x[6], x[7], x[8]};
    return intr;
}

Eigen::VectorXd params_from_intrinsics(const Intrinsics& intr) {
    Eigen::VectorXd x(9);
    x << intr.fx, intr.fy, intr.cx, intr.cy, intr.dist[0], intr.dist[1], intr.dist[2],
        intr.dist[3], intr.dist[4];
    return x;
}

}  // namespace

std::pair<Intrinsics, LsqReport> estimate_intrinsics(const std::vector<CalibFramePair>& pairs,
                                                     const Intrinsics& init,
                                                     const LsqOptions& opts) {
    validate_intrinsics(init);
    opts.validate();
    if (pairs.empty()) throw std::invalid_argument("estimate_intrinsics: no frame pairs");

    struct Obs {
        Eigen::Vector3d p_cam;
        Eigen::Vector2d pixel;
        double weight;
    };
    std::vector<Obs> observations;
    std::size_t best_pair_joints = 0;
    for (const CalibFramePair& pair : pairs) {
        if (pair.cam2d.joints.size() != pair.cam3d.joints.size())
            throw std::invalid_argument("estimate_intrinsics: 2D/3D layout mismatch");
        std::size_t usable = 0;
        for (std::size_t j = 0; j < pair.cam2d.joints.size(); ++j) {
            const Joint2D& j2 = pair.cam2d.joints[j];
            const Joint3D& j3 = pair.cam3d.joints[j];
            const double w = std::min(j2.c, j3.c);
            if (w <= 0.0) continue;
            if (!std::isfinite(j2.u) || !std::isfinite(j2.v) || !j3.pos().allFinite())
                throw std::invalid_argument("estimate_intrinsics: non-finite observation");
            if (j3.z <= 0.0) continue;  // behind the camera; not projectable
            observations.push_back({j3.pos(), j2.pixel(), w});
            ++usable;
        }
        best_pair_joints = std::max(best_pair_joints, usable);
    }
    if (best_pair_joints < 6)
        throw std::invalid_argument(
            "estimate_intrinsics: insufficient observations (need a frame with >= 6 weighted "
            "joints)");

    const ResidualFn residual_fn = [&observations](const Eigen::VectorXd& x) {
        const Intrinsics intr = intrinsics_from_params(x);
        Eigen::VectorXd r(2 * static_cast<Eigen::Index>(observations.size()));
        for (std::size_t i = 0; i < observations.size(); ++i) {
            const Obs& obs = observations[i];
            const Eigen::Vector2d pix = project(intr, obs.p_cam);
            r[2 * static_cast<Eigen::Index>(i)] = obs.weight * (pix.x() - obs.pixel.x());
            r[2 * static_cast<Eigen::Index>(i) + 1] = obs.weight * (pix.y() - obs.pixel.y());
        }
        return r;
    };

    LsqReport report = solve_least_squares(residual_fn, params_from_intrinsics(init), opts);
    return {intrinsics_from_params(report.final_params), report};
}

std::vector<Extrinsics> initial_extrinsics(const RigConfig& rig) {
    rig.validate();
    const std::vector<double> angles = rig.resolved_angles();
    const Eigen::Vector3d target(0.0, 0.0, rig.look_at_height);
    const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();

    std::vector<Extrinsics> out;
    out.reserve(angles.size());
    for (double angle : angles) {
        const Eigen::Vector3d center(rig.circle_radius * std::cos(angle),
                                     rig.circle_radius * std::sin(angle), rig.camera_height);
        const Eigen::Vector3d forward = (target - center).normalized();
        Eigen::Vector3d right = forward.cross(up);
        const double norm = right.norm();
        if (norm < 1e-12)
            throw std::invalid_argument("initial_extrinsics: camera looks along world z");
        right /= norm;
        const Eigen::Vector3d down = forward.cross(right);  // image +y, world-down leaning

        Eigen::Matrix3d rot;
        rot.row(0) = right.transpose();
        rot.row(1) = down.transpose();
        rot.row(2) = forward.transpose();

        Extrinsics extr;
        extr.rotation = axis_angle(rot);
        extr.translation = -rot * center;
        out.push_back(extr);
    }
    return out;
}

namespace {

// Mean joint distance to the reference skeleton, or NaN when no joint is
// valid in both.
double skeleton_gap(const Skeleton3D& skel, const Skeleton3D& ref) {
    if (skel.joints.size() != ref.joints.size())
        throw std::invalid_argument("alignment_error: joint count mismatch");
    double sum = 0.0;
    int count = 0;
    for (std::size_t j = 0; j < skel.joints.size(); ++j) {
        if (skel.joints[j].c <= 0.0 || ref.joints[j].c <= 0.0) continue;
        sum += (skel.joints[j].pos() - ref.joints[j].pos()).norm();
        ++count;
    }
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / count;
}

Skeleton3D world_skeleton(const Extrinsics& extr, const Skeleton3D& cam_skel) {
    Skeleton3D out = cam_skel;
    out.frame = CoordFrame::World;
    for (auto& j : out.joints) {
        if (j.c <= 0.0) continue;
        const Eigen::Vector3d p = cam_to_world(extr, j.pos());
        j.x = p.x();
        j.y = p.y();
        j.z = p.z();
    }
    return out;
}

}  // namespace

double alignment_error(const std::vector<Skeleton3D>& world_skeletons, int reference) {
    if (world_skeletons.size() < 2)
        throw std::invalid_argument("alignment_error: need >= 2 cameras");
    if (reference < 0 || reference >= static_cast<int>(world_skeletons.size()))
        throw std::invalid_argument("alignment_error: reference out of range");
    const Skeleton3D& ref = world_skeletons[static_cast<std::size_t>(reference)];
    double sum = 0.0;
    int cameras = 0;
    for (std::size_t k = 0; k < world_skeletons.size(); ++k) {
        if (static_cast<int>(k) == reference) continue;
        const double gap = skeleton_gap(world_skeletons[k], ref);
        if (std::isnan(gap)) continue;
        sum += gap;
        ++cameras;
    }
    if (cameras == 0) throw std::invalid_argument("alignment_error: no jointly-valid joints");
    return sum / cameras;
}

namespace {

struct JointPair {
    Eigen::Vector3d cam_point;   // in the non-reference camera's frame
    Eigen::Vector3d ref_world;   // reference camera's estimate, world frame
};

const Skeleton3D& single_camframe_person(const SequenceFrame& frame, const char* op) {
    if (frame.persons.size() != 1)
        throw std::invalid_argument(std::string(op) + ": frames must contain exactly 1 person");
    const PersonEntry& person = frame.persons.front();
    if (!person.is_3d())
        throw std::invalid_argument(std::string(op) + ": person is not a 3D skeleton");
    const Skeleton3D& skel = person.as_3d();
    if (skel.frame != CoordFrame::Camera)
        throw std::invalid_argument(std::string(op) + ": skeleton not camera-frame");
    return skel;
}

}  // namespace

ExtrinsicsResult estimate_extrinsics(const std::vector<SkeletonSequence>& sequences,
                                     const std::vector<Extrinsics>& init,
                                     const OutlierSchedule& schedule, const LsqOptions& opts,
                                     int reference) {
    schedule.validate();
    opts.validate();
    const std::size_t n_cameras = sequences.size();
    if (n_cameras < 2) throw std::invalid_argument("estimate_extrinsics: need >= 2 cameras");
    if (init.size() != n_cameras)
        throw std::invalid_argument("estimate_extrinsics: init size != camera count");
    if (reference < 0 || reference >= static_cast<int>(n_cameras))
        throw std::invalid_argument("estimate_extrinsics: reference out of range");
    for (const Extrinsics& extr : init) validate_extrinsics(extr);

    const std::size_t n_frames = sequences.front().frames.size();
    if (n_frames == 0) throw std::invalid_argument("estimate_extrinsics: empty sequences");
    for (const SkeletonSequence& seq : sequences)
        if (seq.frames.size() != n_frames)
            throw std::invalid_argument("estimate_extrinsics: unequal sequence lengths");

    // skeletons[k][t], all camera-frame with a single person per frame.
    std::vector<std::vector<const Skeleton3D*>> skeletons(n_cameras);
    for (std::size_t k = 0; k < n_cameras; ++k) {
        skeletons[k].reserve(n_frames);
        for (const SequenceFrame& frame : sequences[k].frames)
            skeletons[k].push_back(&single_camframe_person(frame, "estimate_extrinsics"));
    }
    const std::size_t n_joints = skeletons[0][0]->joints.size();
    for (std::size_t k = 0; k < n_cameras; ++k)
        for (std::size_t t = 0; t < n_frames; ++t)
            if (skeletons[k][t]->joints.size() != n_joints)
                throw std::invalid_argument("estimate_extrinsics: layout mismatch");

    std::vector<std::size_t> non_ref;
    for (std::size_t k = 0; k < n_cameras; ++k)
        if (static_cast<int>(k) != reference) non_ref.push_back(k);

    // Reference world points are constant across the whole fit.
    const Extrinsics& ref_extr = init[static_cast<std::size_t>(reference)];
    const Eigen::Matrix3d ref_rot_t = rotation_matrix(ref_extr.rotation).transpose();

    std::vector<Extrinsics> current = init;
    auto params_of = [&non_ref](const std::vector<Extrinsics>& extr) {
        Eigen::VectorXd x(6 * static_cast<Eigen::Index>(non_ref.size()));
        for (std::size_t s = 0; s < non_ref.size(); ++s) {
            x.segment<3>(6 * static_cast<Eigen::Index>(s)) = extr[non_ref[s]].rotation;
            x.segment<3>(6 * static_cast<Eigen::Index>(s) + 3) = extr[non_ref[s]].translation;
        }
        return x;
    };
    auto apply_params = [&non_ref](const Eigen::VectorXd& x, std::vector<Extrinsics>& extr) {
        for (std::size_t s = 0; s < non_ref.size(); ++s) {
            extr[non_ref[s]].rotation = x.segment<3>(6 * static_cast<Eigen::Index>(s));
            extr[non_ref[s]].translation = x.segment<3>(6 * static_cast<Eigen::Index>(s) + 3);
        }
    };

    auto frame_error = [&](std::size_t t, const std::vector<Extrinsics>& extr) {
        std::vector<Skeleton3D> world;
        world.reserve(n_cameras);
        for (std::size_t k = 0; k < n_cameras; ++k)
            world.push_back(world_skeleton(extr[k], *skeletons[k][t]));
        try {
            return alignment_error(world, reference);
        } catch (const std::invalid_argument&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::vector<std::size_t> kept(n_frames);
    std::iota(kept.begin(), kept.end(), std::size_t{0});

    ExtrinsicsResult result;
    for (int round = 0; round < schedule.rounds; ++round) {
        if (kept.empty()) throw std::invalid_argument("estimate_extrinsics: all frames removed");
        result.round_frame_counts.push_back(static_cast<int>(kept.size()));

        // Flatten the round's correspondences: per non-ref camera slot, all
        // (camera point, reference world point) joint pairs over kept frames.
        std::vector<std::vector<JointPair>> data(non_ref.size());
        for (std::size_t t : kept) {
            for (std::size_t s = 0; s < non_ref.size(); ++s) {
                const Skeleton3D& skel = *skeletons[non_ref[s]][t];
                const Skeleton3D& ref_skel = *skeletons[static_cast<std::size_t>(reference)][t];
                for (std::size_t j = 0; j < n_joints; ++j) {
                    if (skel.joints[j].c <= 0.0 || ref_skel.joints[j].c <= 0.0) continue;
                    const Eigen::Vector3d ref_world =
                        ref_rot_t * (ref_skel.joints[j].pos() - ref_extr.translation);
                    data[s].push_back({skel.joints[j].pos(), ref_world});
                }
            }
        }
        Eigen::Index n_residuals = 0;
        for (const auto& pairs : data) n_residuals += 3 * static_cast<Eigen::Index>(pairs.size());
        if (n_residuals == 0)
            throw std::invalid_argument("estimate_extrinsics: no jointly-valid joints");

        const ResidualFn residual_fn = [&data, n_residuals](const Eigen::VectorXd& x) {
            Eigen::VectorXd r(n_residuals);
            Eigen::Index row = 0;
            for (std::size_t s = 0; s < data.size(); ++s) {
                const Eigen::Vector3d rvec = x.segment<3>(6 * static_cast<Eigen::Index>(s));
                const Eigen::Vector3d tvec = x.segment<3>(6 * static_cast<Eigen::Index>(s) + 3);
                const Eigen::Matrix3d rot_t = rotation_matrix(rvec).transpose();
                for (const JointPair& pair : data[s]) {
                    r.segment<3>(row) = rot_t * (pair.cam_point - tvec) - pair.ref_world;
                    row += 3;
                }
            }
            return r;
        };

        result.report = solve_least_squares(residual_fn, params_of(current), opts);
        apply_params(result.report.final_params, current);

        if (round + 1 < schedule.rounds) {
            const std::size_t drop =
                static_cast<std::size_t>(std::floor(schedule.drop_fraction * kept.size()));
            if (drop > 0) {
                std::vector<std::pair<double, std::size_t>> ranked;
                ranked.reserve(kept.size());
                for (std::size_t t : kept) ranked.emplace_back(frame_error(t, current), t);
                std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                    if (a.first != b.first) return a.first > b.first;
                    return a.second < b.second;
                });
                // Worst frames sort first; drop that prefix.
                ranked.erase(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(drop));
                kept.clear();
                for (const auto& [err, t] : ranked) kept.push_back(t);
                std::sort(kept.begin(), kept.end());
            }
            if (kept.empty())
                throw std::invalid_argument("estimate_extrinsics: all frames removed");
        }
    }

    result.extrinsics = std::move(current);
    return result;
}

std::vector<SequenceGroup> select_calibration_sequences(const std::vector<SequenceGroup>& groups) {
    std::vector<SequenceGroup> out;
    for (const SequenceGroup& group : groups) {
        bool ok = true;
        for (const SkeletonSequence& seq : group) {
            if (seq.frames.size() != group.front().frames.size()) ok = false;
            for (const SequenceFrame& frame : seq.frames)
                if (frame.persons.size() != 1) ok = false;
            if (!ok) break;
        }
        if (ok) out.push_back(group);
    }
    return out;
}

std::vector<SkeletonSequence> synchronize_streams(const std::vector<SkeletonSequence>& streams) {
    if (streams.empty()) throw std::invalid_argument("synchronize_streams: no streams");
    double total = 0.0;
    for (const SkeletonSequence& stream : streams) {
        if (stream.frames.empty()) throw std::invalid_argument("synchronize_streams: empty stream");
        total += static_cast<double>(stream.frames.size());
    }
    const std::int64_t target = std::llround(total / static_cast<double>(streams.size()));

    std::vector<SkeletonSequence> out;
    out.reserve(streams.size());
    for (const SkeletonSequence& stream : streams) {
        const std::int64_t length = static_cast<std::int64_t>(stream.frames.size());
        SkeletonSequence synced;
        synced.source = stream.source;
        synced.frames.reserve(static_cast<std::size_t>(target));
        for (std::int64_t j = 0; j < target; ++j) {
            std::int64_t idx = 0;
            if (target > 1)
                idx = std::llround(static_cast<double>(j) * static_cast<double>(length - 1) /
                                   static_cast<double>(target - 1));
            idx = std::clamp<std::int64_t>(idx, 0, length - 1);
            SequenceFrame frame = stream.frames[static_cast<std::size_t>(idx)];
            frame.time_index = j;
            synced.frames.push_back(std::move(frame));
        }
        out.push_back(std::move(synced));
    }
    return out;
}

}  // namespace mvskel
