#include "mvskel/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "mvskel/least_squares.hpp"

namespace mvskel {

namespace {

constexpr double kUnmatchedPenaltyPx = 1e6;

struct UsableObs {
    const CameraParams* camera;
    Eigen::Vector2d pixel;
    Eigen::Vector2d normalized;  // undistorted ideal-pinhole coordinates
    double confidence;
};

std::vector<UsableObs> usable_observations(const std::vector<Observation>& observations,
                                           double min_confidence) {
    std::vector<UsableObs> usable;
    for (const Observation& obs : observations) {
        if (obs.confidence <= 0.0 || obs.confidence < min_confidence) continue;
        if (obs.camera == nullptr)
            throw std::invalid_argument("triangulate_point: null camera on weighted observation");
        if (!obs.pixel.allFinite())
            throw std::invalid_argument("triangulate_point: non-finite pixel with confidence > 0");
        usable.push_back({obs.camera, obs.pixel,
                          pixel_to_normalized(obs.camera->intrinsics, obs.pixel), obs.confidence});
    }
    return usable;
}

double reprojection_residual_px(const Eigen::Vector3d& point, const std::vector<UsableObs>& views) {
    double sum_sq = 0.0;
    for (const UsableObs& obs : views) {
        const auto pix = try_project(*obs.camera, point);
        if (!pix) return std::numeric_limits<double>::infinity();
        sum_sq += (*pix - obs.pixel).squaredNorm();
    }
    return std::sqrt(sum_sq / static_cast<double>(views.size()));
}

Eigen::Vector3d refine_point(const Eigen::Vector3d& init, const std::vector<UsableObs>& views) {
    const ResidualFn residual_fn = [&views](const Eigen::VectorXd& x) {
        const Eigen::Vector3d point(x[0], x[1], x[2]);
        Eigen::VectorXd r(2 * static_cast<Eigen::Index>(views.size()));
        for (std::size_t i = 0; i < views.size(); ++i) {
            const auto pix = try_project(*views[i].camera, point);
            // Behind-camera trials get a flat penalty so the solver backs off.
            const Eigen::Vector2d delta =
                pix ? (*pix - views[i].pixel).eval() : Eigen::Vector2d(kUnmatchedPenaltyPx, kUnmatchedPenaltyPx);
            r.segment<2>(2 * static_cast<Eigen::Index>(i)) = views[i].confidence * delta;
        }
        return r;
    };
    LsqOptions opts;
    opts.max_iterations = 20;
    const LsqReport report = solve_least_squares(residual_fn, init, opts);
    return report.final_params;
}

}  // namespace

void TriangulateOptions::validate() const {
    if (!(min_confidence >= 0.0) || min_confidence > 1.0)
        throw std::invalid_argument("TriangulateOptions: min_confidence outside [0,1]");
}

TriangulatedJoint triangulate_point(const std::vector<Observation>& observations,
                                    const TriangulateOptions& opts) {
    opts.validate();
    const std::vector<UsableObs> usable = usable_observations(observations, opts.min_confidence);
    if (usable.size() < 2) return {};

    // Homogeneous DLT on normalized rays: with P = [R | t], point X satisfies
    // x_n P.row(2) X = P.row(0) X and likewise for y_n.
    Eigen::MatrixXd design(2 * static_cast<Eigen::Index>(usable.size()), 4);
    for (std::size_t i = 0; i < usable.size(); ++i) {
        const Extrinsics& extr = usable[i].camera->extrinsics;
        Eigen::Matrix<double, 3, 4> proj;
        proj.leftCols<3>() = rotation_matrix(extr.rotation);
        proj.col(3) = extr.translation;
        const double w = usable[i].confidence;
        design.row(2 * static_cast<Eigen::Index>(i)) =
            w * (usable[i].normalized.x() * proj.row(2) - proj.row(0));
        design.row(2 * static_cast<Eigen::Index>(i) + 1) =
            w * (usable[i].normalized.y() * proj.row(2) - proj.row(1));
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
    const Eigen::Vector4d homogeneous = svd.matrixV().col(3);
    if (std::abs(homogeneous[3]) < 1e-14 * homogeneous.norm()) return {};  // point at infinity

    Eigen::Vector3d point = homogeneous.head<3>() / homogeneous[3];
    if (opts.refine) point = refine_point(point, usable);

    TriangulatedJoint joint;
    joint.point = point;
    double conf_sum = 0.0;
    for (const UsableObs& obs : usable) conf_sum += obs.confidence;
    joint.confidence = conf_sum / static_cast<double>(usable.size());
    joint.residual_px = reprojection_residual_px(point, usable);
    return joint;
}

Skeleton3D triangulate_skeleton(const std::vector<Skeleton2D>& views,
                                const std::vector<CameraParams>& cams,
                                const TriangulateOptions& opts) {
    if (views.empty()) throw std::invalid_argument("triangulate_skeleton: no views");
    if (views.size() != cams.size())
        throw std::invalid_argument("triangulate_skeleton: views/cameras size mismatch");
    const LayoutPtr layout = views.front().layout;
    if (!layout) throw std::invalid_argument("triangulate_skeleton: missing layout");
    for (const Skeleton2D& view : views)
        if (!view.layout || view.layout->name != layout->name ||
            view.joints.size() != views.front().joints.size())
            throw std::invalid_argument("triangulate_skeleton: layout mismatch across views");

    Skeleton3D out;
    out.layout = layout;
    out.frame = CoordFrame::World;
    out.joints.resize(layout->count());
    std::vector<Observation> obs;
    obs.reserve(views.size());
    for (std::size_t j = 0; j < layout->count(); ++j) {
        obs.clear();
        for (std::size_t k = 0; k < views.size(); ++k)
            obs.push_back({&cams[k], views[k].joints[j].pixel(), views[k].joints[j].c});
        const TriangulatedJoint tri = triangulate_point(obs, opts);
        out.joints[j] = {tri.point.x(), tri.point.y(), tri.point.z(), tri.confidence};
    }
    return out;
}

namespace {

// Per-view injective assignments of person indices into `slots` group slots,
// enumerated in a fixed lexicographic order. Each entry maps person -> slot.
void enumerate_assignments(int persons, int slots, std::vector<std::vector<int>>& out) {
    out.clear();
    if (persons == 0) {
        out.push_back({});
        return;
    }
    std::vector<int> current(static_cast<std::size_t>(persons), -1);
    std::vector<bool> used(static_cast<std::size_t>(slots), false);
    const auto recurse = [&](auto&& self, int person) -> void {
        if (person == persons) {
            out.push_back(current);
            return;
        }
        for (int slot = 0; slot < slots; ++slot) {
            if (used[static_cast<std::size_t>(slot)]) continue;
            used[static_cast<std::size_t>(slot)] = true;
            current[static_cast<std::size_t>(person)] = slot;
            self(self, person + 1);
            used[static_cast<std::size_t>(slot)] = false;
        }
    };
    recurse(recurse, 0);
}

// Mean residual over valid joints of one candidate group, or the fixed
// penalty when the group cannot triangulate.
double group_score(const std::vector<int>& members, const std::vector<std::vector<Skeleton2D>>& views,
                   const std::vector<CameraParams>& cams, const TriangulateOptions& opts) {
    int present = 0;
    for (int p : members)
        if (p >= 0) ++present;
    if (present < 2) return kUnmatchedPenaltyPx;

    std::vector<Skeleton2D> group_views;
    std::vector<CameraParams> group_cams;
    group_views.reserve(static_cast<std::size_t>(present));
    group_cams.reserve(static_cast<std::size_t>(present));
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (members[k] < 0) continue;
        group_views.push_back(views[k][static_cast<std::size_t>(members[k])]);
        group_cams.push_back(cams[k]);
    }

    const std::size_t n_joints = group_views.front().joints.size();
    std::vector<Observation> obs;
    double total = 0.0;
    int valid = 0;
    for (std::size_t j = 0; j < n_joints; ++j) {
        obs.clear();
        for (std::size_t k = 0; k < group_views.size(); ++k)
            obs.push_back({&group_cams[k], group_views[k].joints[j].pixel(),
                           group_views[k].joints[j].c});
        const TriangulatedJoint tri = triangulate_point(obs, opts);
        if (!tri.valid()) continue;
        total += tri.residual_px;
        ++valid;
    }
    if (valid == 0) return kUnmatchedPenaltyPx;
    return total / valid;
}

}  // namespace

std::vector<std::vector<int>> match_persons(const std::vector<std::vector<Skeleton2D>>& views,
                                            const std::vector<CameraParams>& cams,
                                            const TriangulateOptions& opts) {
    opts.validate();
    if (views.size() != cams.size())
        throw std::invalid_argument("match_persons: views/cameras size mismatch");
    int max_persons = 0;
    for (const auto& view : views) {
        if (view.size() > 2)
            throw std::invalid_argument("match_persons: more than 2 persons in a view");
        max_persons = std::max(max_persons, static_cast<int>(view.size()));
    }
    if (max_persons == 0) return {};

    // Candidate injective maps per view, then exhaustive product search.
    std::vector<std::vector<std::vector<int>>> per_view;
    per_view.reserve(views.size());
    for (const auto& view : views) {
        std::vector<std::vector<int>> assignments;
        enumerate_assignments(static_cast<int>(view.size()), max_persons, assignments);
        per_view.push_back(std::move(assignments));
    }

    std::vector<std::size_t> pick(views.size(), 0);
    std::vector<std::vector<int>> best_groups;
    double best_score = std::numeric_limits<double>::infinity();
    for (;;) {
        // groups[slot][view] = person index or -1
        std::vector<std::vector<int>> groups(
            static_cast<std::size_t>(max_persons),
            std::vector<int>(views.size(), -1));
        for (std::size_t k = 0; k < views.size(); ++k) {
            const std::vector<int>& assignment = per_view[k][pick[k]];
            for (std::size_t p = 0; p < assignment.size(); ++p)
                groups[static_cast<std::size_t>(assignment[p])][k] = static_cast<int>(p);
        }
        double score = 0.0;
        for (const std::vector<int>& members : groups)
            score += group_score(members, views, cams, opts);
        if (score < best_score) {
            best_score = score;
            best_groups = std::move(groups);
        }

        // lexicographic advance
        std::size_t k = 0;
        for (; k < pick.size(); ++k) {
            if (++pick[k] < per_view[k].size()) break;
            pick[k] = 0;
        }
        if (k == pick.size()) break;
    }

    std::sort(best_groups.begin(), best_groups.end());
    return best_groups;
}

double reprojection_rmse(const Skeleton3D& skeleton, const std::vector<Skeleton2D>& views,
                         const std::vector<CameraParams>& cams) {
    if (views.size() != cams.size())
        throw std::invalid_argument("reprojection_rmse: views/cameras size mismatch");
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < views.size(); ++k) {
        if (views[k].joints.size() != skeleton.joints.size())
            throw std::invalid_argument("reprojection_rmse: layout mismatch");
        for (std::size_t j = 0; j < skeleton.joints.size(); ++j) {
            if (skeleton.joints[j].c <= 0.0 || views[k].joints[j].c <= 0.0) continue;
            const auto pix = try_project(cams[k], skeleton.joints[j].pos());
            if (!pix) return std::numeric_limits<double>::infinity();
            sum_sq += (*pix - views[k].joints[j].pixel()).squaredNorm();
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("reprojection_rmse: no valid (joint, view) pairs");
    return std::sqrt(sum_sq / static_cast<double>(count));
}

}  // namespace mvskel
