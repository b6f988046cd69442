#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mvskel/calibration.hpp"
#include "mvskel/triangulation.hpp"
#include "test_helpers.hpp"

using namespace mvskel;

namespace {

std::vector<CameraParams> rig_cameras(bool with_distortion) {
    const auto extrinsics = initial_extrinsics(RigConfig{});
    std::vector<CameraParams> cams;
    for (std::size_t k = 0; k < extrinsics.size(); ++k) {
        CameraParams cam;
        cam.name = "cam" + std::to_string(k);
        cam.intrinsics = default_initial_intrinsics();
        cam.intrinsics.fx += 10.0 * static_cast<double>(k);
        cam.intrinsics.fy += 7.0 * static_cast<double>(k);
        if (with_distortion)
            cam.intrinsics.dist = {-0.1 + 0.01 * static_cast<double>(k), 0.03, 0.0005, -0.0005, 0.002};
        cam.extrinsics = extrinsics[k];
        cams.push_back(std::move(cam));
    }
    return cams;
}

std::vector<Observation> observe_point(const std::vector<CameraParams>& cams,
                                       const Eigen::Vector3d& point, double confidence = 1.0) {
    std::vector<Observation> obs;
    for (const CameraParams& cam : cams) obs.push_back({&cam, project_world(cam, point), confidence});
    return obs;
}

Skeleton2D project_skeleton(const CameraParams& cam, const Skeleton3D& world) {
    Skeleton2D view;
    view.layout = world.layout;
    for (const Joint3D& j : world.joints) {
        if (j.c <= 0.0) {
            view.joints.push_back({0.0, 0.0, 0.0});
            continue;
        }
        const Eigen::Vector2d uv = project_world(cam, j.pos());
        view.joints.push_back({uv.x(), uv.y(), j.c});
    }
    return view;
}

}  // namespace

TEST_CASE("noiseless triangulation reproduces the generating point") {
    const auto cams = rig_cameras(true);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> span(-0.6, 0.6);
    std::uniform_real_distribution<double> height(0.4, 1.7);

    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Vector3d truth(span(rng), span(rng), height(rng));
        const TriangulatedJoint joint = triangulate_point(observe_point(cams, truth));
        REQUIRE(joint.valid());
        CHECK((joint.point - truth).norm() < 1e-7);
        CHECK(joint.residual_px < 1e-5);
        CHECK(joint.confidence == doctest::Approx(1.0));
    }
}

TEST_CASE("two views suffice and fewer do not") {
    const auto cams = rig_cameras(false);
    const Eigen::Vector3d truth(0.2, -0.1, 1.2);
    auto obs = observe_point(cams, truth);

    SUBCASE("all three views") {
        CHECK(triangulate_point(obs).valid());
    }
    SUBCASE("two views") {
        obs.pop_back();
        const TriangulatedJoint joint = triangulate_point(obs);
        REQUIRE(joint.valid());
        CHECK((joint.point - truth).norm() < 1e-7);
    }
    SUBCASE("one view is invalid") {
        obs.resize(1);
        const TriangulatedJoint joint = triangulate_point(obs);
        CHECK_FALSE(joint.valid());
        CHECK(joint.confidence == 0.0);
    }
    SUBCASE("empty is invalid") {
        CHECK_FALSE(triangulate_point({}).valid());
    }
}

TEST_CASE("confidence gates which observations participate") {
    const auto cams = rig_cameras(false);
    const Eigen::Vector3d truth(0.3, 0.2, 1.0);
    auto obs = observe_point(cams, truth);

    SUBCASE("zero-confidence views are ignored") {
        obs[2].confidence = 0.0;
        obs[2].pixel = {1e9, -1e9};  // garbage that must not leak into the solve
        const TriangulatedJoint joint = triangulate_point(obs);
        REQUIRE(joint.valid());
        CHECK((joint.point - truth).norm() < 1e-7);
        CHECK(joint.confidence == doctest::Approx(1.0));
    }
    SUBCASE("below-threshold views are ignored") {
        obs[2].confidence = 0.05;  // default min_confidence is 0.1
        obs[2].pixel += Eigen::Vector2d(500.0, -300.0);
        const TriangulatedJoint joint = triangulate_point(obs);
        REQUIRE(joint.valid());
        CHECK((joint.point - truth).norm() < 1e-7);
    }
    SUBCASE("views exactly at the threshold participate") {
        obs[0].confidence = 0.1;
        obs[1].confidence = 0.1;
        obs[2].confidence = 0.0;
        const TriangulatedJoint joint = triangulate_point(obs);
        REQUIRE(joint.valid());
        CHECK(joint.confidence == doctest::Approx(0.1));
    }
    SUBCASE("dropping all views below a raised threshold invalidates the point") {
        TriangulateOptions opts;
        opts.min_confidence = 0.9;
        obs[0].confidence = 0.5;
        obs[1].confidence = 0.5;
        obs[2].confidence = 0.5;
        CHECK_FALSE(triangulate_point(obs, opts).valid());
    }
}

TEST_CASE("output confidence is the mean of the contributing confidences") {
    const auto cams = rig_cameras(false);
    auto obs = observe_point(cams, {0.1, 0.0, 1.1});
    obs.pop_back();
    obs[0].confidence = 0.8;
    obs[1].confidence = 0.6;
    const TriangulatedJoint joint = triangulate_point(obs);
    CHECK(joint.confidence == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("confidence weighting pulls the solution toward trusted views") {
    const auto cams = rig_cameras(false);
    const Eigen::Vector3d truth(0.25, -0.15, 1.3);
    auto weighted = observe_point(cams, truth);
    weighted[2].pixel += Eigen::Vector2d(40.0, -25.0);  // corrupted third view
    auto unweighted = weighted;
    weighted[2].confidence = 0.15;

    const TriangulatedJoint low_trust = triangulate_point(weighted);
    const TriangulatedJoint equal_trust = triangulate_point(unweighted);
    REQUIRE(low_trust.valid());
    REQUIRE(equal_trust.valid());
    CHECK((low_trust.point - truth).norm() < (equal_trust.point - truth).norm());
}

TEST_CASE("a point reconstructed behind a camera reports infinite residual") {
    // Two parallel cameras fed pixels whose back-projected rays cross behind
    // them: the algebraic solution exists but cannot be re-projected.
    CameraParams cam0;
    cam0.intrinsics = default_initial_intrinsics();
    CameraParams cam1 = cam0;
    cam1.extrinsics.translation = {-1.0, 0.0, 0.0};  // center at (1, 0, 0)

    const Eigen::Vector3d behind(0.5, 0.0, -2.0);
    const auto fake_pixel = [](const CameraParams& cam, const Eigen::Vector3d& p) {
        const Eigen::Vector3d pc = world_to_cam(cam.extrinsics, p);
        return Eigen::Vector2d(cam.intrinsics.fx * pc.x() / pc.z() + cam.intrinsics.cx,
                               cam.intrinsics.fy * pc.y() / pc.z() + cam.intrinsics.cy);
    };
    const std::vector<Observation> obs = {{&cam0, fake_pixel(cam0, behind), 1.0},
                                          {&cam1, fake_pixel(cam1, behind), 1.0}};
    const TriangulatedJoint joint = triangulate_point(obs);
    REQUIRE(joint.valid());
    CHECK((joint.point - behind).norm() < 1e-6);
    CHECK(std::isinf(joint.residual_px));
}

TEST_CASE("gauss-newton refinement does not worsen the reprojection residual") {
    const auto cams = rig_cameras(true);
    const Eigen::Vector3d truth(0.2, 0.3, 1.1);
    auto obs = observe_point(cams, truth);
    // Inconsistent observations so the DLT point is not already optimal.
    obs[0].pixel += Eigen::Vector2d(3.0, -2.0);
    obs[1].pixel += Eigen::Vector2d(-1.5, 2.5);
    obs[2].pixel += Eigen::Vector2d(0.5, 1.0);

    TriangulateOptions plain, refined;
    refined.refine = true;
    const TriangulatedJoint dlt = triangulate_point(obs, plain);
    const TriangulatedJoint polished = triangulate_point(obs, refined);
    REQUIRE(dlt.valid());
    REQUIRE(polished.valid());
    CHECK(polished.residual_px <= dlt.residual_px + 1e-9);
}

TEST_CASE("triangulate_point rejects malformed inputs") {
    const auto cams = rig_cameras(false);
    auto obs = observe_point(cams, {0.0, 0.0, 1.0});

    SUBCASE("options validation") {
        TriangulateOptions opts;
        opts.min_confidence = -0.1;
        CHECK_THROWS_AS(triangulate_point(obs, opts), std::invalid_argument);
        opts.min_confidence = 1.5;
        CHECK_THROWS_AS(triangulate_point(obs, opts), std::invalid_argument);
    }
    SUBCASE("null camera on a live observation") {
        obs[1].camera = nullptr;
        CHECK_THROWS_AS(triangulate_point(obs), std::invalid_argument);
    }
    SUBCASE("non-finite pixel on a live observation") {
        obs[1].pixel = {std::numeric_limits<double>::quiet_NaN(), 0.0};
        CHECK_THROWS_AS(triangulate_point(obs), std::invalid_argument);
    }
}

TEST_CASE("triangulate_skeleton reconstructs every joint in the world frame") {
    const auto cams = rig_cameras(true);
    const LayoutPtr layout = builtin_layout("body");
    Skeleton3D truth = testing::constant_skeleton(layout, {0.1, -0.2, 1.0});
    truth.joints[5].c = 0.0;  // never observed anywhere

    std::vector<Skeleton2D> views;
    for (const CameraParams& cam : cams) views.push_back(project_skeleton(cam, truth));
    // Joint 7 deleted from one view only: still two views left.
    views[1].joints[7].c = 0.0;

    const Skeleton3D rebuilt = triangulate_skeleton(views, cams);
    CHECK(rebuilt.frame == CoordFrame::World);
    CHECK(rebuilt.layout->name == layout->name);
    REQUIRE(rebuilt.joints.size() == truth.joints.size());
    for (std::size_t j = 0; j < truth.joints.size(); ++j) {
        CAPTURE(j);
        if (j == 5) {
            CHECK_FALSE(rebuilt.joints[j].valid());
            continue;
        }
        CHECK(rebuilt.joints[j].valid());
        CHECK((rebuilt.joints[j].pos() - truth.joints[j].pos()).norm() < 1e-7);
    }
}

TEST_CASE("triangulate_skeleton validates its inputs") {
    const auto cams = rig_cameras(false);
    const LayoutPtr body = builtin_layout("body");
    const Skeleton3D person = testing::constant_skeleton(body, {0.0, 0.0, 1.0});
    std::vector<Skeleton2D> views;
    for (const CameraParams& cam : cams) views.push_back(project_skeleton(cam, person));

    SUBCASE("no views") {
        CHECK_THROWS_AS(triangulate_skeleton({}, {}), std::invalid_argument);
    }
    SUBCASE("views/cameras mismatch") {
        views.pop_back();
        CHECK_THROWS_AS(triangulate_skeleton(views, cams), std::invalid_argument);
    }
    SUBCASE("layout mismatch") {
        views[2].layout = builtin_layout("wb25");
        CHECK_THROWS_AS(triangulate_skeleton(views, cams), std::invalid_argument);
    }
}

TEST_CASE("reprojection_rmse matches the hand-computed mixed-offset value") {
    CameraParams cam;
    cam.intrinsics = default_initial_intrinsics();
    const std::vector<CameraParams> cams = {cam, cam};

    const LayoutPtr layout = builtin_layout("body");
    Skeleton3D skeleton;
    skeleton.layout = layout;
    skeleton.joints.assign(layout->count(), Joint3D{});
    skeleton.joints[0] = {0.0, 0.0, 2.0, 1.0};  // projects to the principal point

    Skeleton2D blank;
    blank.layout = layout;
    blank.joints.assign(layout->count(), Joint2D{});
    Skeleton2D view_a = blank, view_b = blank;
    view_a.joints[0] = {963.0, 540.0, 1.0};  // 3 px off in u
    view_b.joints[0] = {960.0, 544.0, 1.0};  // 4 px off in v

    // sqrt((3^2 + 4^2) / 2) = sqrt(12.5)
    CHECK(reprojection_rmse(skeleton, {view_a, view_b}, cams) ==
          doctest::Approx(3.5355339059327378).epsilon(1e-12));

    SUBCASE("pairs need positive confidence on both sides") {
        view_b.joints[0].c = 0.0;
        CHECK(reprojection_rmse(skeleton, {view_a, view_b}, cams) == doctest::Approx(3.0));
    }
    SUBCASE("throws when nothing qualifies") {
        CHECK_THROWS_AS(reprojection_rmse(skeleton, {blank, blank}, cams), std::invalid_argument);
    }
    SUBCASE("behind-camera points give infinite rmse") {
        skeleton.joints[0].z = -2.0;
        CHECK(std::isinf(reprojection_rmse(skeleton, {view_a, view_b}, cams)));
    }
}

TEST_CASE("match_persons untangles a swapped view") {
    const auto cams = rig_cameras(true);
    const LayoutPtr layout = builtin_layout("body");
    const Skeleton3D person_a = testing::constant_skeleton(layout, {0.0, 0.35, 1.0});
    const Skeleton3D person_b = testing::constant_skeleton(layout, {0.6, -0.4, 0.9});

    std::vector<std::vector<Skeleton2D>> views;
    for (const CameraParams& cam : cams)
        views.push_back({project_skeleton(cam, person_a), project_skeleton(cam, person_b)});
    std::swap(views[1][0], views[1][1]);

    const auto groups = match_persons(views, cams);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0] == std::vector<int>{0, 1, 0});
    CHECK(groups[1] == std::vector<int>{1, 0, 1});
}

TEST_CASE("match_persons pads missing detections with -1") {
    const auto cams = rig_cameras(true);
    const LayoutPtr layout = builtin_layout("body");
    const Skeleton3D person_a = testing::constant_skeleton(layout, {0.0, 0.35, 1.0});
    const Skeleton3D person_b = testing::constant_skeleton(layout, {0.6, -0.4, 0.9});

    std::vector<std::vector<Skeleton2D>> views;
    views.push_back({project_skeleton(cams[0], person_a)});  // camera 0 missed person B
    views.push_back({project_skeleton(cams[1], person_a), project_skeleton(cams[1], person_b)});
    views.push_back({project_skeleton(cams[2], person_a), project_skeleton(cams[2], person_b)});

    const auto groups = match_persons(views, cams);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0] == std::vector<int>{-1, 1, 1});
    CHECK(groups[1] == std::vector<int>{0, 0, 0});
}

TEST_CASE("match_persons edge cases") {
    const auto cams = rig_cameras(false);
    SUBCASE("no persons anywhere") {
        const std::vector<std::vector<Skeleton2D>> empty(3);
        CHECK(match_persons(empty, cams).empty());
    }
    SUBCASE("more than two persons in a view throws") {
        const LayoutPtr layout = builtin_layout("body");
        const Skeleton2D det = project_skeleton(
            cams[0], testing::constant_skeleton(layout, {0.0, 0.0, 1.0}));
        std::vector<std::vector<Skeleton2D>> views(3);
        views[0] = {det, det, det};
        CHECK_THROWS_AS(match_persons(views, cams), std::invalid_argument);
    }
    SUBCASE("views/cameras size mismatch throws") {
        const std::vector<std::vector<Skeleton2D>> views(2);
        CHECK_THROWS_AS(match_persons(views, cams), std::invalid_argument);
    }
}
