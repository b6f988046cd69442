#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "mvskel/synthetic.hpp"
#include "mvskel/tracking.hpp"
#include "test_helpers.hpp"

using namespace mvskel;

namespace {

SceneConfig quick_config(int n_frames = 10, int n_persons = 1, unsigned seed = 1) {
    SceneConfig cfg;
    cfg.n_frames = n_frames;
    cfg.n_persons = n_persons;
    cfg.seed = seed;
    return cfg;
}

double delta_angle(const Extrinsics& a, const Extrinsics& b) {
    const Eigen::Matrix3d rel = rotation_matrix(a.rotation) * rotation_matrix(b.rotation).transpose();
    return std::acos(std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0));
}

}  // namespace

TEST_CASE("motion model names round-trip") {
    for (MotionModel m : {MotionModel::Static, MotionModel::LinearWalk, MotionModel::CircularWalk})
        CHECK(parse_motion_model(to_string(m)) == m);
    CHECK_THROWS_AS(parse_motion_model("moonwalk"), std::invalid_argument);
}

TEST_CASE("scene config validation") {
    CHECK_NOTHROW(quick_config().validate());
    SceneConfig cfg = quick_config();
    cfg.n_cameras = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_config();
    cfg.n_cameras = 4;  // rig still says 3
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_config();
    cfg.n_frames = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_config();
    cfg.n_persons = 3;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_config();
    cfg.joint_noise_2d = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_config();
    cfg.confidence_dropout = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_config();
    cfg.layout_name = "nope";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("scene generation is deterministic for a fixed config") {
    SceneConfig cfg = quick_config(8, 2, 77);
    cfg.joint_noise_2d = 1.5;
    cfg.joint_noise_3d = 0.01;
    cfg.confidence_dropout = 0.2;
    cfg.shuffle_detections = true;

    const SyntheticScene a = generate_scene(cfg);
    const SyntheticScene b = generate_scene(cfg);
    for (std::size_t k = 0; k < a.views.size(); ++k)
        for (std::size_t t = 0; t < a.views[k].frames.size(); ++t)
            for (std::size_t p = 0; p < a.views[k].frames[t].persons.size(); ++p) {
                const Skeleton2D& da = a.views[k].frames[t].persons[p].as_2d();
                const Skeleton2D& db = b.views[k].frames[t].persons[p].as_2d();
                for (std::size_t j = 0; j < da.joints.size(); ++j) {
                    CHECK(da.joints[j].u == db.joints[j].u);
                    CHECK(da.joints[j].c == db.joints[j].c);
                }
            }

    // A different seed moves the noisy pixels.
    cfg.seed = 78;
    const SyntheticScene c = generate_scene(cfg);
    CHECK(c.views[0].frames[0].persons[0].as_2d().joints[0].u !=
          a.views[0].frames[0].persons[0].as_2d().joints[0].u);
}

TEST_CASE("true cameras follow the rig recipe with distinct per-camera intrinsics") {
    const SceneConfig cfg = quick_config();
    const SyntheticScene scene = generate_scene(cfg);
    REQUIRE(scene.true_cameras.size() == 3);

    const auto rig_extr = initial_extrinsics(cfg.rig);
    for (int k = 0; k < 3; ++k) {
        const CameraParams& cam = scene.true_cameras[static_cast<std::size_t>(k)];
        CHECK(cam.name == "cam" + std::to_string(k));
        CHECK(cam.intrinsics.fx == doctest::Approx(1050.0 + 15.0 * k));
        CHECK(cam.intrinsics.fy == doctest::Approx(1045.0 + 12.0 * k));
        CHECK(cam.intrinsics.cx == doctest::Approx(960.0 + 4.0 * k));
        CHECK(cam.intrinsics.cy == doctest::Approx(540.0 - 3.0 * k));
        CHECK(cam.intrinsics.dist[0] == doctest::Approx(-0.12 + 0.01 * k));
        CHECK((cam.extrinsics.rotation - rig_extr[static_cast<std::size_t>(k)].rotation).norm() <
              1e-12);
        CHECK((cam.extrinsics.translation - rig_extr[static_cast<std::size_t>(k)].translation)
                  .norm() < 1e-12);
    }
    // Scenes differing only in seed share the same ground truth geometry.
    SceneConfig other = cfg;
    other.seed = 999;
    const SyntheticScene scene2 = generate_scene(other);
    CHECK(scene2.true_cameras[1].intrinsics.fx == scene.true_cameras[1].intrinsics.fx);
    CHECK(scene2.true_tracks[0].entries[3].skeleton.joints[0].x ==
          scene.true_tracks[0].entries[3].skeleton.joints[0].x);
}

TEST_CASE("true tracks cover every frame in the world frame") {
    const SceneConfig cfg = quick_config(12, 2);
    const SyntheticScene scene = generate_scene(cfg);
    REQUIRE(scene.true_tracks.size() == 2);
    for (int p = 0; p < 2; ++p) {
        const Track& track = scene.true_tracks[static_cast<std::size_t>(p)];
        CHECK(track.id == p);
        REQUIRE(track.entries.size() == 12);
        for (std::size_t t = 0; t < track.entries.size(); ++t) {
            CHECK(track.entries[t].time_index == static_cast<std::int64_t>(t));
            CHECK(track.entries[t].skeleton.frame == CoordFrame::World);
            for (const Joint3D& j : track.entries[t].skeleton.joints) CHECK(j.c == 1.0);
        }
    }
}

TEST_CASE("noiseless observations are exact projections of the truth") {
    const SceneConfig cfg = quick_config(6, 1, 5);
    const SyntheticScene scene = generate_scene(cfg);

    for (std::size_t k = 0; k < scene.true_cameras.size(); ++k) {
        const CameraParams& cam = scene.true_cameras[k];
        for (std::size_t t = 0; t < 6; ++t) {
            const Skeleton3D& world = scene.true_tracks[0].entries[t].skeleton;
            const Skeleton2D& det = scene.views[k].frames[t].persons[0].as_2d();
            const Skeleton3D& sensor = scene.paired_camframe_3d[k].frames[t].persons[0].as_3d();
            CHECK(sensor.frame == CoordFrame::Camera);
            for (std::size_t j = 0; j < world.joints.size(); ++j) {
                REQUIRE(det.joints[j].valid());  // everything is visible from the rig
                REQUIRE(sensor.joints[j].valid());
                CHECK(det.joints[j].c >= 0.6);
                CHECK(det.joints[j].c <= 1.0);

                const Eigen::Vector2d pix = project_world(cam, world.joints[j].pos());
                CHECK(det.joints[j].u == pix.x());  // zero noise: bitwise equal
                CHECK(det.joints[j].v == pix.y());
                const Eigen::Vector3d p_cam = world_to_cam(cam.extrinsics, world.joints[j].pos());
                CHECK(sensor.joints[j].x == p_cam.x());
                CHECK(sensor.joints[j].z == p_cam.z());
            }
        }
    }
    // Detections are anonymous; paired skeletons carry the person id.
    CHECK_FALSE(scene.views[0].frames[0].persons[0].id.has_value());
    CHECK(scene.paired_camframe_3d[0].frames[0].persons[0].id == 0);
}

TEST_CASE("dropout zeroes both observation streams") {
    SceneConfig cfg = quick_config(10, 1, 9);
    cfg.confidence_dropout = 1.0;
    const SyntheticScene all_dropped = generate_scene(cfg);
    for (const auto& frame : all_dropped.views[0].frames)
        for (const auto& joint : frame.persons[0].as_2d().joints) {
            CHECK(joint.u == 0.0);
            CHECK(joint.v == 0.0);
            CHECK(joint.c == 0.0);
        }
    for (const auto& frame : all_dropped.paired_camframe_3d[0].frames)
        for (const auto& joint : frame.persons[0].as_3d().joints) CHECK(joint.c == 0.0);

    cfg.confidence_dropout = 0.5;
    const SyntheticScene half = generate_scene(cfg);
    std::size_t dropped = 0, total = 0;
    for (const auto& frame : half.views[0].frames)
        for (const auto& joint : frame.persons[0].as_2d().joints) {
            ++total;
            if (!joint.valid()) ++dropped;
        }
    const double rate = static_cast<double>(dropped) / static_cast<double>(total);
    CHECK(rate > 0.3);
    CHECK(rate < 0.7);
}

TEST_CASE("two persons stay well separated under every motion model") {
    for (MotionModel model :
         {MotionModel::Static, MotionModel::LinearWalk, MotionModel::CircularWalk}) {
        CAPTURE(to_string(model));
        SceneConfig cfg = quick_config(100, 2, 3);
        cfg.motion_model = model;
        const SyntheticScene scene = generate_scene(cfg);
        double min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < 100; ++t)
            min_gap = std::min(min_gap,
                               skeleton_distance(scene.true_tracks[0].entries[t].skeleton,
                                                 scene.true_tracks[1].entries[t].skeleton));
        // At least twice the default tracking threshold of 0.5 m.
        CHECK(min_gap >= 1.0);
    }
}

TEST_CASE("shuffling randomizes detection order but not the paired stream") {
    SceneConfig cfg = quick_config(40, 2, 11);
    cfg.shuffle_detections = true;
    const SyntheticScene scene = generate_scene(cfg);

    int swapped = 0;
    for (std::size_t t = 0; t < 40; ++t) {
        const CameraParams& cam = scene.true_cameras[0];
        const Skeleton2D& det0 = scene.views[0].frames[t].persons[0].as_2d();
        const Skeleton3D& sensor0 = scene.paired_camframe_3d[0].frames[t].persons[0].as_3d();
        const Skeleton3D& sensor1 = scene.paired_camframe_3d[0].frames[t].persons[1].as_3d();

        // The paired stream is never shuffled.
        CHECK(scene.paired_camframe_3d[0].frames[t].persons[0].id == 0);
        CHECK(scene.paired_camframe_3d[0].frames[t].persons[1].id == 1);

        // Noiseless pixels identify which person detection slot 0 holds.
        const double u_person0 = project(cam.intrinsics, sensor0.joints[0].pos()).x();
        const double u_person1 = project(cam.intrinsics, sensor1.joints[0].pos()).x();
        if (det0.joints[0].u == u_person1)
            ++swapped;
        else
            CHECK(det0.joints[0].u == u_person0);
    }
    CHECK(swapped > 5);
    CHECK(swapped < 35);
}

TEST_CASE("make_frame_pairs zips one camera's streams") {
    const SceneConfig cfg = quick_config(7, 1, 13);
    const SyntheticScene scene = generate_scene(cfg);
    const auto pairs = make_frame_pairs(scene.views[1], scene.paired_camframe_3d[1], "cam1");
    REQUIRE(pairs.size() == 7);
    CHECK(pairs[0].camera == "cam1");
    CHECK(pairs[3].time_index == 3);
    CHECK(pairs[2].cam2d.joints[0].u ==
          scene.views[1].frames[2].persons[0].as_2d().joints[0].u);
    CHECK(pairs[2].cam3d.frame == CoordFrame::Camera);

    SUBCASE("length mismatch throws") {
        auto shorter = scene.views[1];
        shorter.frames.pop_back();
        CHECK_THROWS_AS(make_frame_pairs(shorter, scene.paired_camframe_3d[1], "x"),
                        std::invalid_argument);
    }
    SUBCASE("multi-person frames throw") {
        const SyntheticScene crowd = generate_scene(quick_config(4, 2, 13));
        CHECK_THROWS_AS(make_frame_pairs(crowd.views[0], crowd.paired_camframe_3d[0], "x"),
                        std::invalid_argument);
    }
    SUBCASE("world-frame 3D throws") {
        auto wrong = scene.paired_camframe_3d[1];
        for (auto& frame : wrong.frames)
            std::get<Skeleton3D>(frame.persons[0].skeleton).frame = CoordFrame::World;
        CHECK_THROWS_AS(make_frame_pairs(scene.views[1], wrong, "x"), std::invalid_argument);
    }
    SUBCASE("3D data in the 2D slot throws") {
        CHECK_THROWS_AS(
            make_frame_pairs(scene.paired_camframe_3d[1], scene.paired_camframe_3d[1], "x"),
            std::invalid_argument);
    }
}

TEST_CASE("perturb_intrinsics scales within the requested band and clears distortion") {
    std::mt19937_64 rng(21);
    Intrinsics truth = default_initial_intrinsics();
    truth.dist = {-0.1, 0.03, 0.001, -0.001, 0.002};
    for (int trial = 0; trial < 25; ++trial) {
        const Intrinsics out = perturb_intrinsics(truth, 0.10, rng);
        CHECK(std::abs(out.fx / truth.fx - 1.0) <= 0.10);
        CHECK(std::abs(out.fy / truth.fy - 1.0) <= 0.10);
        CHECK(std::abs(out.cx / truth.cx - 1.0) <= 0.10);
        CHECK(std::abs(out.cy / truth.cy - 1.0) <= 0.10);
        for (double k : out.dist) CHECK(k == 0.0);
    }
    std::mt19937_64 rng_a(5), rng_b(5);
    CHECK(perturb_intrinsics(truth, 0.1, rng_a).fx == perturb_intrinsics(truth, 0.1, rng_b).fx);
}

TEST_CASE("perturb_extrinsics moves by exactly the requested amounts") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 25; ++trial) {
        const Extrinsics truth = testing::random_extrinsics(rng);
        const double angle = 5.0 * M_PI / 180.0;
        const Extrinsics out = perturb_extrinsics(truth, angle, 0.2, rng);
        CHECK(delta_angle(out, truth) == doctest::Approx(angle).epsilon(1e-9));
        CHECK((out.translation - truth.translation).norm() == doctest::Approx(0.2).epsilon(1e-12));
    }
}
