#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mvskel/pipeline.hpp"
#include "test_helpers.hpp"

using namespace mvskel;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << text;
}

PipelineConfig small_synthetic(int n_frames, int n_persons, unsigned seed) {
    PipelineConfig cfg;
    cfg.scene.n_frames = n_frames;
    cfg.scene.n_persons = n_persons;
    cfg.scene.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("pipeline errors carry their stage tag") {
    const PipelineError err("calibrate", "bad input");
    CHECK(err.stage() == "calibrate");
    CHECK(std::string(err.what()) == "[calibrate] bad input");
}

TEST_CASE("pipeline config parsing applies overrides over defaults") {
    const testing::TempDir dir("pipe_cfg");
    const fs::path path = dir.path() / "config.json";
    write_text(path, R"({
        "mode": "files",
        "layout": "wb25",
        "recordings": [
            {"views_2d": ["a_2d.jsonl", "b_2d.jsonl"],
             "paired_3d": ["a_3d.jsonl", "b_3d.jsonl"]}
        ],
        "rig": {"n_cameras": 2, "circle_radius": 4.5, "angles": [0.0, 3.14]},
        "initial_intrinsics": {"fx": 900.0, "dist": [0.1, 0, 0, 0, 0]},
        "lsq": {"max_iterations": 77},
        "outliers": {"drop_fraction": 0.2, "rounds": 3},
        "tracker": {"distance_threshold": 0.75, "max_persons": 1},
        "triangulation": {"min_confidence": 0.25, "refine": true},
        "eval_stride": 7
    })");

    const PipelineConfig cfg = load_pipeline_config(path);
    CHECK_FALSE(cfg.synthetic);
    CHECK(cfg.layout_name == "wb25");
    REQUIRE(cfg.recordings.size() == 1);
    CHECK(cfg.recordings[0].views_2d[1] == fs::path("b_2d.jsonl"));
    CHECK(cfg.rig.circle_radius == 4.5);
    CHECK(cfg.rig.angles.size() == 2);
    CHECK(cfg.initial_intrinsics.fx == 900.0);
    CHECK(cfg.initial_intrinsics.fy == default_initial_intrinsics().fy);  // untouched
    CHECK(cfg.initial_intrinsics.dist[0] == 0.1);
    CHECK(cfg.lsq.max_iterations == 77);
    CHECK(cfg.outliers.drop_fraction == 0.2);
    CHECK(cfg.outliers.rounds == 3);
    CHECK(cfg.tracker.distance_threshold == 0.75);
    CHECK(cfg.tracker.max_persons == 1);
    CHECK(cfg.triangulation.min_confidence == 0.25);
    CHECK(cfg.triangulation.refine);
    CHECK(cfg.eval_stride == 7);

    SUBCASE("defaults survive an empty config") {
        write_text(path, "{}");
        const PipelineConfig defaults = load_pipeline_config(path);
        CHECK(defaults.synthetic);
        CHECK(defaults.scene.n_frames == 200);
        CHECK(defaults.eval_stride == 5);
        CHECK(defaults.tracker.max_gap == 30);
    }
    SUBCASE("a top-level seed overrides the scene seed") {
        write_text(path, R"({"scene": {"seed": 3}, "seed": 11})");
        CHECK(load_pipeline_config(path).scene.seed == 11);
    }
    SUBCASE("unknown mode is rejected") {
        write_text(path, R"({"mode": "quantum"})");
        CHECK_THROWS_AS(load_pipeline_config(path), std::runtime_error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_pipeline_config(dir.path() / "absent.json"), std::runtime_error);
    }
    SUBCASE("malformed JSON") {
        write_text(path, "{nope");
        CHECK_THROWS_AS(load_pipeline_config(path), std::runtime_error);
    }
}

TEST_CASE("scene config loads bare or wrapped") {
    const testing::TempDir dir("scene_cfg");
    const fs::path path = dir.path() / "scene.json";

    write_text(path, R"({"n_frames": 17, "n_persons": 2, "motion_model": "static"})");
    const SceneConfig bare = load_scene_config(path);
    CHECK(bare.n_frames == 17);
    CHECK(bare.n_persons == 2);
    CHECK(bare.motion_model == MotionModel::Static);

    write_text(path, R"({"scene": {"n_frames": 23, "seed": 5}})");
    const SceneConfig wrapped = load_scene_config(path);
    CHECK(wrapped.n_frames == 23);
    CHECK(wrapped.seed == 5);

    write_text(path, R"({"n_persons": 9})");
    CHECK_THROWS_AS(load_scene_config(path), std::invalid_argument);
}

TEST_CASE("write_scene emits loadable per-camera streams and truth files") {
    const testing::TempDir dir("scene_out");
    SceneConfig cfg;
    cfg.n_frames = 5;
    cfg.seed = 42;
    const SyntheticScene scene = generate_scene(cfg);
    write_scene(scene, dir.path());

    for (int k = 0; k < 3; ++k) {
        CHECK(fs::exists(dir.path() / ("cam" + std::to_string(k) + "_2d.jsonl")));
        CHECK(fs::exists(dir.path() / ("cam" + std::to_string(k) + "_3d.jsonl")));
    }
    const auto cams = load_calibration(dir.path() / "truth_calibration.json");
    REQUIRE(cams.size() == 3);
    CHECK(cams[1].intrinsics.fx == doctest::Approx(scene.true_cameras[1].intrinsics.fx));

    const LayoutPtr layout = builtin_layout("body");
    const SkeletonSequence view = load_sequence(dir.path() / "cam0_2d.jsonl", layout);
    REQUIRE(view.frames.size() == 5);
    CHECK(view.frames[2].persons[0].as_2d().joints[0].u ==
          doctest::Approx(scene.views[0].frames[2].persons[0].as_2d().joints[0].u));

    const SkeletonSequence truth_tracks =
        load_sequence(dir.path() / "truth_tracks.jsonl", layout);
    CHECK(truth_tracks.frames.size() == 5);
    CHECK(truth_tracks.frames[0].persons[0].id == 0);
}

TEST_CASE("synthetic pipeline run recovers the cameras and tracks the subject") {
    const testing::TempDir dir("pipe_run");
    const PipelineConfig cfg = small_synthetic(30, 1, 7);
    const PipelineResult result = run_pipeline(cfg, dir.path());

    REQUIRE(result.cameras.size() == 3);
    const SyntheticScene truth = generate_scene(cfg.scene);
    for (std::size_t k = 0; k < 3; ++k) {
        CAPTURE(k);
        const Intrinsics& fit = result.cameras[k].intrinsics;
        const Intrinsics& want = truth.true_cameras[k].intrinsics;
        CHECK(std::abs(fit.fx - want.fx) / want.fx < 1e-3);
        CHECK(std::abs(fit.fy - want.fy) / want.fy < 1e-3);
        const double center_err = (camera_center(result.cameras[k].extrinsics) -
                                   camera_center(truth.true_cameras[k].extrinsics))
                                      .norm();
        CHECK(center_err < 1e-4);
    }

    CHECK(result.holdout_rmse_px < 0.01);  // noiseless scene
    REQUIRE(result.tracks.size() == 1);
    REQUIRE(result.tracks[0].size() == 1);
    CHECK(result.tracks[0][0].length() == 30);

    CHECK(fs::exists(result.calibration_path));
    CHECK(fs::exists(result.report_path));
    CHECK(fs::exists(result.timings_path));
    REQUIRE(result.track_paths.size() == 1);
    CHECK(fs::exists(result.track_paths[0]));

    // The report is valid JSON with the documented sections.
    const std::string report = slurp(result.report_path);
    CHECK(report.find("\"calibration\"") != std::string::npos);
    CHECK(report.find("\"holdout\"") != std::string::npos);
    CHECK(report.find("\"recordings\"") != std::string::npos);
    CHECK(report.find("\"truth_mean_error_m\"") != std::string::npos);

    // Reloading the written calibration reproduces the fitted cameras.
    const auto reloaded = load_calibration(result.calibration_path);
    REQUIRE(reloaded.size() == 3);
    CHECK(reloaded[2].intrinsics.fx == doctest::Approx(result.cameras[2].intrinsics.fx));
}

TEST_CASE("two-person pipeline separates both subjects") {
    const testing::TempDir dir("pipe_two");
    const PipelineConfig cfg = small_synthetic(40, 2, 19);
    const PipelineResult result = run_pipeline(cfg, dir.path());

    REQUIRE(result.tracks.size() == 1);
    REQUIRE(result.tracks[0].size() == 2);
    CHECK(result.tracks[0][0].length() == 40);
    CHECK(result.tracks[0][1].length() == 40);

    // Noiseless reconstruction lands on the true skeletons.
    const std::string report = slurp(result.report_path);
    const auto pos = report.find("\"truth_mean_error_m\": ");
    REQUIRE(pos != std::string::npos);
    const double err = std::stod(report.substr(pos + 23));
    CHECK(err < 1e-4);
}

TEST_CASE("pipeline artifacts are bit-identical across reruns") {
    const testing::TempDir dir("pipe_repro");
    const PipelineConfig cfg = small_synthetic(25, 1, 99);

    const PipelineResult first = run_pipeline(cfg, dir.path() / "a");
    const PipelineResult second = run_pipeline(cfg, dir.path() / "b");

    CHECK(slurp(first.calibration_path) == slurp(second.calibration_path));
    CHECK(slurp(first.report_path) == slurp(second.report_path));
    REQUIRE(first.track_paths.size() == second.track_paths.size());
    for (std::size_t r = 0; r < first.track_paths.size(); ++r)
        CHECK(slurp(first.track_paths[r]) == slurp(second.track_paths[r]));
    // timings.json is the quarantined wall-clock artifact; it exists but is
    // exempt from reproducibility.
    CHECK(fs::exists(first.timings_path));
    CHECK(fs::exists(second.timings_path));
}

TEST_CASE("files-mode pipeline consumes streams written by write_scene") {
    const testing::TempDir dir("pipe_files");
    SceneConfig scene_cfg;
    scene_cfg.n_frames = 25;
    scene_cfg.seed = 55;
    const SyntheticScene scene = generate_scene(scene_cfg);
    write_scene(scene, dir.path() / "data");

    PipelineConfig cfg;
    cfg.synthetic = false;
    RecordingInputs rec;
    for (int k = 0; k < 3; ++k) {
        rec.views_2d.push_back(dir.path() / "data" / ("cam" + std::to_string(k) + "_2d.jsonl"));
        rec.paired_3d.push_back(dir.path() / "data" / ("cam" + std::to_string(k) + "_3d.jsonl"));
    }
    cfg.recordings.push_back(rec);

    const PipelineResult result = run_pipeline(cfg, dir.path() / "out");
    REQUIRE(result.cameras.size() == 3);
    CHECK(std::abs(result.cameras[0].intrinsics.fx - scene.true_cameras[0].intrinsics.fx) /
              scene.true_cameras[0].intrinsics.fx <
          1e-3);
    CHECK(result.holdout_rmse_px < 0.01);
    REQUIRE(result.tracks.size() == 1);
    CHECK(result.tracks[0].size() == 1);
}

TEST_CASE("pipeline failures surface as stage-tagged errors") {
    const testing::TempDir dir("pipe_fail");

    SUBCASE("files mode without recordings") {
        PipelineConfig cfg;
        cfg.synthetic = false;
        CHECK_THROWS_WITH_AS(run_pipeline(cfg, dir.path()), doctest::Contains("[load]"),
                             PipelineError);
    }
    SUBCASE("missing input files") {
        PipelineConfig cfg;
        cfg.synthetic = false;
        RecordingInputs rec;
        rec.views_2d = {dir.path() / "nope_2d.jsonl", dir.path() / "nope2_2d.jsonl"};
        rec.paired_3d = {dir.path() / "nope_3d.jsonl", dir.path() / "nope2_3d.jsonl"};
        cfg.recordings.push_back(rec);
        try {
            run_pipeline(cfg, dir.path());
            FAIL("expected a PipelineError");
        } catch (const PipelineError& e) {
            CHECK(e.stage() == "load");
        }
    }
    SUBCASE("mismatched per-camera lists") {
        PipelineConfig cfg;
        cfg.synthetic = false;
        RecordingInputs rec;
        rec.views_2d = {dir.path() / "a.jsonl", dir.path() / "b.jsonl"};
        rec.paired_3d = {dir.path() / "a3.jsonl"};
        cfg.recordings.push_back(rec);
        CHECK_THROWS_AS(run_pipeline(cfg, dir.path()), PipelineError);
    }
}
