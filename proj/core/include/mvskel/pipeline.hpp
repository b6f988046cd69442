#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvskel/calibration.hpp"
#include "mvskel/camera.hpp"
#include "mvskel/least_squares.hpp"
#include "mvskel/synthetic.hpp"
#include "mvskel/tracking.hpp"
#include "mvskel/triangulation.hpp"

namespace mvskel {

/// Any stage failure surfaces as this, prefixed "[stage] cause".
class PipelineError : public std::runtime_error {
public:
    PipelineError(std::string stage, const std::string& cause)
        : std::runtime_error("[" + stage + "] " + cause), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// One recording as file paths, parallel per-camera lists.
struct RecordingInputs {
    std::vector<std::filesystem::path> views_2d;
    std::vector<std::filesystem::path> paired_3d;
};

struct PipelineConfig {
    bool synthetic = true;
    SceneConfig scene;  // synthetic mode

    // files mode
    std::string layout_name = "body";
    std::vector<RecordingInputs> recordings;
    RigConfig rig;

    Intrinsics initial_intrinsics = default_initial_intrinsics();
    LsqOptions lsq;
    OutlierSchedule outliers;
    TrackerConfig tracker;
    TriangulateOptions triangulation;
    int eval_stride = 5;  // every stride-th frame is held out of the fits
};

struct PipelineResult {
    std::vector<CameraParams> cameras;
    std::vector<std::vector<Track>> tracks;  // per recording
    double holdout_rmse_px = 0.0;

    std::filesystem::path calibration_path;
    std::filesystem::path report_path;
    std::filesystem::path timings_path;
    std::vector<std::filesystem::path> track_paths;
};

/// Config parsing (JSON; every section optional, defaults as in the structs).
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
SceneConfig load_scene_config(const std::filesystem::path& path);

/// Full run: select calibration sequences -> fit intrinsics -> synchronize ->
/// circle-prior extrinsics init -> fit extrinsics -> per-frame person
/// matching and triangulation -> tracking -> artifacts in out_dir.
///
/// Artifacts: calibration.json, tracks_<i>.jsonl per recording, report.json
/// (all deterministic for a fixed config), and timings.json (wall-clock
/// per-stage timings, the one deliberately non-reproducible file).
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// Writes a generated scene to disk: per-camera cam<k>_2d.jsonl and
/// cam<k>_3d.jsonl streams, truth_calibration.json, truth_tracks.jsonl.
void write_scene(const SyntheticScene& scene, const std::filesystem::path& out_dir);

}  // namespace mvskel
