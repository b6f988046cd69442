#include "mvskel/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "mvskel/layout.hpp"

namespace mvskel {

using nlohmann::json;

namespace {

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    try {
        json doc;
        in >> doc;
        return doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid JSON in " + path.string() + ": " + e.what());
    }
}

RigConfig parse_rig(const json& j, const RigConfig& defaults) {
    RigConfig rig = defaults;
    rig.n_cameras = j.value("n_cameras", rig.n_cameras);
    rig.reference_index = j.value("reference_index", rig.reference_index);
    rig.circle_radius = j.value("circle_radius", rig.circle_radius);
    rig.camera_height = j.value("camera_height", rig.camera_height);
    rig.look_at_height = j.value("look_at_height", rig.look_at_height);
    if (j.contains("angles")) rig.angles = j.at("angles").get<std::vector<double>>();
    return rig;
}

SceneConfig parse_scene(const json& j, const SceneConfig& defaults) {
    SceneConfig scene = defaults;
    scene.n_cameras = j.value("n_cameras", scene.n_cameras);
    scene.n_frames = j.value("n_frames", scene.n_frames);
    scene.n_persons = j.value("n_persons", scene.n_persons);
    if (j.contains("motion_model"))
        scene.motion_model = parse_motion_model(j.at("motion_model").get<std::string>());
    scene.layout_name = j.value("layout", scene.layout_name);
    scene.joint_noise_2d = j.value("joint_noise_2d", scene.joint_noise_2d);
    scene.joint_noise_3d = j.value("joint_noise_3d", scene.joint_noise_3d);
    scene.confidence_dropout = j.value("confidence_dropout", scene.confidence_dropout);
    scene.shuffle_detections = j.value("shuffle_detections", scene.shuffle_detections);
    scene.seed = j.value("seed", scene.seed);
    RigConfig rig_defaults = scene.rig;
    rig_defaults.n_cameras = scene.n_cameras;
    scene.rig = j.contains("rig") ? parse_rig(j.at("rig"), rig_defaults) : rig_defaults;
    return scene;
}

Intrinsics parse_intrinsics(const json& j, const Intrinsics& defaults) {
    Intrinsics intr = defaults;
    intr.fx = j.value("fx", intr.fx);
    intr.fy = j.value("fy", intr.fy);
    intr.cx = j.value("cx", intr.cx);
    intr.cy = j.value("cy", intr.cy);
    if (j.contains("dist")) {
        const auto dist = j.at("dist").get<std::vector<double>>();
        if (dist.size() != 5) throw std::runtime_error("initial_intrinsics.dist must have 5 entries");
        std::copy(dist.begin(), dist.end(), intr.dist.begin());
    }
    return intr;
}

LsqOptions parse_lsq(const json& j, const LsqOptions& defaults) {
    LsqOptions opts = defaults;
    opts.max_iterations = j.value("max_iterations", opts.max_iterations);
    opts.cost_tolerance = j.value("cost_tolerance", opts.cost_tolerance);
    opts.param_tolerance = j.value("param_tolerance", opts.param_tolerance);
    opts.initial_damping = j.value("initial_damping", opts.initial_damping);
    opts.damping_up = j.value("damping_up", opts.damping_up);
    opts.damping_down = j.value("damping_down", opts.damping_down);
    opts.jacobian_eps = j.value("jacobian_eps", opts.jacobian_eps);
    return opts;
}

}  // namespace

SceneConfig load_scene_config(const std::filesystem::path& path) {
    json doc = read_json_file(path);
    if (doc.contains("scene")) doc = doc.at("scene");
    SceneConfig scene = parse_scene(doc, SceneConfig{});
    scene.validate();
    return scene;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    const json doc = read_json_file(path);
    PipelineConfig cfg;

    const std::string mode = doc.value("mode", "synthetic");
    if (mode == "synthetic")
        cfg.synthetic = true;
    else if (mode == "files")
        cfg.synthetic = false;
    else
        throw std::runtime_error("pipeline mode must be \"synthetic\" or \"files\"");

    if (doc.contains("scene")) cfg.scene = parse_scene(doc.at("scene"), cfg.scene);
    if (doc.contains("seed")) cfg.scene.seed = doc.at("seed").get<std::uint64_t>();

    cfg.layout_name = doc.value("layout", cfg.layout_name);
    if (doc.contains("recordings")) {
        for (const json& r : doc.at("recordings")) {
            RecordingInputs rec;
            for (const json& p : r.at("views_2d")) rec.views_2d.emplace_back(p.get<std::string>());
            for (const json& p : r.at("paired_3d"))
                rec.paired_3d.emplace_back(p.get<std::string>());
            cfg.recordings.push_back(std::move(rec));
        }
    }
    if (doc.contains("rig")) cfg.rig = parse_rig(doc.at("rig"), cfg.rig);

    if (doc.contains("initial_intrinsics"))
        cfg.initial_intrinsics = parse_intrinsics(doc.at("initial_intrinsics"), cfg.initial_intrinsics);
    if (doc.contains("lsq")) cfg.lsq = parse_lsq(doc.at("lsq"), cfg.lsq);
    if (doc.contains("outliers")) {
        cfg.outliers.drop_fraction = doc.at("outliers").value("drop_fraction", cfg.outliers.drop_fraction);
        cfg.outliers.rounds = doc.at("outliers").value("rounds", cfg.outliers.rounds);
    }
    if (doc.contains("tracker")) {
        const json& t = doc.at("tracker");
        cfg.tracker.distance_threshold = t.value("distance_threshold", cfg.tracker.distance_threshold);
        cfg.tracker.min_track_length = t.value("min_track_length", cfg.tracker.min_track_length);
        cfg.tracker.max_persons = t.value("max_persons", cfg.tracker.max_persons);
        cfg.tracker.max_gap = t.value("max_gap", cfg.tracker.max_gap);
    }
    if (doc.contains("triangulation")) {
        const json& t = doc.at("triangulation");
        cfg.triangulation.min_confidence = t.value("min_confidence", cfg.triangulation.min_confidence);
        cfg.triangulation.refine = t.value("refine", cfg.triangulation.refine);
    }
    cfg.eval_stride = doc.value("eval_stride", cfg.eval_stride);
    return cfg;
}

void write_scene(const SyntheticScene& scene, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    for (std::size_t k = 0; k < scene.views.size(); ++k) {
        save_sequence(out_dir / ("cam" + std::to_string(k) + "_2d.jsonl"), scene.views[k]);
        save_sequence(out_dir / ("cam" + std::to_string(k) + "_3d.jsonl"),
                      scene.paired_camframe_3d[k]);
    }
    save_calibration(out_dir / "truth_calibration.json", scene.true_cameras);
    save_sequence(out_dir / "truth_tracks.jsonl", tracks_to_sequence(scene.true_tracks));
}

namespace {

struct Recording {
    std::vector<SkeletonSequence> views;   // per camera, 2D
    std::vector<SkeletonSequence> paired;  // per camera, camera-frame 3D
};

struct StageTimer {
    std::vector<std::pair<std::string, double>> entries;  // (stage, milliseconds)

    template <typename Fn>
    auto run(const std::string& name, Fn&& fn) {
        const auto start = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                fn();
                record(name, start);
            } else {
                auto out = fn();
                record(name, start);
                return out;
            }
        } catch (const PipelineError&) {
            record(name, start);
            throw;
        } catch (const std::exception& e) {
            record(name, start);
            throw PipelineError(name, e.what());
        }
    }

    void record(const std::string& name, std::chrono::steady_clock::time_point start) {
        const auto elapsed = std::chrono::steady_clock::now() - start;
        entries.emplace_back(name,
                             std::chrono::duration<double, std::milli>(elapsed).count());
    }
};

bool is_eval_position(std::size_t t, int stride) {
    return stride >= 2 && t % static_cast<std::size_t>(stride) ==
                              static_cast<std::size_t>(stride) - 1;
}

// Per-camera persons at one synced frame position.
std::vector<std::vector<Skeleton2D>> frame_views(const std::vector<SkeletonSequence>& synced,
                                                 std::size_t t) {
    std::vector<std::vector<Skeleton2D>> out(synced.size());
    for (std::size_t k = 0; k < synced.size(); ++k)
        for (const PersonEntry& person : synced[k].frames[t].persons)
            if (!person.is_3d()) out[k].push_back(person.as_2d());
    return out;
}

json report_of(const LsqReport& report) {
    return json{{"final_cost", report.final_cost},
                {"iterations", report.iterations},
                {"converged", report.converged},
                {"termination", to_string(report.termination_reason)}};
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    StageTimer timer;
    PipelineResult result;
    json report;

    std::filesystem::create_directories(out_dir);

    // ---- load: assemble recordings and camera shells -----------------------
    std::vector<Recording> recordings;
    std::vector<Recording> calib_only;  // synthetic auxiliary calibration scene
    const SyntheticScene* truth = nullptr;
    SyntheticScene scene;
    RigConfig rig = cfg.synthetic ? cfg.scene.rig : cfg.rig;

    timer.run("load", [&] {
        if (cfg.synthetic) {
            scene = generate_scene(cfg.scene);
            truth = &scene;
            recordings.push_back({scene.views, scene.paired_camframe_3d});
            if (cfg.scene.n_persons != 1) {
                // Calibration needs a single-subject recording of the same rig.
                SceneConfig calib_cfg = cfg.scene;
                calib_cfg.n_persons = 1;
                calib_cfg.shuffle_detections = false;
                calib_cfg.seed = cfg.scene.seed ^ 0x9E3779B97F4A7C15ull;
                const SyntheticScene calib_scene = generate_scene(calib_cfg);
                calib_only.push_back({calib_scene.views, calib_scene.paired_camframe_3d});
            }
        } else {
            if (cfg.recordings.empty()) throw std::runtime_error("no recordings configured");
            const LayoutPtr layout = builtin_layout(cfg.layout_name);
            for (const RecordingInputs& inputs : cfg.recordings) {
                if (inputs.views_2d.size() != inputs.paired_3d.size() ||
                    inputs.views_2d.size() < 2)
                    throw std::runtime_error(
                        "each recording needs matching 2D/3D file lists for >= 2 cameras");
                Recording rec;
                for (const auto& path : inputs.views_2d)
                    rec.views.push_back(load_sequence(path, layout));
                for (const auto& path : inputs.paired_3d)
                    rec.paired.push_back(load_sequence(path, layout, CoordFrame::Camera));
                recordings.push_back(std::move(rec));
            }
        }
        const std::size_t n_cameras = recordings.front().views.size();
        for (const Recording& rec : recordings)
            if (rec.views.size() != n_cameras || rec.paired.size() != n_cameras)
                throw std::runtime_error("recordings disagree on camera count");
        rig.n_cameras = static_cast<int>(n_cameras);
        rig.validate();

        result.cameras.resize(n_cameras);
        for (std::size_t k = 0; k < n_cameras; ++k) {
            result.cameras[k].name = "cam" + std::to_string(k);
            result.cameras[k].intrinsics = cfg.initial_intrinsics;
        }
    });
    const std::size_t n_cameras = result.cameras.size();

    // ---- select: which recordings can calibrate ----------------------------
    std::vector<const Recording*> calib_recs = timer.run("select", [&] {
        std::vector<const Recording*> candidates;
        for (const Recording& rec : calib_only) candidates.push_back(&rec);
        for (const Recording& rec : recordings) candidates.push_back(&rec);

        std::vector<const Recording*> chosen;
        for (const Recording* rec : candidates) {
            // A recording qualifies if both its 2D and 3D streams do.
            SequenceGroup group = rec->views;
            group.insert(group.end(), rec->paired.begin(), rec->paired.end());
            if (!select_calibration_sequences({group}).empty()) chosen.push_back(rec);
        }
        if (chosen.empty())
            throw std::runtime_error("no single-subject equal-length calibration sequences");
        return chosen;
    });

    // ---- intrinsics ---------------------------------------------------------
    json intrinsics_report = json::array();
    timer.run("intrinsics", [&] {
        for (std::size_t k = 0; k < n_cameras; ++k) {
            std::vector<CalibFramePair> pairs;
            for (const Recording* rec : calib_recs) {
                const std::vector<CalibFramePair> all =
                    make_frame_pairs(rec->views[k], rec->paired[k], result.cameras[k].name);
                for (std::size_t t = 0; t < all.size(); ++t)
                    if (!is_eval_position(t, cfg.eval_stride)) pairs.push_back(all[t]);
            }
            auto [fitted, rep] = estimate_intrinsics(pairs, cfg.initial_intrinsics, cfg.lsq);
            result.cameras[k].intrinsics = fitted;
            json entry = report_of(rep);
            entry["camera"] = result.cameras[k].name;
            entry["frames"] = pairs.size();
            intrinsics_report.push_back(std::move(entry));
        }
    });

    // ---- sync: align the calibration streams -------------------------------
    std::vector<std::vector<SkeletonSequence>> synced_calib;
    json sync_report = json::array();
    timer.run("sync", [&] {
        for (const Recording* rec : calib_recs) {
            json lengths = json::array();
            for (const SkeletonSequence& seq : rec->paired) lengths.push_back(seq.frames.size());
            std::vector<SkeletonSequence> synced = synchronize_streams(rec->paired);
            sync_report.push_back(
                {{"input_lengths", lengths}, {"target", synced.front().frames.size()}});
            synced_calib.push_back(std::move(synced));
        }
    });

    // ---- extrinsics: circle prior then joint refinement --------------------
    timer.run("extrinsics-init", [&] {
        const std::vector<Extrinsics> init = initial_extrinsics(rig);
        for (std::size_t k = 0; k < n_cameras; ++k)
            result.cameras[k].extrinsics = init[k];
    });

    json extrinsics_report;
    timer.run("extrinsics", [&] {
        std::vector<SkeletonSequence> pooled(n_cameras);
        std::int64_t next_index = 0;
        for (const std::vector<SkeletonSequence>& synced : synced_calib) {
            const std::size_t frames = synced.front().frames.size();
            for (std::size_t t = 0; t < frames; ++t) {
                if (is_eval_position(t, cfg.eval_stride)) continue;
                for (std::size_t k = 0; k < n_cameras; ++k) {
                    SequenceFrame frame = synced[k].frames[t];
                    frame.time_index = next_index;
                    pooled[k].frames.push_back(std::move(frame));
                }
                ++next_index;
            }
        }
        std::vector<Extrinsics> init;
        for (const CameraParams& cam : result.cameras) init.push_back(cam.extrinsics);
        const ExtrinsicsResult fit =
            estimate_extrinsics(pooled, init, cfg.outliers, cfg.lsq, rig.reference_index);
        for (std::size_t k = 0; k < n_cameras; ++k)
            result.cameras[k].extrinsics = fit.extrinsics[k];
        extrinsics_report = report_of(fit.report);
        extrinsics_report["round_frame_counts"] = fit.round_frame_counts;
        extrinsics_report["reference"] = rig.reference_index;
    });

    // ---- evaluate: held-out reprojection of the calibration recordings -----
    json holdout_report;
    timer.run("evaluate", [&] {
        double sum_sq = 0.0;
        std::size_t pairs = 0;
        for (const Recording* rec : calib_recs) {
            const std::vector<SkeletonSequence> synced = synchronize_streams(rec->views);
            const std::size_t frames = synced.front().frames.size();
            for (std::size_t t = 0; t < frames; ++t) {
                if (!is_eval_position(t, cfg.eval_stride)) continue;
                const auto views = frame_views(synced, t);
                const auto groups = match_persons(views, result.cameras, cfg.triangulation);
                for (const std::vector<int>& group : groups) {
                    std::vector<Skeleton2D> member_views;
                    std::vector<CameraParams> member_cams;
                    for (std::size_t k = 0; k < group.size(); ++k) {
                        if (group[k] < 0) continue;
                        member_views.push_back(views[k][static_cast<std::size_t>(group[k])]);
                        member_cams.push_back(result.cameras[k]);
                    }
                    if (member_views.size() < 2) continue;
                    const Skeleton3D skel =
                        triangulate_skeleton(member_views, member_cams, cfg.triangulation);
                    for (std::size_t k = 0; k < member_views.size(); ++k)
                        for (std::size_t j = 0; j < skel.joints.size(); ++j) {
                            if (skel.joints[j].c <= 0.0 || member_views[k].joints[j].c <= 0.0)
                                continue;
                            const auto pix =
                                try_project(member_cams[k], skel.joints[j].pos());
                            if (!pix) continue;
                            sum_sq += (*pix - member_views[k].joints[j].pixel()).squaredNorm();
                            ++pairs;
                        }
                }
            }
        }
        result.holdout_rmse_px = pairs > 0
                                     ? std::sqrt(sum_sq / static_cast<double>(pairs))
                                     : std::numeric_limits<double>::quiet_NaN();
        holdout_report = {{"stride", cfg.eval_stride},
                          {"pairs", pairs},
                          {"rmse_px", result.holdout_rmse_px}};
    });

    // ---- triangulate + track every recording -------------------------------
    json recordings_report = json::array();
    std::size_t triangulated_joints = 0;
    timer.run("triangulate", [&] {
        for (std::size_t r = 0; r < recordings.size(); ++r) {
            const std::vector<SkeletonSequence> synced =
                synchronize_streams(recordings[r].views);
            const std::size_t frames = synced.front().frames.size();

            std::vector<Track> open_tracks;
            for (std::size_t t = 0; t < frames; ++t) {
                const auto views = frame_views(synced, t);
                const auto groups = match_persons(views, result.cameras, cfg.triangulation);
                std::vector<Skeleton3D> detections;
                for (const std::vector<int>& group : groups) {
                    std::vector<Skeleton2D> member_views;
                    std::vector<CameraParams> member_cams;
                    for (std::size_t k = 0; k < group.size(); ++k) {
                        if (group[k] < 0) continue;
                        member_views.push_back(views[k][static_cast<std::size_t>(group[k])]);
                        member_cams.push_back(result.cameras[k]);
                    }
                    if (member_views.size() < 2) continue;
                    Skeleton3D skel =
                        triangulate_skeleton(member_views, member_cams, cfg.triangulation);
                    const bool any_valid = std::any_of(
                        skel.joints.begin(), skel.joints.end(),
                        [](const Joint3D& joint) { return joint.c > 0.0; });
                    triangulated_joints += skel.joints.size();
                    if (any_valid) detections.push_back(std::move(skel));
                }
                assign_frame(open_tracks, detections, static_cast<std::int64_t>(t), cfg.tracker);
            }
            result.tracks.push_back(finalize_tracks(std::move(open_tracks), cfg.tracker));

            json entry;
            entry["index"] = r;
            entry["frames"] = frames;
            json lengths = json::array();
            for (const Track& track : result.tracks.back()) lengths.push_back(track.length());
            entry["tracks"] = {{"count", result.tracks.back().size()}, {"lengths", lengths}};

            if (truth != nullptr && r == 0) {
                // Synthetic ground truth: mean joint error of output tracks
                // against the nearest true track.
                double err_sum = 0.0;
                std::size_t err_count = 0;
                for (const Track& track : result.tracks.back()) {
                    for (const TrackEntry& e : track.entries) {
                        double best = std::numeric_limits<double>::infinity();
                        for (const Track& truth_track : truth->true_tracks) {
                            if (e.time_index >= static_cast<std::int64_t>(
                                                    truth_track.entries.size()))
                                continue;
                            const Skeleton3D& ts =
                                truth_track.entries[static_cast<std::size_t>(e.time_index)]
                                    .skeleton;
                            const double d = skeleton_distance(e.skeleton, ts);
                            best = std::min(best, d);
                        }
                        if (std::isfinite(best)) {
                            err_sum += best;
                            ++err_count;
                        }
                    }
                }
                entry["truth_mean_error_m"] =
                    err_count > 0 ? err_sum / static_cast<double>(err_count)
                                  : std::numeric_limits<double>::quiet_NaN();
            }
            recordings_report.push_back(std::move(entry));
        }
    });

    // ---- write artifacts ----------------------------------------------------
    timer.run("write", [&] {
        result.calibration_path = out_dir / "calibration.json";
        save_calibration(result.calibration_path, result.cameras);

        for (std::size_t r = 0; r < result.tracks.size(); ++r) {
            const std::filesystem::path path =
                out_dir / ("tracks_" + std::to_string(r) + ".jsonl");
            save_sequence(path, tracks_to_sequence(result.tracks[r]));
            result.track_paths.push_back(path);
        }

        report["mode"] = cfg.synthetic ? "synthetic" : "files";
        if (cfg.synthetic) report["seed"] = cfg.scene.seed;
        report["calibration"] = {{"intrinsics", intrinsics_report},
                                 {"extrinsics", extrinsics_report}};
        report["sync"] = sync_report;
        report["holdout"] = holdout_report;
        report["recordings"] = recordings_report;

        result.report_path = out_dir / "report.json";
        std::ofstream out(result.report_path);
        if (!out) throw std::runtime_error("cannot write " + result.report_path.string());
        out << report.dump(2) << '\n';
    });

    // Wall-clock timings are quarantined in their own artifact so every other
    // output stays bit-reproducible for a fixed config.
    result.timings_path = out_dir / "timings.json";
    {
        json timings;
        json stages;
        double total = 0.0;
        for (const auto& [name, ms] : timer.entries) {
            stages[name] = ms;
            total += ms;
        }
        timings["stages_ms"] = stages;
        timings["total_ms"] = total;
        double triangulate_ms = 0.0;
        for (const auto& [name, ms] : timer.entries)
            if (name == "triangulate") triangulate_ms = ms;
        if (triangulate_ms > 0.0 && triangulated_joints > 0)
            timings["triangulation_joints_per_s"] =
                static_cast<double>(triangulated_joints) / (triangulate_ms / 1000.0);
        std::ofstream out(result.timings_path);
        if (!out) throw std::runtime_error("cannot write " + result.timings_path.string());
        out << timings.dump(2) << '\n';
    }

    return result;
}

}  // namespace mvskel
