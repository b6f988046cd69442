// mvskel: subcommand CLI over the toolkit. Every subcommand exits 0 on
// success and nonzero with a stage-tagged message on stderr otherwise.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvskel/features.hpp"
#include "mvskel/pipeline.hpp"

using namespace mvskel;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
    std::optional<std::string> config;
    std::optional<std::int64_t> seed;
    fs::path out = ".";
    std::string layout = "body";
};

void add_common(CLI::App& app, CommonFlags& flags) {
    app.add_option("--config", flags.config, "JSON config file");
    app.add_option("--seed", flags.seed, "RNG seed override");
    app.add_option("--out", flags.out, "output directory");
    app.add_option("--layout", flags.layout, "joint layout name");
}

fs::path ensure_out_dir(const fs::path& out) {
    fs::create_directories(out);
    return out;
}

std::vector<int> load_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("cannot open " + path.string());
    json doc = json::parse(in);
    if (!doc.is_array()) throw std::runtime_error(path.string() + ": expected a JSON array");
    return doc.get<std::vector<int>>();
}

void save_labels(const fs::path& path, const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out.good()) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << json(labels).dump(2) << "\n";
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonFlags& flags) {
    SceneConfig cfg;
    if (flags.config) cfg = load_scene_config(*flags.config);
    cfg.layout_name = flags.layout;
    if (flags.seed) cfg.seed = static_cast<unsigned long long>(*flags.seed);
    cfg.validate();
    const SyntheticScene scene = generate_scene(cfg);
    write_scene(scene, ensure_out_dir(flags.out));
    std::printf("wrote %d-camera scene (%d frames, %d persons) to %s\n", cfg.n_cameras,
                cfg.n_frames, cfg.n_persons, flags.out.string().c_str());
    return 0;
}

int cmd_calibrate_intrinsics(const CommonFlags& flags, const fs::path& view2d,
                             const fs::path& paired3d, const std::string& camera) {
    const LayoutPtr layout = builtin_layout(flags.layout);
    const SkeletonSequence view = load_sequence(view2d, layout);
    const SkeletonSequence paired = load_sequence(paired3d, layout, CoordFrame::Camera);
    const auto pairs = make_frame_pairs(view, paired, camera);
    const auto [intrinsics, report] = estimate_intrinsics(pairs, default_initial_intrinsics());

    CameraParams cam;
    cam.name = camera;
    cam.intrinsics = intrinsics;
    const fs::path path = ensure_out_dir(flags.out) / "intrinsics.json";
    save_calibration(path, {cam});
    std::printf("%s: fx=%.3f fy=%.3f cx=%.3f cy=%.3f (cost %.3e, %d iterations) -> %s\n",
                camera.c_str(), intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
                report.final_cost, report.iterations, path.string().c_str());
    return 0;
}

int cmd_calibrate_extrinsics(const CommonFlags& flags, const std::vector<fs::path>& streams,
                             double drop_fraction, int rounds) {
    RigConfig rig;
    if (flags.config) {
        std::ifstream in(*flags.config);
        if (!in.good()) throw std::runtime_error("cannot open " + *flags.config);
        const json doc = json::parse(in);
        if (doc.contains("rig")) {
            const json& r = doc["rig"];
            rig.n_cameras = r.value("n_cameras", rig.n_cameras);
            rig.reference_index = r.value("reference_index", rig.reference_index);
            rig.circle_radius = r.value("circle_radius", rig.circle_radius);
            rig.camera_height = r.value("camera_height", rig.camera_height);
            rig.look_at_height = r.value("look_at_height", rig.look_at_height);
            if (r.contains("angles")) rig.angles = r["angles"].get<std::vector<double>>();
        }
    }
    rig.n_cameras = static_cast<int>(streams.size());
    rig.validate();

    const LayoutPtr layout = builtin_layout(flags.layout);
    std::vector<SkeletonSequence> sequences;
    for (const fs::path& path : streams)
        sequences.push_back(load_sequence(path, layout, CoordFrame::Camera));
    const auto synced = synchronize_streams(sequences);

    const OutlierSchedule schedule{drop_fraction, rounds};
    schedule.validate();
    const ExtrinsicsResult result = estimate_extrinsics(synced, initial_extrinsics(rig),
                                                        schedule, LsqOptions{},
                                                        rig.reference_index);
    std::vector<CameraParams> cams(streams.size());
    for (std::size_t k = 0; k < streams.size(); ++k) {
        cams[k].name = "cam" + std::to_string(k);
        cams[k].intrinsics = default_initial_intrinsics();
        cams[k].extrinsics = result.extrinsics[k];
    }
    const fs::path path = ensure_out_dir(flags.out) / "extrinsics.json";
    save_calibration(path, cams);
    std::printf("fitted %zu cameras (final cost %.3e", streams.size(), result.report.final_cost);
    for (std::size_t r = 0; r < result.round_frame_counts.size(); ++r)
        std::printf(", round %zu on %d frames", r + 1, result.round_frame_counts[r]);
    std::printf(") -> %s\n", path.string().c_str());
    return 0;
}

int cmd_sync(const CommonFlags& flags, const std::vector<fs::path>& streams) {
    const LayoutPtr layout = builtin_layout(flags.layout);
    std::vector<SkeletonSequence> sequences;
    for (const fs::path& path : streams) sequences.push_back(load_sequence(path, layout));
    const auto synced = synchronize_streams(sequences);
    const fs::path out = ensure_out_dir(flags.out);
    for (std::size_t s = 0; s < synced.size(); ++s)
        save_sequence(out / ("synced_" + std::to_string(s) + ".jsonl"), synced[s]);
    std::printf("resampled %zu streams to %zu frames -> %s\n", synced.size(),
                synced.front().frames.size(), out.string().c_str());
    return 0;
}

int cmd_triangulate(const CommonFlags& flags, const fs::path& calibration,
                    const std::vector<fs::path>& views, double min_confidence, bool refine) {
    const std::vector<CameraParams> cams = load_calibration(calibration);
    if (cams.size() != views.size())
        throw std::runtime_error("calibration has " + std::to_string(cams.size()) +
                                 " cameras but " + std::to_string(views.size()) +
                                 " views were given");
    const LayoutPtr layout = builtin_layout(flags.layout);
    std::vector<SkeletonSequence> sequences;
    for (const fs::path& path : views) sequences.push_back(load_sequence(path, layout));
    for (const SkeletonSequence& seq : sequences)
        if (seq.frames.size() != sequences.front().frames.size())
            throw std::runtime_error("view streams must have equal frame counts");

    TriangulateOptions opts;
    opts.min_confidence = min_confidence;
    opts.refine = refine;
    opts.validate();

    SkeletonSequence result;
    result.source = "triangulated";
    for (std::size_t f = 0; f < sequences.front().frames.size(); ++f) {
        std::vector<std::vector<Skeleton2D>> frame_views(cams.size());
        for (std::size_t k = 0; k < cams.size(); ++k)
            for (const PersonEntry& person : sequences[k].frames[f].persons)
                frame_views[k].push_back(person.as_2d());
        SequenceFrame frame;
        frame.time_index = sequences.front().frames[f].time_index;
        for (const std::vector<int>& group : match_persons(frame_views, cams, opts)) {
            std::vector<Skeleton2D> member_views;
            std::vector<CameraParams> member_cams;
            for (std::size_t k = 0; k < cams.size(); ++k)
                if (group[k] >= 0) {
                    member_views.push_back(frame_views[k][group[k]]);
                    member_cams.push_back(cams[k]);
                }
            Skeleton3D det = triangulate_skeleton(member_views, member_cams, opts);
            bool any = false;
            for (const Joint3D& j : det.joints) any = any || j.valid();
            if (any) frame.persons.push_back({std::nullopt, std::move(det)});
        }
        result.frames.push_back(std::move(frame));
    }
    const fs::path path = ensure_out_dir(flags.out) / "triangulated.jsonl";
    save_sequence(path, result);
    std::printf("triangulated %zu frames -> %s\n", result.frames.size(), path.string().c_str());
    return 0;
}

int cmd_track(const CommonFlags& flags, const fs::path& input, const TrackerConfig& tracker) {
    tracker.validate();
    const LayoutPtr layout = builtin_layout(flags.layout);
    const SkeletonSequence seq = load_sequence(input, layout, CoordFrame::World);
    std::vector<std::int64_t> times;
    std::vector<std::vector<Skeleton3D>> detections;
    for (const SequenceFrame& frame : seq.frames) {
        times.push_back(frame.time_index);
        std::vector<Skeleton3D> dets;
        for (const PersonEntry& person : frame.persons) dets.push_back(person.as_3d());
        detections.push_back(std::move(dets));
    }
    const std::vector<Track> tracks = track_sequence(times, detections, tracker);
    const fs::path path = ensure_out_dir(flags.out) / "tracks.jsonl";
    save_sequence(path, tracks_to_sequence(tracks));
    std::printf("%zu tracks", tracks.size());
    for (const Track& track : tracks) std::printf(" (id %d, %zu frames)", track.id, track.length());
    std::printf(" -> %s\n", path.string().c_str());
    return 0;
}

int cmd_features(const CommonFlags& flags, const fs::path& input,
                 const std::string& modalities) {
    const LayoutPtr layout = builtin_layout(flags.layout);
    const SkeletonSequence seq = load_sequence(input, layout, CoordFrame::World);
    std::vector<Skeleton3D> frames;
    for (const SequenceFrame& frame : seq.frames) {
        if (frame.persons.size() != 1)
            throw std::runtime_error("features expects exactly one person per frame (frame " +
                                     std::to_string(frame.time_index) + " has " +
                                     std::to_string(frame.persons.size()) + ")");
        frames.push_back(frame.persons[0].as_3d());
    }

    std::vector<ModalityTensor> parts;
    std::stringstream names(modalities);
    for (std::string name; std::getline(names, name, ',');) {
        switch (parse_modality(name)) {
            case Modality::J: parts.push_back(joint_modality(frames)); break;
            case Modality::B: parts.push_back(bone_modality(frames)); break;
            case Modality::JM: parts.push_back(motion_modality(joint_modality(frames))); break;
            case Modality::BM: parts.push_back(motion_modality(bone_modality(frames))); break;
        }
    }
    if (parts.empty()) throw std::runtime_error("no modalities requested");
    const ModalityTensor tensor = parts.size() == 1 ? parts[0] : concat_modalities(parts);
    const fs::path path = ensure_out_dir(flags.out) / "features.json";
    save_tensor(path, tensor);
    std::printf("%zu frames x %zu joints x %zu channels -> %s\n", tensor.frames, tensor.joints,
                tensor.channels(), path.string().c_str());
    return 0;
}

int cmd_fewshot(const CommonFlags& flags, const fs::path& gallery_path,
                const fs::path& query_path, const std::string& method, int k) {
    const std::vector<LabeledEmbedding> gallery = load_gallery(gallery_path);
    const std::vector<LabeledEmbedding> queries = load_gallery(query_path);

    std::vector<int> predicted;
    for (const LabeledEmbedding& query : queries) {
        if (method == "nn") predicted.push_back(nn_classify(query.vector, gallery));
        else if (method == "knn") predicted.push_back(knn_classify(query.vector, gallery, k));
        else if (method == "prototype") predicted.push_back(prototype_classify(query.vector, gallery));
        else throw std::runtime_error("unknown method '" + method + "' (nn, knn, prototype)");
    }

    const fs::path path = ensure_out_dir(flags.out) / "predictions.json";
    save_labels(path, predicted);

    bool labelled = !queries.empty();
    int max_label = 0;
    for (const LabeledEmbedding& q : queries) {
        labelled = labelled && q.label >= 0;
        max_label = std::max(max_label, q.label);
    }
    for (int p : predicted) max_label = std::max(max_label, p);
    if (labelled) {
        std::vector<int> truth;
        for (const LabeledEmbedding& q : queries) truth.push_back(q.label);
        const EvalResult eval = evaluate(predicted, truth, max_label + 1);
        std::printf("%zu queries, accuracy %.4f -> %s\n", queries.size(), eval.accuracy,
                    path.string().c_str());
    } else {
        std::printf("%zu queries -> %s\n", queries.size(), path.string().c_str());
    }
    return 0;
}

int cmd_evaluate(const CommonFlags& flags, const fs::path& predicted_path,
                 const fs::path& truth_path, int n_classes) {
    const std::vector<int> predicted = load_labels(predicted_path);
    const std::vector<int> truth = load_labels(truth_path);
    if (n_classes <= 0) {
        for (int v : predicted) n_classes = std::max(n_classes, v + 1);
        for (int v : truth) n_classes = std::max(n_classes, v + 1);
    }
    const EvalResult result = evaluate(predicted, truth, n_classes);
    std::printf("accuracy %.6f over %zu samples, %d classes\n", result.accuracy, truth.size(),
                n_classes);

    json confusion = json::array();
    for (int i = 0; i < result.confusion.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < result.confusion.cols(); ++j) row.push_back(result.confusion(i, j));
        confusion.push_back(row);
    }
    const json doc = {{"accuracy", result.accuracy}, {"confusion", confusion}};
    const fs::path path = ensure_out_dir(flags.out) / "evaluation.json";
    std::ofstream out(path);
    if (!out.good()) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << "\n";
    std::printf("-> %s\n", path.string().c_str());
    return 0;
}

int cmd_pipeline(const CommonFlags& flags) {
    PipelineConfig cfg;
    if (flags.config) cfg = load_pipeline_config(*flags.config);
    if (flags.seed) cfg.scene.seed = static_cast<unsigned long long>(*flags.seed);
    const PipelineResult result = run_pipeline(cfg, ensure_out_dir(flags.out));
    std::printf("calibrated %zu cameras, held-out reprojection RMSE %.4f px\n",
                result.cameras.size(), result.holdout_rmse_px);
    std::printf("artifacts: %s, %s, %s", result.calibration_path.string().c_str(),
                result.report_path.string().c_str(), result.timings_path.string().c_str());
    for (const fs::path& p : result.track_paths) std::printf(", %s", p.string().c_str());
    std::printf("\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-view skeleton calibration, triangulation, tracking, and matching"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* synth = app.add_subcommand("synth", "generate a synthetic scene to disk");
    add_common(*synth, flags);

    auto* cal_intr = app.add_subcommand("calibrate-intrinsics", "fit one camera's intrinsics");
    add_common(*cal_intr, flags);
    fs::path view2d, paired3d;
    std::string camera_name = "cam0";
    cal_intr->add_option("--view2d", view2d, "2D detections (jsonl)")->required();
    cal_intr->add_option("--paired3d", paired3d, "paired camera-frame 3D stream (jsonl)")
        ->required();
    cal_intr->add_option("--camera", camera_name, "camera name for the output");

    auto* cal_ext = app.add_subcommand("calibrate-extrinsics", "fit rig extrinsics jointly");
    add_common(*cal_ext, flags);
    std::vector<fs::path> ext_streams;
    double drop_fraction = 0.0;
    int rounds = 1;
    cal_ext->add_option("--stream", ext_streams, "camera-frame 3D stream per camera (jsonl)")
        ->required()
        ->expected(-2);
    cal_ext->add_option("--drop-fraction", drop_fraction, "outlier frames dropped per round");
    cal_ext->add_option("--rounds", rounds, "optimization rounds");

    auto* sync = app.add_subcommand("sync", "resample streams to a common length");
    add_common(*sync, flags);
    std::vector<fs::path> sync_streams;
    sync->add_option("--stream", sync_streams, "input stream (jsonl)")->required()->expected(-1);

    auto* tri = app.add_subcommand("triangulate", "match and triangulate multi-view detections");
    add_common(*tri, flags);
    fs::path calibration;
    std::vector<fs::path> tri_views;
    double min_confidence = 0.1;
    bool refine = false;
    tri->add_option("--calibration", calibration, "calibration.json")->required();
    tri->add_option("--view", tri_views, "2D detections per camera, calibration order (jsonl)")
        ->required()
        ->expected(-2);
    tri->add_option("--min-confidence", min_confidence, "observation confidence floor");
    tri->add_flag("--refine", refine, "Gauss-Newton polish after DLT");

    auto* track = app.add_subcommand("track", "assemble per-person tracks from 3D frames");
    add_common(*track, flags);
    fs::path track_input;
    TrackerConfig tracker;
    track->add_option("--input", track_input, "world-frame 3D sequence (jsonl)")->required();
    track->add_option("--distance-threshold", tracker.distance_threshold, "match radius (m)");
    track->add_option("--min-track-length", tracker.min_track_length, "shorter tracks dropped");
    track->add_option("--max-persons", tracker.max_persons, "tracks kept after finalize");
    track->add_option("--max-gap", tracker.max_gap, "frames a track survives unobserved");

    auto* feats = app.add_subcommand("features", "emit modality tensors for one track");
    add_common(*feats, flags);
    fs::path feat_input;
    std::string modalities = "j,b,jm,bm";
    feats->add_option("--input", feat_input, "world-frame 3D sequence (jsonl)")->required();
    feats->add_option("--modalities", modalities, "comma list of j,b,jm,bm");

    auto* fewshot = app.add_subcommand("fewshot", "classify query embeddings against a gallery");
    add_common(*fewshot, flags);
    fs::path gallery_path, query_path;
    std::string method = "nn";
    int k = 5;
    fewshot->add_option("--gallery", gallery_path, "labelled gallery (json)")->required();
    fewshot->add_option("--queries", query_path, "query embeddings (json)")->required();
    fewshot->add_option("--method", method, "nn, knn, or prototype");
    fewshot->add_option("--k", k, "neighbours for knn");

    auto* eval = app.add_subcommand("evaluate", "accuracy and confusion matrix");
    add_common(*eval, flags);
    fs::path predicted_path, truth_path;
    int n_classes = 0;
    eval->add_option("--predicted", predicted_path, "predicted labels (json array)")->required();
    eval->add_option("--truth", truth_path, "true labels (json array)")->required();
    eval->add_option("--classes", n_classes, "class count (default: inferred)");

    auto* pipe = app.add_subcommand("pipeline", "full calibration-to-tracks run");
    add_common(*pipe, flags);

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (synth->parsed()) return cmd_synth(flags);
        if (cal_intr->parsed()) return cmd_calibrate_intrinsics(flags, view2d, paired3d, camera_name);
        if (cal_ext->parsed()) return cmd_calibrate_extrinsics(flags, ext_streams, drop_fraction, rounds);
        if (sync->parsed()) return cmd_sync(flags, sync_streams);
        if (tri->parsed()) return cmd_triangulate(flags, calibration, tri_views, min_confidence, refine);
        if (track->parsed()) return cmd_track(flags, track_input, tracker);
        if (feats->parsed()) return cmd_features(flags, feat_input, modalities);
        if (fewshot->parsed()) return cmd_fewshot(flags, gallery_path, query_path, method, k);
        if (eval->parsed()) return cmd_evaluate(flags, predicted_path, truth_path, n_classes);
        if (pipe->parsed()) return cmd_pipeline(flags);
    } catch (const PipelineError& e) {
        std::cerr << "mvskel " << name << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "mvskel " << name << ": [" << name << "] " << e.what() << "\n";
        return 1;
    }
    return 0;
}
