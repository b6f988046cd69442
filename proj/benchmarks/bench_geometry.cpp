#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mvskel/calibration.hpp"
#include "mvskel/least_squares.hpp"
#include "mvskel/synthetic.hpp"
#include "mvskel/triangulation.hpp"

using namespace mvskel;

namespace {

std::vector<CameraParams> bench_rig() {
    RigConfig rig;
    const auto exts = initial_extrinsics(rig);
    std::vector<CameraParams> cams(exts.size());
    for (std::size_t k = 0; k < exts.size(); ++k) {
        cams[k].intrinsics = default_initial_intrinsics();
        cams[k].intrinsics.dist = {-0.1, 0.02, 5e-4, -5e-4, 1e-3};
        cams[k].extrinsics = exts[k];
    }
    return cams;
}

void BM_ProjectWorldPoint(benchmark::State& state) {
    const auto cams = bench_rig();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Eigen::Vector3d> points;
    for (int i = 0; i < 1024; ++i)
        points.emplace_back(unit(rng), unit(rng), 1.0 + 0.5 * unit(rng));

    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(project_world(cams[i % 3], points[i % points.size()]));
        ++i;
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(BM_ProjectWorldPoint);

void BM_TriangulatePoint(benchmark::State& state) {
    const auto cams = bench_rig();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.5);

    std::vector<std::vector<Observation>> instances;
    for (int i = 0; i < 256; ++i) {
        const Eigen::Vector3d p(unit(rng), unit(rng), 1.0 + 0.5 * unit(rng));
        std::vector<Observation> obs;
        for (const CameraParams& cam : cams) {
            const auto pix = try_project(cam, p);
            obs.push_back({&cam, *pix + Eigen::Vector2d(noise(rng), noise(rng)), 1.0});
        }
        instances.push_back(std::move(obs));
    }

    TriangulateOptions opts;
    opts.refine = state.range(0) != 0;
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(triangulate_point(instances[i % instances.size()], opts));
        ++i;
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(BM_TriangulatePoint)->Arg(0)->Arg(1);

void BM_TriangulateSkeletonFrame(benchmark::State& state) {
    SceneConfig cfg;
    cfg.n_frames = 64;
    cfg.seed = 3;
    const SyntheticScene scene = generate_scene(cfg);

    std::size_t f = 0;
    for (auto _ : state) {
        std::vector<Skeleton2D> views;
        for (int k = 0; k < 3; ++k)
            views.push_back(scene.views[k].frames[f % 64].persons[0].as_2d());
        benchmark::DoNotOptimize(triangulate_skeleton(views, scene.true_cameras));
        ++f;
    }
    const auto joints = static_cast<std::int64_t>(builtin_layout("body")->count());
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * joints);
}
BENCHMARK(BM_TriangulateSkeletonFrame);

void BM_SolveRosenbrock(benchmark::State& state) {
    const ResidualFn rosenbrock = [](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(2);
        r << 10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0];
        return r;
    };
    Eigen::VectorXd start(2);
    start << -1.2, 1.0;
    for (auto _ : state)
        benchmark::DoNotOptimize(solve_least_squares(rosenbrock, start, LsqOptions{}));
}
BENCHMARK(BM_SolveRosenbrock);

void BM_EstimateIntrinsics(benchmark::State& state) {
    SceneConfig cfg;
    cfg.n_frames = static_cast<int>(state.range(0));
    cfg.seed = 4;
    cfg.joint_noise_2d = 1.0;
    const SyntheticScene scene = generate_scene(cfg);
    const auto pairs = make_frame_pairs(scene.views[0], scene.paired_camframe_3d[0], "cam0");

    for (auto _ : state)
        benchmark::DoNotOptimize(estimate_intrinsics(pairs, default_initial_intrinsics()));
}
BENCHMARK(BM_EstimateIntrinsics)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
