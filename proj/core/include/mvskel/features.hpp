#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mvskel/layout.hpp"
#include "mvskel/skeleton.hpp"

namespace mvskel {

enum class Modality { J, B, JM, BM };

const char* to_string(Modality modality);
Modality parse_modality(const std::string& name);

/// frames x joints x channels tensor; 3 channels per concatenated modality.
struct ModalityTensor {
    LayoutPtr layout;
    std::vector<Modality> modalities;
    std::size_t frames = 0;
    std::size_t joints = 0;
    std::vector<double> data;  // row-major [frame][joint][channel]

    std::size_t channels() const { return 3 * modalities.size(); }
    double& at(std::size_t f, std::size_t j, std::size_t c) {
        return data[(f * joints + j) * channels() + c];
    }
    double at(std::size_t f, std::size_t j, std::size_t c) const {
        return data[(f * joints + j) * channels() + c];
    }
};

/// Raw joint coordinates (modality J).
ModalityTensor joint_modality(const std::vector<Skeleton3D>& seq);

/// Bone vectors (modality B): bone[j] = joint[j] - joint[parent(j)], zero for
/// roots. Frame count preserved.
ModalityTensor bone_modality(const std::vector<Skeleton3D>& seq);

/// Temporal forward differences of a single-modality tensor (J -> JM,
/// B -> BM); the final frame is zero so the length is preserved.
ModalityTensor motion_modality(const ModalityTensor& base);

/// Channel-wise concatenation of tensors with equal frame/joint dimensions.
ModalityTensor concat_modalities(const std::vector<ModalityTensor>& parts);

/// The full J+B+JM+BM stack (12 channels).
ModalityTensor all_modalities(const std::vector<Skeleton3D>& seq);

/// One rotation angle uniform in [-rotation_range, rotation_range] about the
/// world z-axis and one scale uniform in scale_range about the sequence
/// centroid, both sampled once per call and applied to every frame.
/// Zero-confidence joints pass through untouched.
std::vector<Skeleton3D> augment(const std::vector<Skeleton3D>& seq, double rotation_range,
                                std::pair<double, double> scale_range, std::mt19937_64& rng);

/// Temporally ordered index selections. Uniform sampling is without
/// replacement when n >= count and with replacement otherwise; window
/// sampling picks a uniform start in [0, n - window_len] (whole range when
/// the window does not fit).
std::vector<std::size_t> sample_uniform_indices(std::size_t n, std::size_t count,
                                                std::mt19937_64& rng);
std::vector<std::size_t> sample_window_indices(std::size_t n, std::size_t window_len,
                                               std::mt19937_64& rng);
std::vector<Skeleton3D> sample_uniform(const std::vector<Skeleton3D>& seq, std::size_t count,
                                       std::mt19937_64& rng);
std::vector<Skeleton3D> sample_window(const std::vector<Skeleton3D>& seq, std::size_t window_len,
                                      std::mt19937_64& rng);

using PredictionDistribution = std::vector<double>;

/// Weighted arithmetic mean of per-class distributions, renormalized to sum
/// to 1. Empty weights means equal weighting.
PredictionDistribution fuse_predictions(const std::vector<PredictionDistribution>& dists,
                                        const std::vector<double>& weights = {});

struct LabeledEmbedding {
    std::vector<double> vector;
    int label = 0;
};

/// Euclidean nearest neighbour; distance ties keep the lowest gallery index.
int nn_classify(const std::vector<double>& query, const std::vector<LabeledEmbedding>& gallery);

/// Majority label among the k nearest (ties at the k-th distance resolved by
/// gallery index); vote ties go to the smaller summed distance, then the
/// lower label id.
int knn_classify(const std::vector<double>& query, const std::vector<LabeledEmbedding>& gallery,
                 int k);

/// Nearest per-class mean embedding; distance ties keep the lower label.
int prototype_classify(const std::vector<double>& query,
                       const std::vector<LabeledEmbedding>& gallery);

struct EvalResult {
    double accuracy = 0.0;
    Eigen::MatrixXd confusion;  // rows = truth (row-normalized where supported)
};

EvalResult evaluate(const std::vector<int>& predicted, const std::vector<int>& truth,
                    int n_classes);
EvalResult evaluate(const std::vector<PredictionDistribution>& predicted,
                    const std::vector<int>& truth, int n_classes);

/// Reference embedding for matching without a learned model: per-joint mean
/// and standard deviation of coordinates plus per-bone mean and standard
/// deviation of length, over valid frames.
std::vector<double> baseline_embedding(const std::vector<Skeleton3D>& seq);

std::vector<LabeledEmbedding> load_gallery(const std::filesystem::path& path);
void save_gallery(const std::filesystem::path& path, const std::vector<LabeledEmbedding>& gallery);

std::vector<PredictionDistribution> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::filesystem::path& path,
                      const std::vector<PredictionDistribution>& predictions);

ModalityTensor load_tensor(const std::filesystem::path& path);
void save_tensor(const std::filesystem::path& path, const ModalityTensor& tensor);

}  // namespace mvskel
