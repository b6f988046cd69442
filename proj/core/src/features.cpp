#include "mvskel/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mvskel {

using nlohmann::json;

const char* to_string(Modality modality) {
    switch (modality) {
        case Modality::J: return "J";
        case Modality::B: return "B";
        case Modality::JM: return "JM";
        case Modality::BM: return "BM";
    }
    return "?";
}

Modality parse_modality(const std::string& name) {
    if (name == "J" || name == "j") return Modality::J;
    if (name == "B" || name == "b") return Modality::B;
    if (name == "JM" || name == "jm") return Modality::JM;
    if (name == "BM" || name == "bm") return Modality::BM;
    throw std::invalid_argument("unknown modality: " + name);
}

namespace {

const LayoutPtr& sequence_layout(const std::vector<Skeleton3D>& seq, const char* op) {
    if (seq.empty()) throw std::invalid_argument(std::string(op) + ": empty sequence");
    const LayoutPtr& layout = seq.front().layout;
    if (!layout) throw std::invalid_argument(std::string(op) + ": missing layout");
    for (const Skeleton3D& skel : seq)
        if (!skel.layout || skel.layout->name != layout->name ||
            skel.joints.size() != layout->count())
            throw std::invalid_argument(std::string(op) + ": inconsistent layouts");
    return layout;
}

ModalityTensor empty_like(const LayoutPtr& layout, std::size_t frames, Modality tag) {
    ModalityTensor tensor;
    tensor.layout = layout;
    tensor.modalities = {tag};
    tensor.frames = frames;
    tensor.joints = layout->count();
    tensor.data.assign(frames * tensor.joints * 3, 0.0);
    return tensor;
}

}  // namespace

ModalityTensor joint_modality(const std::vector<Skeleton3D>& seq) {
    const LayoutPtr& layout = sequence_layout(seq, "joint_modality");
    ModalityTensor tensor = empty_like(layout, seq.size(), Modality::J);
    for (std::size_t f = 0; f < seq.size(); ++f)
        for (std::size_t j = 0; j < tensor.joints; ++j) {
            tensor.at(f, j, 0) = seq[f].joints[j].x;
            tensor.at(f, j, 1) = seq[f].joints[j].y;
            tensor.at(f, j, 2) = seq[f].joints[j].z;
        }
    return tensor;
}

ModalityTensor bone_modality(const std::vector<Skeleton3D>& seq) {
    const LayoutPtr& layout = sequence_layout(seq, "bone_modality");
    ModalityTensor tensor = empty_like(layout, seq.size(), Modality::B);
    for (std::size_t f = 0; f < seq.size(); ++f)
        for (std::size_t j = 0; j < tensor.joints; ++j) {
            if (layout->is_root(j)) continue;  // roots stay zero
            const Joint3D& child = seq[f].joints[j];
            const Joint3D& parent = seq[f].joints[static_cast<std::size_t>(layout->parents[j])];
            tensor.at(f, j, 0) = child.x - parent.x;
            tensor.at(f, j, 1) = child.y - parent.y;
            tensor.at(f, j, 2) = child.z - parent.z;
        }
    return tensor;
}

ModalityTensor motion_modality(const ModalityTensor& base) {
    if (base.modalities.size() != 1 ||
        (base.modalities[0] != Modality::J && base.modalities[0] != Modality::B))
        throw std::invalid_argument("motion_modality: input must be a single J or B tensor");
    if (base.frames == 0) throw std::invalid_argument("motion_modality: empty sequence");
    ModalityTensor tensor = base;
    tensor.modalities = {base.modalities[0] == Modality::J ? Modality::JM : Modality::BM};
    for (std::size_t f = 0; f < base.frames; ++f)
        for (std::size_t j = 0; j < base.joints; ++j)
            for (std::size_t c = 0; c < 3; ++c)
                tensor.at(f, j, c) = (f + 1 < base.frames)
                                         ? base.at(f + 1, j, c) - base.at(f, j, c)
                                         : 0.0;
    return tensor;
}

ModalityTensor concat_modalities(const std::vector<ModalityTensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_modalities: no tensors");
    const ModalityTensor& first = parts.front();
    ModalityTensor out;
    out.layout = first.layout;
    out.frames = first.frames;
    out.joints = first.joints;
    for (const ModalityTensor& part : parts) {
        if (part.frames != first.frames || part.joints != first.joints)
            throw std::invalid_argument("concat_modalities: dimension mismatch");
        out.modalities.insert(out.modalities.end(), part.modalities.begin(),
                              part.modalities.end());
    }
    out.data.resize(out.frames * out.joints * out.channels());
    for (std::size_t f = 0; f < out.frames; ++f)
        for (std::size_t j = 0; j < out.joints; ++j) {
            std::size_t c_out = 0;
            for (const ModalityTensor& part : parts)
                for (std::size_t c = 0; c < part.channels(); ++c)
                    out.at(f, j, c_out++) = part.at(f, j, c);
        }
    return out;
}

ModalityTensor all_modalities(const std::vector<Skeleton3D>& seq) {
    const ModalityTensor j = joint_modality(seq);
    const ModalityTensor b = bone_modality(seq);
    return concat_modalities({j, b, motion_modality(j), motion_modality(b)});
}

std::vector<Skeleton3D> augment(const std::vector<Skeleton3D>& seq, double rotation_range,
                                std::pair<double, double> scale_range, std::mt19937_64& rng) {
    if (rotation_range < 0.0) throw std::invalid_argument("augment: negative rotation_range");
    if (!(scale_range.first > 0.0) || scale_range.second < scale_range.first)
        throw std::invalid_argument("augment: invalid scale_range");
    if (seq.empty()) return {};
    sequence_layout(seq, "augment");

    std::uniform_real_distribution<double> angle_draw(-rotation_range, rotation_range);
    std::uniform_real_distribution<double> scale_draw(scale_range.first, scale_range.second);
    const double angle = rotation_range > 0.0 ? angle_draw(rng) : 0.0;
    const double scale = scale_range.second > scale_range.first ? scale_draw(rng)
                                                                : scale_range.first;

    std::vector<Skeleton3D> out = seq;
    if (angle != 0.0) {
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for (Skeleton3D& skel : out)
            for (Joint3D& joint : skel.joints) {
                if (joint.c <= 0.0) continue;
                const double x = c * joint.x - s * joint.y;
                const double y = s * joint.x + c * joint.y;
                joint.x = x;
                joint.y = y;
            }
    }
    if (scale != 1.0) {
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        std::size_t count = 0;
        for (const Skeleton3D& skel : out)
            for (const Joint3D& joint : skel.joints) {
                if (joint.c <= 0.0) continue;
                centroid += joint.pos();
                ++count;
            }
        if (count > 0) {
            centroid /= static_cast<double>(count);
            for (Skeleton3D& skel : out)
                for (Joint3D& joint : skel.joints) {
                    if (joint.c <= 0.0) continue;
                    const Eigen::Vector3d p = centroid + scale * (joint.pos() - centroid);
                    joint.x = p.x();
                    joint.y = p.y();
                    joint.z = p.z();
                }
        }
    }
    return out;
}

std::vector<std::size_t> sample_uniform_indices(std::size_t n, std::size_t count,
                                                std::mt19937_64& rng) {
    if (n == 0) throw std::invalid_argument("sample_uniform_indices: empty sequence");
    if (count == 0) throw std::invalid_argument("sample_uniform_indices: count == 0");
    std::vector<std::size_t> out;
    out.reserve(count);
    if (n >= count) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
    } else {
        std::uniform_int_distribution<std::size_t> draw(0, n - 1);
        for (std::size_t i = 0; i < count; ++i) out.push_back(draw(rng));
        std::sort(out.begin(), out.end());
    }
    return out;
}

std::vector<std::size_t> sample_window_indices(std::size_t n, std::size_t window_len,
                                               std::mt19937_64& rng) {
    if (n == 0) throw std::invalid_argument("sample_window_indices: empty sequence");
    if (window_len == 0) throw std::invalid_argument("sample_window_indices: window_len == 0");
    const std::size_t len = std::min(window_len, n);
    std::uniform_int_distribution<std::size_t> draw(0, n - len);
    const std::size_t start = n == len ? 0 : draw(rng);
    std::vector<std::size_t> out(len);
    std::iota(out.begin(), out.end(), start);
    return out;
}

namespace {

std::vector<Skeleton3D> apply_indices(const std::vector<Skeleton3D>& seq,
                                      const std::vector<std::size_t>& indices) {
    std::vector<Skeleton3D> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(seq[i]);
    return out;
}

}  // namespace

std::vector<Skeleton3D> sample_uniform(const std::vector<Skeleton3D>& seq, std::size_t count,
                                       std::mt19937_64& rng) {
    return apply_indices(seq, sample_uniform_indices(seq.size(), count, rng));
}

std::vector<Skeleton3D> sample_window(const std::vector<Skeleton3D>& seq, std::size_t window_len,
                                      std::mt19937_64& rng) {
    return apply_indices(seq, sample_window_indices(seq.size(), window_len, rng));
}

PredictionDistribution fuse_predictions(const std::vector<PredictionDistribution>& dists,
                                        const std::vector<double>& weights) {
    if (dists.empty()) throw std::invalid_argument("fuse_predictions: no distributions");
    const std::size_t n_classes = dists.front().size();
    if (n_classes == 0) throw std::invalid_argument("fuse_predictions: empty distribution");
    if (!weights.empty() && weights.size() != dists.size())
        throw std::invalid_argument("fuse_predictions: weights size mismatch");

    double total_weight = 0.0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
        if (dists[i].size() != n_classes)
            throw std::invalid_argument("fuse_predictions: class count mismatch");
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0.0) throw std::invalid_argument("fuse_predictions: negative weight");
        total_weight += w;
    }
    if (total_weight <= 0.0) throw std::invalid_argument("fuse_predictions: zero total weight");

    PredictionDistribution fused(n_classes, 0.0);
    for (std::size_t i = 0; i < dists.size(); ++i) {
        const double w = (weights.empty() ? 1.0 : weights[i]) / total_weight;
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (dists[i][c] < 0.0)
                throw std::invalid_argument("fuse_predictions: negative probability");
            fused[c] += w * dists[i][c];
        }
    }
    const double mass = std::accumulate(fused.begin(), fused.end(), 0.0);
    if (mass <= 0.0) throw std::invalid_argument("fuse_predictions: zero probability mass");
    for (double& p : fused) p /= mass;
    return fused;
}

namespace {

double sq_distance(const std::vector<double>& a, const std::vector<double>& b, const char* op) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": dimension mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

}  // namespace

int nn_classify(const std::vector<double>& query, const std::vector<LabeledEmbedding>& gallery) {
    if (gallery.empty()) throw std::invalid_argument("nn_classify: empty gallery");
    double best = std::numeric_limits<double>::infinity();
    int label = gallery.front().label;
    for (const LabeledEmbedding& entry : gallery) {
        const double d = sq_distance(query, entry.vector, "nn_classify");
        if (d < best) {
            best = d;
            label = entry.label;
        }
    }
    return label;
}

int knn_classify(const std::vector<double>& query, const std::vector<LabeledEmbedding>& gallery,
                 int k) {
    if (k < 1) throw std::invalid_argument("knn_classify: k < 1");
    if (gallery.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("knn_classify: gallery smaller than k");

    std::vector<std::pair<double, std::size_t>> ranked;  // (squared distance, index)
    ranked.reserve(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i)
        ranked.emplace_back(sq_distance(query, gallery[i].vector, "knn_classify"), i);
    std::sort(ranked.begin(), ranked.end());

    struct Vote {
        int count = 0;
        double sum_distance = 0.0;
    };
    std::map<int, Vote> votes;
    for (int i = 0; i < k; ++i) {
        Vote& vote = votes[gallery[ranked[static_cast<std::size_t>(i)].second].label];
        ++vote.count;
        vote.sum_distance += std::sqrt(ranked[static_cast<std::size_t>(i)].first);
    }
    int best_label = votes.begin()->first;
    Vote best = votes.begin()->second;
    for (const auto& [label, vote] : votes) {
        const bool wins = vote.count > best.count ||
                          (vote.count == best.count && vote.sum_distance < best.sum_distance);
        if (wins) {
            best_label = label;
            best = vote;
        }
    }
    return best_label;
}

int prototype_classify(const std::vector<double>& query,
                       const std::vector<LabeledEmbedding>& gallery) {
    if (gallery.empty()) throw std::invalid_argument("prototype_classify: empty gallery");
    std::map<int, std::pair<std::vector<double>, int>> sums;  // label -> (sum, count)
    for (const LabeledEmbedding& entry : gallery) {
        auto [it, inserted] =
            sums.try_emplace(entry.label, std::vector<double>(entry.vector.size(), 0.0), 0);
        if (it->second.first.size() != entry.vector.size())
            throw std::invalid_argument("prototype_classify: dimension mismatch");
        for (std::size_t i = 0; i < entry.vector.size(); ++i)
            it->second.first[i] += entry.vector[i];
        ++it->second.second;
    }
    double best = std::numeric_limits<double>::infinity();
    int best_label = sums.begin()->first;
    for (auto& [label, acc] : sums) {
        std::vector<double>& prototype = acc.first;
        for (double& v : prototype) v /= acc.second;
        const double d = sq_distance(query, prototype, "prototype_classify");
        if (d < best) {
            best = d;
            best_label = label;
        }
    }
    return best_label;
}

EvalResult evaluate(const std::vector<int>& predicted, const std::vector<int>& truth,
                    int n_classes) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("evaluate: prediction/truth length mismatch");
    if (n_classes < 1) throw std::invalid_argument("evaluate: n_classes < 1");
    EvalResult result;
    result.confusion = Eigen::MatrixXd::Zero(n_classes, n_classes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= n_classes || predicted[i] < 0 ||
            predicted[i] >= n_classes)
            throw std::invalid_argument("evaluate: label out of range");
        result.confusion(truth[i], predicted[i]) += 1.0;
        if (predicted[i] == truth[i]) ++correct;
    }
    for (int r = 0; r < n_classes; ++r) {
        const double support = result.confusion.row(r).sum();
        if (support > 0.0) result.confusion.row(r) /= support;
    }
    result.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / truth.size();
    return result;
}

EvalResult evaluate(const std::vector<PredictionDistribution>& predicted,
                    const std::vector<int>& truth, int n_classes) {
    std::vector<int> labels;
    labels.reserve(predicted.size());
    for (const PredictionDistribution& dist : predicted) {
        if (dist.empty()) throw std::invalid_argument("evaluate: empty distribution");
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < dist.size(); ++c)
            if (dist[c] > dist[argmax]) argmax = c;
        labels.push_back(static_cast<int>(argmax));
    }
    return evaluate(labels, truth, n_classes);
}

std::vector<double> baseline_embedding(const std::vector<Skeleton3D>& seq) {
    const LayoutPtr& layout = sequence_layout(seq, "baseline_embedding");
    const std::size_t n = layout->count();
    std::vector<double> out;
    out.reserve(8 * n);

    // Per-joint coordinate statistics over valid frames.
    for (std::size_t j = 0; j < n; ++j) {
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        Eigen::Vector3d sq = Eigen::Vector3d::Zero();
        std::size_t count = 0;
        for (const Skeleton3D& skel : seq) {
            if (skel.joints[j].c <= 0.0) continue;
            const Eigen::Vector3d p = skel.joints[j].pos();
            mean += p;
            sq += p.cwiseProduct(p);
            ++count;
        }
        if (count > 0) {
            mean /= static_cast<double>(count);
            sq = (sq / static_cast<double>(count) - mean.cwiseProduct(mean)).cwiseMax(0.0);
        }
        for (int c = 0; c < 3; ++c) out.push_back(mean[c]);
        for (int c = 0; c < 3; ++c) out.push_back(std::sqrt(sq[c]));
    }

    // Per-bone length statistics (roots contribute zeros).
    for (std::size_t j = 0; j < n; ++j) {
        double mean = 0.0;
        double sq = 0.0;
        std::size_t count = 0;
        if (!layout->is_root(j)) {
            const std::size_t parent = static_cast<std::size_t>(layout->parents[j]);
            for (const Skeleton3D& skel : seq) {
                if (skel.joints[j].c <= 0.0 || skel.joints[parent].c <= 0.0) continue;
                const double len = (skel.joints[j].pos() - skel.joints[parent].pos()).norm();
                mean += len;
                sq += len * len;
                ++count;
            }
        }
        if (count > 0) {
            mean /= static_cast<double>(count);
            sq = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
        }
        out.push_back(mean);
        out.push_back(std::sqrt(sq));
    }
    return out;
}

std::vector<LabeledEmbedding> load_gallery(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open gallery file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid gallery JSON in " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw std::runtime_error("gallery file must hold a JSON array");
    std::vector<LabeledEmbedding> gallery;
    gallery.reserve(doc.size());
    std::size_t dims = 0;
    for (const json& item : doc) {
        LabeledEmbedding entry;
        entry.label = item.at("label").get<int>();
        entry.vector = item.at("vector").get<std::vector<double>>();
        for (double v : entry.vector)
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite embedding in " + path.string());
        if (gallery.empty())
            dims = entry.vector.size();
        else if (entry.vector.size() != dims)
            throw std::runtime_error("inconsistent embedding dimensions in " + path.string());
        gallery.push_back(std::move(entry));
    }
    return gallery;
}

void save_gallery(const std::filesystem::path& path,
                  const std::vector<LabeledEmbedding>& gallery) {
    json doc = json::array();
    for (const LabeledEmbedding& entry : gallery)
        doc.push_back({{"label", entry.label}, {"vector", entry.vector}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write gallery file: " + path.string());
    out << doc.dump() << '\n';
}

std::vector<PredictionDistribution> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open predictions file: " + path.string());
    std::vector<PredictionDistribution> predictions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("invalid prediction JSON at " + path.string() + ":" +
                                     std::to_string(line_no) + ": " + e.what());
        }
        if (!row.is_array())
            throw std::runtime_error("prediction line must be an array at " + path.string() + ":" +
                                     std::to_string(line_no));
        predictions.push_back(row.get<PredictionDistribution>());
    }
    return predictions;
}

void save_predictions(const std::filesystem::path& path,
                      const std::vector<PredictionDistribution>& predictions) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write predictions file: " + path.string());
    for (const PredictionDistribution& dist : predictions) out << json(dist).dump() << '\n';
}

ModalityTensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tensor file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid tensor JSON in " + path.string() + ": " + e.what());
    }
    ModalityTensor tensor;
    tensor.layout = builtin_layout(doc.at("layout").get<std::string>());
    for (const json& m : doc.at("modalities"))
        tensor.modalities.push_back(parse_modality(m.get<std::string>()));
    tensor.frames = doc.at("frames").get<std::size_t>();
    tensor.joints = doc.at("joints").get<std::size_t>();
    tensor.data = doc.at("data").get<std::vector<double>>();
    if (tensor.joints != tensor.layout->count())
        throw std::runtime_error("tensor joint count does not match layout in " + path.string());
    if (tensor.data.size() != tensor.frames * tensor.joints * tensor.channels())
        throw std::runtime_error("tensor data size mismatch in " + path.string());
    return tensor;
}

void save_tensor(const std::filesystem::path& path, const ModalityTensor& tensor) {
    json doc;
    doc["layout"] = tensor.layout ? tensor.layout->name : "";
    doc["modalities"] = json::array();
    for (Modality m : tensor.modalities) doc["modalities"].push_back(to_string(m));
    doc["frames"] = tensor.frames;
    doc["joints"] = tensor.joints;
    doc["channels"] = tensor.channels();
    doc["data"] = tensor.data;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write tensor file: " + path.string());
    out << doc.dump() << '\n';
}

}  // namespace mvskel
