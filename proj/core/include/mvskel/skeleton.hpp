#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "mvskel/layout.hpp"

namespace mvskel {

struct Joint2D {
    double u = 0.0;
    double v = 0.0;
    double c = 0.0;  // confidence in [0,1]; 0 marks a missing joint

    Eigen::Vector2d pixel() const { return {u, v}; }
    bool valid() const { return c > 0.0; }
};

struct Joint3D {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double c = 0.0;

    Eigen::Vector3d pos() const { return {x, y, z}; }
    bool valid() const { return c > 0.0; }
};

struct Skeleton2D {
    LayoutPtr layout;
    std::vector<Joint2D> joints;  // size == layout->count()
};

enum class CoordFrame { Camera, World };

struct Skeleton3D {
    LayoutPtr layout;
    std::vector<Joint3D> joints;
    CoordFrame frame = CoordFrame::World;
};

/// Throws std::invalid_argument on joint-count mismatch, confidence outside
/// [0,1], or non-finite coordinates on a joint with confidence > 0.
void validate_skeleton(const Skeleton2D& s);
void validate_skeleton(const Skeleton3D& s);

using PersonSkeleton = std::variant<Skeleton2D, Skeleton3D>;

struct PersonEntry {
    std::optional<int> id;  // stable person/track id, when known
    PersonSkeleton skeleton;

    bool is_3d() const { return std::holds_alternative<Skeleton3D>(skeleton); }
    const Skeleton2D& as_2d() const;
    const Skeleton3D& as_3d() const;
};

struct SequenceFrame {
    int time_index = 0;
    std::vector<PersonEntry> persons;
};

/// Time-ordered frames from one camera / stream.
struct SkeletonSequence {
    std::string source;
    std::vector<SequenceFrame> frames;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
};

/// Reads the JSON-lines skeleton format, one frame per line:
///   {"t": <int>, "persons": [{"id": <int|null>, "layout": "<name>",
///    "dims": 2|3, "joints": [[x,y,(z),c], ...]}]}
/// All persons must use `expected_layout` (count and name are checked).
/// Joints with missing/null values get confidence 0. 3D skeletons are tagged
/// with `frame3d`. Parse and validation errors carry the 1-based line number.
SkeletonSequence load_sequence(const std::filesystem::path& path, const LayoutPtr& expected_layout,
                               CoordFrame frame3d = CoordFrame::World);

void save_sequence(const std::filesystem::path& path, const SkeletonSequence& seq);

}  // namespace mvskel
