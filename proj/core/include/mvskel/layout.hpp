#pragma once

#include <memory>
#include <string>
#include <vector>

namespace mvskel {

/// Named keypoint set with a parent-edge forest. The five built-in layouts
/// (body=17, wb25=25, wb31=31, wb69=69, wb137=137) are defined structurally:
/// joint semantics are opaque names, only counts, parents and coordinates
/// matter to the algorithms in this toolkit.
struct JointLayout {
    std::string name;
    std::vector<std::string> joint_names;
    std::vector<int> parents;  // -1 marks a root

    std::size_t count() const { return joint_names.size(); }
    bool is_root(std::size_t j) const { return parents[j] < 0; }
};

using LayoutPtr = std::shared_ptr<const JointLayout>;

/// Throws std::invalid_argument if the parent array is not a forest
/// (cycle, out-of-range index, or size mismatch with joint_names).
void validate_layout(const JointLayout& layout);

/// Built-in layouts: "body", "wb25", "wb31", "wb69", "wb137".
/// Instances are cached; repeated calls return the same pointer.
/// Throws std::invalid_argument for unknown names.
LayoutPtr builtin_layout(const std::string& name);

bool is_builtin_layout(const std::string& name);

/// Reads a layout registry file:
///   {"name": "...", "joint_names": [...], "parents": [...]}
/// Roots may be encoded as -1 or null. The result is validated.
LayoutPtr load_layout(const std::string& path);

void save_layout(const std::string& path, const JointLayout& layout);

}  // namespace mvskel
