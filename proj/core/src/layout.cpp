#include "mvskel/layout.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

#include <json.hpp>

namespace mvskel {

using nlohmann::json;

void validate_layout(const JointLayout& layout) {
    const std::size_t n = layout.joint_names.size();
    if (layout.parents.size() != n)
        throw std::invalid_argument("layout '" + layout.name + "': parents size " +
                                    std::to_string(layout.parents.size()) +
                                    " != joint count " + std::to_string(n));
    if (n == 0) throw std::invalid_argument("layout '" + layout.name + "': empty");
    for (std::size_t j = 0; j < n; ++j) {
        const int p = layout.parents[j];
        if (p >= static_cast<int>(n))
            throw std::invalid_argument("layout '" + layout.name + "': parent index " +
                                        std::to_string(p) + " out of range for joint " +
                                        std::to_string(j));
        // walk to a root; more than n steps means a cycle
        std::size_t steps = 0;
        int cur = static_cast<int>(j);
        while (layout.parents[cur] >= 0) {
            cur = layout.parents[cur];
            if (++steps > n)
                throw std::invalid_argument("layout '" + layout.name +
                                            "': parent cycle through joint " + std::to_string(j));
        }
    }
}

namespace {

struct LayoutBuilder {
    JointLayout layout;
    std::map<std::string, int> index;

    explicit LayoutBuilder(std::string name) { layout.name = std::move(name); }

    int add(const std::string& joint, const std::string& parent = "") {
        int p = -1;
        if (!parent.empty()) {
            auto it = index.find(parent);
            if (it == index.end())
                throw std::logic_error("builtin layout parent '" + parent + "' not yet defined");
            p = it->second;
        }
        const int id = static_cast<int>(layout.joint_names.size());
        layout.joint_names.push_back(joint);
        layout.parents.push_back(p);
        index[joint] = id;
        return id;
    }
};

// COCO body joints. Shoulders hang off the nose since COCO has no neck.
void add_body17(LayoutBuilder& b) {
    b.add("nose");
    b.add("left_eye", "nose");
    b.add("right_eye", "nose");
    b.add("left_ear", "left_eye");
    b.add("right_ear", "right_eye");
    b.add("left_shoulder", "nose");
    b.add("right_shoulder", "nose");
    b.add("left_elbow", "left_shoulder");
    b.add("right_elbow", "right_shoulder");
    b.add("left_wrist", "left_elbow");
    b.add("right_wrist", "right_elbow");
    b.add("left_hip", "left_shoulder");
    b.add("right_hip", "right_shoulder");
    b.add("left_knee", "left_hip");
    b.add("right_knee", "right_hip");
    b.add("left_ankle", "left_knee");
    b.add("right_ankle", "right_knee");
}

// 25 = body17 rerooted at a derived pelvis, plus derived neck and six foot
// keypoints. The pelvis/neck are the "joints derived from the body joints".
void add_wb25(LayoutBuilder& b) {
    b.add("pelvis");
    b.add("neck", "pelvis");
    b.add("nose", "neck");
    b.add("left_eye", "nose");
    b.add("right_eye", "nose");
    b.add("left_ear", "left_eye");
    b.add("right_ear", "right_eye");
    b.add("left_shoulder", "neck");
    b.add("right_shoulder", "neck");
    b.add("left_elbow", "left_shoulder");
    b.add("right_elbow", "right_shoulder");
    b.add("left_wrist", "left_elbow");
    b.add("right_wrist", "right_elbow");
    b.add("left_hip", "pelvis");
    b.add("right_hip", "pelvis");
    b.add("left_knee", "left_hip");
    b.add("right_knee", "right_hip");
    b.add("left_ankle", "left_knee");
    b.add("right_ankle", "right_knee");
    for (const char* side : {"left", "right"}) {
        const std::string s = side;
        b.add(s + "_big_toe", s + "_ankle");
        b.add(s + "_small_toe", s + "_big_toe");
        b.add(s + "_heel", s + "_ankle");
    }
}

void add_finger_tips(LayoutBuilder& b) {
    for (const char* side : {"left", "right"}) {
        const std::string s = side;
        b.add(s + "_thumb_tip", s + "_wrist");
        b.add(s + "_index_tip", s + "_wrist");
        b.add(s + "_pinky_tip", s + "_wrist");
    }
}

// 22 keypoints per hand: palm, five 4-joint finger chains, and a hand tip
// extending the middle finger.
void add_hands(LayoutBuilder& b) {
    for (const char* side : {"left", "right"}) {
        const std::string s = side;
        b.add(s + "_palm", s + "_wrist");
        for (const char* finger : {"thumb", "index", "middle", "ring", "pinky"}) {
            const std::string f = s + "_" + finger;
            b.add(f + "_1", s + "_palm");
            b.add(f + "_2", f + "_1");
            b.add(f + "_3", f + "_2");
            b.add(f + "_4", f + "_3");
        }
        b.add(s + "_hand_tip", s + "_middle_4");
    }
}

// Classic 68-point face: jaw 17, brows 2x5, nose bridge 4 + base 5,
// eyes 2x6, mouth 20. Region chains are rooted at the nose body joint.
void add_face68(LayoutBuilder& b) {
    auto chain = [&b](const std::string& prefix, int n, const std::string& root) {
        for (int i = 1; i <= n; ++i) {
            b.add(prefix + "_" + std::to_string(i),
                  i == 1 ? root : prefix + "_" + std::to_string(i - 1));
        }
    };
    chain("jaw", 17, "nose");
    chain("right_brow", 5, "nose");
    chain("left_brow", 5, "nose");
    chain("nose_bridge", 4, "nose");
    chain("nose_base", 5, "nose_bridge_4");
    chain("right_eye_rim", 6, "nose");
    chain("left_eye_rim", 6, "nose");
    chain("mouth_outer", 12, "nose");
    chain("mouth_inner", 8, "mouth_outer_1");
}

JointLayout make_builtin(const std::string& name) {
    LayoutBuilder b(name);
    if (name == "body") {
        add_body17(b);
    } else if (name == "wb25") {
        add_wb25(b);
    } else if (name == "wb31") {
        add_wb25(b);
        add_finger_tips(b);
    } else if (name == "wb69") {
        add_wb25(b);
        add_hands(b);
    } else if (name == "wb137") {
        add_wb25(b);
        add_hands(b);
        add_face68(b);
    } else {
        throw std::invalid_argument("unknown layout '" + name +
                                    "' (built-ins: body, wb25, wb31, wb69, wb137)");
    }
    validate_layout(b.layout);
    return b.layout;
}

}  // namespace

bool is_builtin_layout(const std::string& name) {
    return name == "body" || name == "wb25" || name == "wb31" || name == "wb69" ||
           name == "wb137";
}

LayoutPtr builtin_layout(const std::string& name) {
    static std::mutex mutex;
    static std::map<std::string, LayoutPtr> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    auto layout = std::make_shared<const JointLayout>(make_builtin(name));
    cache[name] = layout;
    return layout;
}

LayoutPtr load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open layout file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("layout file " + path + ": " + e.what());
    }
    JointLayout layout;
    layout.name = j.at("name").get<std::string>();
    layout.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    for (const auto& p : j.at("parents"))
        layout.parents.push_back(p.is_null() ? -1 : p.get<int>());
    validate_layout(layout);
    return std::make_shared<const JointLayout>(std::move(layout));
}

void save_layout(const std::string& path, const JointLayout& layout) {
    validate_layout(layout);
    json j;
    j["name"] = layout.name;
    j["joint_names"] = layout.joint_names;
    j["parents"] = layout.parents;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write layout file: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mvskel
