#include "mvskel/skeleton.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mvskel {

using nlohmann::json;

const Skeleton2D& PersonEntry::as_2d() const {
    if (const auto* s = std::get_if<Skeleton2D>(&skeleton)) return *s;
    throw std::invalid_argument("expected a 2D skeleton, got 3D");
}

const Skeleton3D& PersonEntry::as_3d() const {
    if (const auto* s = std::get_if<Skeleton3D>(&skeleton)) return *s;
    throw std::invalid_argument("expected a 3D skeleton, got 2D");
}

namespace {

void check_confidence(double c, std::size_t j) {
    if (!(c >= 0.0 && c <= 1.0))
        throw std::invalid_argument("joint " + std::to_string(j) + ": confidence " +
                                    std::to_string(c) + " outside [0,1]");
}

}  // namespace

void validate_skeleton(const Skeleton2D& s) {
    if (!s.layout) throw std::invalid_argument("skeleton has no layout");
    if (s.joints.size() != s.layout->count())
        throw std::invalid_argument("skeleton has " + std::to_string(s.joints.size()) +
                                    " joints, layout '" + s.layout->name + "' expects " +
                                    std::to_string(s.layout->count()));
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
        const auto& jt = s.joints[j];
        check_confidence(jt.c, j);
        if (jt.c > 0.0 && !(std::isfinite(jt.u) && std::isfinite(jt.v)))
            throw std::invalid_argument("joint " + std::to_string(j) +
                                        ": non-finite coordinates with confidence > 0");
    }
}

void validate_skeleton(const Skeleton3D& s) {
    if (!s.layout) throw std::invalid_argument("skeleton has no layout");
    if (s.joints.size() != s.layout->count())
        throw std::invalid_argument("skeleton has " + std::to_string(s.joints.size()) +
                                    " joints, layout '" + s.layout->name + "' expects " +
                                    std::to_string(s.layout->count()));
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
        const auto& jt = s.joints[j];
        check_confidence(jt.c, j);
        if (jt.c > 0.0 && !(std::isfinite(jt.x) && std::isfinite(jt.y) && std::isfinite(jt.z)))
            throw std::invalid_argument("joint " + std::to_string(j) +
                                        ": non-finite coordinates with confidence > 0");
    }
}

namespace {

double number_or_zero(const json& v) {
    if (v.is_number()) {
        const double d = v.get<double>();
        return std::isfinite(d) ? d : 0.0;
    }
    return 0.0;
}

PersonEntry parse_person(const json& p, const LayoutPtr& expected, CoordFrame frame3d,
                         std::size_t line) {
    const auto where = "line " + std::to_string(line);
    const std::string layout_name = p.at("layout").get<std::string>();
    if (layout_name != expected->name)
        throw std::runtime_error(where + ": layout mismatch: file has '" + layout_name +
                                 "', expected '" + expected->name + "'");
    const int dims = p.at("dims").get<int>();
    if (dims != 2 && dims != 3)
        throw std::runtime_error(where + ": dims must be 2 or 3, got " + std::to_string(dims));
    const auto& joints = p.at("joints");
    if (joints.size() != expected->count())
        throw std::runtime_error(where + ": layout mismatch: " + std::to_string(joints.size()) +
                                 " joints, layout '" + expected->name + "' expects " +
                                 std::to_string(expected->count()));

    PersonEntry entry;
    if (p.contains("id") && !p.at("id").is_null()) entry.id = p.at("id").get<int>();

    const std::size_t coords = dims == 2 ? 2 : 3;
    // Returns {x, y, z, confidence}; missing or null values give confidence 0.
    auto read_joint = [&](const json& ja) -> std::array<double, 4> {
        std::array<double, 4> out = {0, 0, 0, 0};
        if (!ja.is_array() || ja.size() < coords + 1) return out;
        for (const auto& v : ja)
            if (!v.is_number() && !v.is_null())
                throw std::runtime_error(where + ": joint entry is not numeric");
        double conf = number_or_zero(ja[coords]);
        if (!(conf >= 0.0 && conf <= 1.0))
            throw std::runtime_error(where + ": confidence " + std::to_string(conf) +
                                     " outside [0,1]");
        for (std::size_t k = 0; k < coords; ++k) {
            if (!ja[k].is_number() || !std::isfinite(ja[k].get<double>())) conf = 0.0;
            out[k] = number_or_zero(ja[k]);
        }
        out[3] = conf;
        return out;
    };

    if (dims == 2) {
        Skeleton2D s;
        s.layout = expected;
        s.joints.resize(expected->count());
        for (std::size_t j = 0; j < joints.size(); ++j) {
            const auto v = read_joint(joints[j]);
            s.joints[j] = {v[0], v[1], v[3]};
        }
        validate_skeleton(s);
        entry.skeleton = std::move(s);
    } else {
        Skeleton3D s;
        s.layout = expected;
        s.frame = frame3d;
        s.joints.resize(expected->count());
        for (std::size_t j = 0; j < joints.size(); ++j) {
            const auto v = read_joint(joints[j]);
            s.joints[j] = {v[0], v[1], v[2], v[3]};
        }
        validate_skeleton(s);
        entry.skeleton = std::move(s);
    }
    return entry;
}

}  // namespace

SkeletonSequence load_sequence(const std::filesystem::path& path, const LayoutPtr& expected_layout,
                               CoordFrame frame3d) {
    if (!expected_layout) throw std::invalid_argument("load_sequence: null layout");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open skeleton file: " + path.string());

    SkeletonSequence seq;
    seq.source = path.string();
    std::string line;
    std::size_t lineno = 0;
    int last_t = 0;
    bool have_t = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(lineno) +
                                     ": parse error: " + e.what());
        }
        try {
            SequenceFrame frame;
            frame.time_index = j.at("t").get<int>();
            if (have_t && frame.time_index <= last_t)
                throw std::runtime_error("line " + std::to_string(lineno) +
                                         ": time_index not strictly increasing (" +
                                         std::to_string(frame.time_index) + " after " +
                                         std::to_string(last_t) + ")");
            last_t = frame.time_index;
            have_t = true;
            for (const auto& p : j.at("persons"))
                frame.persons.push_back(parse_person(p, expected_layout, frame3d, lineno));
            seq.frames.push_back(std::move(frame));
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    return seq;
}

namespace {

json person_to_json(const PersonEntry& entry) {
    json p;
    if (entry.id)
        p["id"] = *entry.id;
    else
        p["id"] = nullptr;
    if (entry.is_3d()) {
        const auto& s = entry.as_3d();
        p["layout"] = s.layout->name;
        p["dims"] = 3;
        json joints = json::array();
        for (const auto& jt : s.joints) joints.push_back({jt.x, jt.y, jt.z, jt.c});
        p["joints"] = std::move(joints);
    } else {
        const auto& s = entry.as_2d();
        p["layout"] = s.layout->name;
        p["dims"] = 2;
        json joints = json::array();
        for (const auto& jt : s.joints) joints.push_back({jt.u, jt.v, jt.c});
        p["joints"] = std::move(joints);
    }
    return p;
}

}  // namespace

void save_sequence(const std::filesystem::path& path, const SkeletonSequence& seq) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write skeleton file: " + path.string());
    for (const auto& frame : seq.frames) {
        json j;
        j["t"] = frame.time_index;
        json persons = json::array();
        for (const auto& p : frame.persons) persons.push_back(person_to_json(p));
        j["persons"] = std::move(persons);
        out << j.dump() << "\n";
    }
}

}  // namespace mvskel
