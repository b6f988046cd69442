#include <doctest.h>

#include <algorithm>
#include <set>
#include <stdexcept>

#include "mvskel/layout.hpp"
#include "test_helpers.hpp"

using namespace mvskel;

TEST_CASE("builtin layouts have the documented joint counts") {
    CHECK(builtin_layout("body")->count() == 17);
    CHECK(builtin_layout("wb25")->count() == 25);
    CHECK(builtin_layout("wb31")->count() == 31);
    CHECK(builtin_layout("wb69")->count() == 69);
    CHECK(builtin_layout("wb137")->count() == 137);
}

TEST_CASE("builtin layouts validate as parent forests") {
    for (const char* name : {"body", "wb25", "wb31", "wb69", "wb137"}) {
        const LayoutPtr layout = builtin_layout(name);
        CHECK(layout->name == name);
        CHECK(layout->parents.size() == layout->joint_names.size());
        CHECK_NOTHROW(validate_layout(*layout));
        // At least one root, and every parent precedes legality bounds.
        bool has_root = false;
        for (std::size_t j = 0; j < layout->count(); ++j) {
            if (layout->is_root(j))
                has_root = true;
            else
                CHECK(layout->parents[j] < static_cast<int>(layout->count()));
        }
        CHECK(has_root);
        // Joint names are unique.
        std::set<std::string> names(layout->joint_names.begin(), layout->joint_names.end());
        CHECK(names.size() == layout->count());
    }
}

TEST_CASE("unknown layout name is rejected") {
    CHECK_THROWS_AS(builtin_layout("unknown"), std::invalid_argument);
    CHECK(!is_builtin_layout("unknown"));
    CHECK(is_builtin_layout("wb69"));
}

TEST_CASE("builtin layouts are cached") {
    CHECK(builtin_layout("wb25").get() == builtin_layout("wb25").get());
}

TEST_CASE("validate_layout rejects cycles and bad indices") {
    JointLayout cyclic;
    cyclic.name = "cyclic";
    cyclic.joint_names = {"a", "b"};
    cyclic.parents = {1, 0};
    CHECK_THROWS_AS(validate_layout(cyclic), std::invalid_argument);

    JointLayout self_loop;
    self_loop.name = "self";
    self_loop.joint_names = {"a"};
    self_loop.parents = {0};
    CHECK_THROWS_AS(validate_layout(self_loop), std::invalid_argument);

    JointLayout out_of_range;
    out_of_range.name = "oob";
    out_of_range.joint_names = {"a", "b"};
    out_of_range.parents = {-1, 7};
    CHECK_THROWS_AS(validate_layout(out_of_range), std::invalid_argument);

    JointLayout mismatched;
    mismatched.name = "mismatch";
    mismatched.joint_names = {"a", "b"};
    mismatched.parents = {-1};
    CHECK_THROWS_AS(validate_layout(mismatched), std::invalid_argument);
}

TEST_CASE("layout registry file round trip") {
    testing::TempDir dir("layout");
    const auto file = dir.path() / "custom.json";

    JointLayout custom;
    custom.name = "custom4";
    custom.joint_names = {"root", "mid", "left", "right"};
    custom.parents = {-1, 0, 1, 1};
    save_layout(file.string(), custom);

    const LayoutPtr loaded = load_layout(file.string());
    CHECK(loaded->name == custom.name);
    CHECK(loaded->joint_names == custom.joint_names);
    CHECK(loaded->parents == custom.parents);
}

TEST_CASE("load_layout rejects missing files and invalid forests") {
    CHECK_THROWS(load_layout("/nonexistent/layout.json"));

    testing::TempDir dir("layout_bad");
    const auto file = dir.path() / "bad.json";
    JointLayout bad;
    bad.name = "bad";
    bad.joint_names = {"a", "b"};
    bad.parents = {1, 0};
    // save_layout validates too; write the file by hand.
    CHECK_THROWS_AS(save_layout(file.string(), bad), std::invalid_argument);
}
