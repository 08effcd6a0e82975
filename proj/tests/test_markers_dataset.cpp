#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "mocap/dataset.hpp"
#include "mocap/markers.hpp"

using namespace mocap;

namespace {

c3d::C3dFile file_with_labels(const std::vector<std::string>& labels, int frames = 4) {
    c3d::C3dFile f;
    f.point_count = static_cast<int>(labels.size());
    f.frame_count = frames;
    f.frame_rate = 120.0f;
    f.labels = labels;
    f.data_format = c3d::DataFormat::Float;
    f.points.resize(labels.size() * static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t)
        for (int m = 0; m < f.point_count; ++m) f.points[static_cast<std::size_t>(t * f.point_count + m)] = {double(m), double(t), -double(m)};
    return f;
}

std::vector<CatalogEntry> toy_catalog() {
    std::vector<CatalogEntry> c;
    const char* actors[] = {"bd", "bk", "dg", "mm", "tr"};
    for (int i = 0; i < 30; ++i) c.push_back({"s" + std::to_string(i), "/x/s" + std::to_string(i) + ".c3d", actors[i % 5], i % 3, 100 + i, 120.0});
    return c;
}

} // namespace

TEST(MarkerSet, DefaultHas23DistinctMarkersAndValidBones) {
    const auto set = default_marker_set();
    EXPECT_NO_THROW(set.validate());
    EXPECT_EQ(set.names.size(), 23u);
    EXPECT_EQ(set.bone_indices().size(), set.bones.size());
    for (const auto& [a, b] : set.bone_indices()) {
        EXPECT_NE(a, b);
        EXPECT_LT(a, 23);
        EXPECT_LT(b, 23);
    }
    EXPECT_EQ(set.index_of("LFWT"), 13);
    EXPECT_EQ(set.index_of("RFWT"), 14);
    EXPECT_THROW(set.index_of("NOSE"), Error);
}

TEST(MarkerSet, ShippedFileMatchesBuiltIn) {
    const auto shipped = load_marker_set(std::string(MOCAP_SOURCE_DIR) + "/config/markers_default.json");
    const auto builtin = default_marker_set();
    EXPECT_EQ(shipped.names, builtin.names);
    EXPECT_EQ(shipped.aliases, builtin.aliases);
    EXPECT_EQ(shipped.bones, builtin.bones);
}

TEST(MarkerSet, JsonRejectsUnknownKeysAndBadSets) {
    auto j = to_json(default_marker_set());
    EXPECT_NO_THROW(marker_set_from_json(j));
    auto extra = j;
    extra["colour"] = "red";
    EXPECT_THROW(marker_set_from_json(extra), Error);
    auto short_set = j;
    short_set["names"].erase(0);
    EXPECT_THROW(marker_set_from_json(short_set), Error);
    auto bad_bone = j;
    bad_bone["bones"].push_back({"LFHD", "NOSE"});
    EXPECT_THROW(marker_set_from_json(bad_bone), Error);
    EXPECT_THROW(load_marker_set("/nonexistent/markers.json"), Error);
}

TEST(MarkerSelection, LabelsNormalizedAndAliasesResolved) {
    EXPECT_EQ(normalize_label("Subject01:lfhd  "), "LFHD");
    auto set = default_marker_set();
    std::vector<std::string> labels;
    for (const auto& n : set.names) labels.push_back("actor:" + n);
    labels[13] = "LASI"; // Plug-in-Gait pelvis name
    labels.insert(labels.begin(), "EXTRA");
    std::reverse(labels.begin(), labels.end());
    const auto f = file_with_labels(labels);
    const auto seq = select_markers(f, set);
    ASSERT_EQ(seq.dim(), 69);
    ASSERT_EQ(seq.length(), 4);
    // marker m of the set sits at file index position of its label
    for (int m = 0; m < 23; ++m) {
        const std::string want = m == 13 ? "LASI" : "actor:" + set.names[static_cast<std::size_t>(m)];
        const int idx = static_cast<int>(std::find(labels.begin(), labels.end(), want) - labels.begin());
        EXPECT_DOUBLE_EQ(seq.frames(3 * m, 2), double(idx));
        EXPECT_DOUBLE_EQ(seq.frames(3 * m + 1, 2), 2.0);
    }
}

TEST(MarkerSelection, MissingMarkersAllNamed) {
    auto set = default_marker_set();
    std::vector<std::string> labels(set.names.begin() + 2, set.names.end());
    try {
        select_markers(file_with_labels(labels), set);
        FAIL() << "expected MissingMarker";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingMarker);
        EXPECT_NE(std::string(e.what()).find("LFHD"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("RFHD"), std::string::npos);
    }
}

TEST(MarkerSelection, ToC3dInvertsSelection) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-2, 2);
    MotionSequence s;
    s.fps = 30;
    s.frames = Eigen::MatrixXd::NullaryExpr(69, 7, [&] { return double(float(u(rng))); });
    const auto set = default_marker_set();
    const auto back = select_markers(c3d::parse(c3d::write(to_c3d(s, set))), set);
    EXPECT_LT((back.frames - s.frames).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_DOUBLE_EQ(back.fps, 30.0);
    s.frames.conservativeResize(66, 7);
    EXPECT_THROW(to_c3d(s, set), Error);
}

TEST(Partition, ActorBasedKeepsActorsDisjoint) {
    const auto cat = toy_catalog();
    const auto p = build_partition(cat, {"mm", "tr"}, "dg");
    EXPECT_EQ(p.test.size(), 12u);
    EXPECT_EQ(p.valid.size(), 6u);
    EXPECT_EQ(p.train.size(), 12u);
    std::map<std::string, std::string> actor_of;
    for (const auto& e : cat) actor_of[e.id] = e.actor;
    for (const auto& id : p.test) EXPECT_TRUE(actor_of[id] == "mm" || actor_of[id] == "tr");
    for (const auto& id : p.valid) EXPECT_EQ(actor_of[id], "dg");
    for (const auto& id : p.train) EXPECT_TRUE(actor_of[id] == "bd" || actor_of[id] == "bk");
}

TEST(Partition, UnknownOrDoubledActorRejected) {
    const auto cat = toy_catalog();
    for (auto call : {std::function<void()>([&] { build_partition(cat, {"zz"}, ""); }),
                      std::function<void()>([&] { build_partition(cat, {}, "zz"); }),
                      std::function<void()>([&] { build_partition(cat, {"mm"}, "mm"); })}) {
        try {
            call();
            ADD_FAILURE() << "expected UnknownActor";
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::UnknownActor);
        }
    }
}

TEST(Partition, RandomIsStratifiedCoveringAndSeeded) {
    const auto cat = toy_catalog();
    std::mt19937_64 a(8), b(8), c(9);
    const auto p = build_random_partition(cat, 0.6, 0.2, a);
    const auto q = build_random_partition(cat, 0.6, 0.2, b);
    const auto r = build_random_partition(cat, 0.6, 0.2, c);
    EXPECT_EQ(p.train, q.train);
    EXPECT_EQ(p.test, q.test);
    EXPECT_NE(p.train, r.train);
    // ten per label -> 6 / 2 / 2 per label
    EXPECT_EQ(p.train.size(), 18u);
    EXPECT_EQ(p.valid.size(), 6u);
    EXPECT_EQ(p.test.size(), 6u);
    std::set<std::string> all(p.train.begin(), p.train.end());
    all.insert(p.valid.begin(), p.valid.end());
    all.insert(p.test.begin(), p.test.end());
    EXPECT_EQ(all.size(), cat.size());
}

TEST(Manifest, CatalogAndPartitionRoundTrip) {
    auto cat = toy_catalog();
    cat[3].label.reset();
    EXPECT_EQ(catalog_from_text(catalog_to_text(cat)), cat);
    EXPECT_EQ(catalog_to_text(cat), catalog_to_text(catalog_from_text(catalog_to_text(cat))));
    std::mt19937_64 rng(1);
    const auto p = build_random_partition(cat, 0.5, 0.25, rng);
    const auto back = partition_from_text(partition_to_text(p));
    EXPECT_EQ(back.train, p.train);
    EXPECT_EQ(back.valid, p.valid);
    EXPECT_EQ(back.test, p.test);
    EXPECT_EQ(back.policy, p.policy);
    EXPECT_THROW(catalog_from_text("{not json}\n"), Error);
    EXPECT_THROW(partition_from_text("[]"), Error);
}

TEST(Manifest, EntryFromSequence) {
    MotionSequence s;
    s.id = "bd_2_x";
    s.frames = Eigen::MatrixXd::Zero(69, 17);
    s.fps = 120;
    s.label = 2;
    s.actor = "bd";
    s.source = "/data/bd_2_x.c3d";
    const auto e = catalog_entry(s);
    EXPECT_EQ(e.frame_count, 17);
    EXPECT_EQ(e.actor, "bd");
    EXPECT_EQ(e.label, 2);
    EXPECT_EQ(e.path, "/data/bd_2_x.c3d");
}
