#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mocap/config.hpp"

using namespace mocap;
using nlohmann::json;

namespace {

std::string error_of(const json& doc) {
    try {
        parse_run_config(doc);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
        return e.what();
    }
    return "";
}

} // namespace

TEST(RunConfig, EmptyDocumentGivesDefaults) {
    const auto c = parse_run_config(json::object());
    EXPECT_EQ(c.variant, "FR-SC");
    EXPECT_DOUBLE_EQ(c.ratio, 0.5);
    EXPECT_DOUBLE_EQ(c.train.lr0, 0.04);
    EXPECT_EQ(c.train.early_stop_patience, 25);
    EXPECT_EQ(c.train.batch_labeled, 8);
    EXPECT_EQ(c.train.batch_mixed, 32);
    EXPECT_DOUBLE_EQ(c.preprocess.target_fps, 30);
    EXPECT_EQ(c.preprocess.window_width, 30);
    EXPECT_EQ(c.preprocess.effective_offset(), 15);
    EXPECT_EQ(c.model.frame_dim, 69);
    EXPECT_EQ(c.model.summary, 1024);
}

TEST(RunConfig, SectionsOverride) {
    const auto c = parse_run_config(json::parse(R"({"seed": 9, "variant": "SRC", "ratio": 0.25,
        "model": {"frame_encoder": [64], "classes": 4}, "train": {"lr0": 0.01},
        "generator": {"weights": [0, 1, 1, 1], "lambda": 0.2}, "partition": {"test_actors": ["bd"]}})"));
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.model_variant().name(), "SRC");
    EXPECT_EQ(c.model.frame_encoder, std::vector<int>{64});
    EXPECT_EQ(c.model.classes, 4);
    EXPECT_DOUBLE_EQ(c.train.lr0, 0.01);
    EXPECT_DOUBLE_EQ(c.generator.weights.adv, 0.0);
    EXPECT_DOUBLE_EQ(c.generator.model.lambda, 0.2);
    EXPECT_EQ(c.partition.test_actors, std::vector<std::string>{"bd"});
}

TEST(RunConfig, AllErrorsReportedAtOnce) {
    const auto msg = error_of(json::parse(R"({"colour": 1, "model": {"width": 3}, "train": {"momentum": "x"},
        "preprocess": {"noise_sigma": -1}, "cluster": {"k_min": 5, "k_max": 2}})"));
    for (const char* needle : {"'colour'", "'model.width'", "'train.momentum'", "noise_sigma", "cluster"})
        EXPECT_NE(msg.find(needle), std::string::npos) << needle << "\n" << msg;
    EXPECT_NE(msg.find("5 configuration error"), std::string::npos) << msg;
}

TEST(RunConfig, RatioAndVariantChecked) {
    EXPECT_NE(error_of(json::parse(R"({"ratio": 1.5})")).find("ratio"), std::string::npos);
    EXPECT_NE(error_of(json::parse(R"({"variant": "SC", "ratio": 1.5})")).find("ratio"), std::string::npos);
    EXPECT_NE(error_of(json::parse(R"({"variant": "XL"})")).find("variant"), std::string::npos);
    for (const char* v : {"SC", "FR-SC", "SRC", "FR-SRC", "FRC-SRC"}) EXPECT_NO_THROW(parse_run_config({{"variant", v}})) << v;
    EXPECT_NE(error_of(json::parse(R"({"generator": {"weights": [0, 0, 0, 0]}})")).find("weights"), std::string::npos);
    EXPECT_NE(error_of(json::parse(R"({"generator": {"weights": [1, 2]}})")), "");
    EXPECT_NE(error_of(json::parse("[]")), "");
}

TEST(RunConfig, HashIgnoresSeedAndPaths) {
    auto a = parse_run_config(json::object());
    auto b = a;
    b.seed = 77;
    b.paths.markers = "/elsewhere.json";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.variant = "SC";
    EXPECT_NE(config_hash(a), config_hash(b));
    auto c = a;
    c.generator.model.lambda = 0.1;
    EXPECT_NE(config_hash(a), config_hash(c));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(RunConfig, CanonicalDocumentRoundTrips) {
    auto c = parse_run_config(json::parse(R"({"seed": 4, "variant": "FRC-SRC", "model": {"seq_encoder": [8, 8]},
                                             "paths": {"markers": "m.json"}})"));
    const auto back = parse_run_config(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(back.seed, 4u);
    EXPECT_EQ(back.paths.markers, "m.json");
}

TEST(RunConfig, MissingOrBrokenFile) {
    EXPECT_THROW(load_run_config("/nonexistent/config.json"), Error);
    const std::string path = (std::filesystem::temp_directory_path() / "mocap_bad_config.json").string();
    std::ofstream(path) << "{ not json";
    EXPECT_THROW(load_run_config(path), Error);
}

TEST(RunConfig, ShippedExampleParses) {
    const auto c = load_run_config(std::string(MOCAP_SOURCE_DIR) + "/config/example_run.json");
    EXPECT_NO_THROW(c.model_variant());
}
