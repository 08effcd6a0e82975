#pragma once

// Catalog manifests and train/valid/test partitions.

#include <algorithm>
#include <cmath>
#include <optional>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mocap/error.hpp"
#include "mocap/sequence.hpp"

namespace mocap {

struct CatalogEntry {
    std::string id;
    std::string path;
    std::string actor;
    std::optional<int> label;
    int frame_count = 0;
    double fps = 0.0;

    friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

enum class PartitionPolicy { ActorBased, RandomBalanced };

struct Partition {
    std::vector<std::string> train, valid, test;
    PartitionPolicy policy = PartitionPolicy::ActorBased;
};

inline CatalogEntry catalog_entry(const MotionSequence& seq) {
    return {seq.id, seq.source, seq.actor.value_or(""), seq.label, seq.length(), seq.fps};
}

// Routes every sequence by actor; actors not named go to train.
inline Partition build_partition(const std::vector<CatalogEntry>& catalog, const std::vector<std::string>& test_actors,
                                 const std::string& valid_actor) {
    std::set<std::string> actors;
    for (const auto& e : catalog) actors.insert(e.actor);
    for (const auto& a : test_actors)
        if (!actors.count(a)) throw Error(ErrorCode::UnknownActor, "test actor '" + a + "' not in catalog");
    if (!valid_actor.empty() && !actors.count(valid_actor))
        throw Error(ErrorCode::UnknownActor, "validation actor '" + valid_actor + "' not in catalog");
    if (std::find(test_actors.begin(), test_actors.end(), valid_actor) != test_actors.end())
        throw Error(ErrorCode::UnknownActor, "actor '" + valid_actor + "' named for both test and validation");

    const std::set<std::string> test_set(test_actors.begin(), test_actors.end());
    Partition p;
    p.policy = PartitionPolicy::ActorBased;
    for (const auto& e : catalog) {
        if (test_set.count(e.actor))
            p.test.push_back(e.id);
        else if (!valid_actor.empty() && e.actor == valid_actor)
            p.valid.push_back(e.id);
        else
            p.train.push_back(e.id);
    }
    return p;
}

inline Partition build_partition(const std::vector<MotionSequence>& catalog, const std::vector<std::string>& test_actors,
                                 const std::string& valid_actor) {
    std::vector<CatalogEntry> entries;
    entries.reserve(catalog.size());
    for (const auto& s : catalog) entries.push_back(catalog_entry(s));
    return build_partition(entries, test_actors, valid_actor);
}

// Per-label stratified random split with the given train/valid fractions
// (test receives the remainder).
inline Partition build_random_partition(const std::vector<CatalogEntry>& catalog, double train_fraction,
                                        double valid_fraction, std::mt19937_64& rng) {
    std::map<int, std::vector<std::string>> by_label;
    for (const auto& e : catalog) by_label[e.label.value_or(-1)].push_back(e.id);
    Partition p;
    p.policy = PartitionPolicy::RandomBalanced;
    for (auto& [label, ids] : by_label) {
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto n = ids.size();
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
        const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n))));
        for (std::size_t i = 0; i < n; ++i) {
            if (i < n_train)
                p.train.push_back(ids[i]);
            else if (i < n_train + n_valid)
                p.valid.push_back(ids[i]);
            else
                p.test.push_back(ids[i]);
        }
    }
    return p;
}

// ---- manifests -------------------------------------------------------------

inline nlohmann::json to_json(const CatalogEntry& e) {
    nlohmann::json j;
    j["id"] = e.id;
    j["path"] = e.path;
    j["actor"] = e.actor;
    j["label"] = e.label ? nlohmann::json(*e.label) : nlohmann::json(nullptr);
    j["frame_count"] = e.frame_count;
    j["fps"] = e.fps;
    return j;
}

inline CatalogEntry catalog_entry_from_json(const nlohmann::json& j) {
    CatalogEntry e;
    e.id = j.at("id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.actor = j.value("actor", std::string());
    if (j.contains("label") && !j.at("label").is_null()) e.label = j.at("label").get<int>();
    e.frame_count = j.at("frame_count").get<int>();
    e.fps = j.at("fps").get<double>();
    return e;
}

inline std::string catalog_to_text(const std::vector<CatalogEntry>& catalog) {
    std::string out;
    for (const auto& e : catalog) out += to_json(e).dump() + "\n";
    return out;
}

inline std::vector<CatalogEntry> catalog_from_text(const std::string& text) {
    std::vector<CatalogEntry> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(catalog_entry_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidFile, std::string("catalog line: ") + e.what());
        }
    }
    return out;
}

inline std::string partition_to_text(const Partition& p) {
    nlohmann::json j;
    j["policy"] = p.policy == PartitionPolicy::ActorBased ? "actor-based" : "random-balanced";
    j["train"] = p.train;
    j["valid"] = p.valid;
    j["test"] = p.test;
    return j.dump(1) + "\n";
}

inline Partition partition_from_text(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        Partition p;
        p.policy = j.at("policy").get<std::string>() == "random-balanced" ? PartitionPolicy::RandomBalanced
                                                                         : PartitionPolicy::ActorBased;
        p.train = j.at("train").get<std::vector<std::string>>();
        p.valid = j.at("valid").get<std::vector<std::string>>();
        p.test = j.at("test").get<std::vector<std::string>>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidFile, std::string("partition manifest: ") + e.what());
    }
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
    out << text;
}

} // namespace mocap
