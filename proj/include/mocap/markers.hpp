#pragma once

// Canonical 23-marker cloud and the marker-name resolution used to pull it out
// of heterogeneous C3D label conventions (HDM05 lower-case names, CMU
// "subject:NAME" prefixes, Plug-in-Gait ASIS/PSIS pelvis names).

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mocap/c3d.hpp"
#include "mocap/error.hpp"
#include "mocap/sequence.hpp"

namespace mocap {

inline constexpr int kMarkerCount = 23;
inline constexpr int kFrameDim = kMarkerCount * 3;

struct MarkerSet {
    std::vector<std::string> names;
    std::map<std::string, std::vector<std::string>> aliases;
    // marker-name pairs whose distance is expected to stay rigid
    std::vector<std::pair<std::string, std::string>> bones;

    int index_of(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw Error(ErrorCode::MissingMarker, "marker set has no entry " + name);
        return static_cast<int>(it - names.begin());
    }

    std::vector<std::pair<int, int>> bone_indices() const {
        std::vector<std::pair<int, int>> out;
        out.reserve(bones.size());
        for (const auto& [a, b] : bones) out.emplace_back(index_of(a), index_of(b));
        return out;
    }

    void validate() const {
        if (names.size() != static_cast<std::size_t>(kMarkerCount))
            throw Error(ErrorCode::ConfigInvalid, "marker set must hold exactly 23 names, got " + std::to_string(names.size()));
        std::set<std::string> seen(names.begin(), names.end());
        if (seen.size() != names.size()) throw Error(ErrorCode::ConfigInvalid, "marker names must be distinct");
        for (const auto& [a, b] : bones) {
            if (!seen.count(a) || !seen.count(b)) throw Error(ErrorCode::ConfigInvalid, "bone references unknown marker " + a + "-" + b);
        }
    }
};

// Default selection. Neither dataset publishes a shared list, so this is a
// documented choice: head, trunk, both arms, pelvis corners and both legs.
inline MarkerSet default_marker_set() {
    MarkerSet set;
    set.names = {"LFHD", "RFHD", "C7",   "CLAV", "STRN", "LSHO", "LELB", "LWRA",
                 "LFIN", "RSHO", "RELB", "RWRA", "RFIN", "LFWT", "RFWT", "LBWT",
                 "RBWT", "LKNE", "LANK", "LTOE", "RKNE", "RANK", "RTOE"};
    set.aliases = {
        {"LFWT", {"LASI"}}, {"RFWT", {"RASI"}}, {"LBWT", {"LPSI"}}, {"RBWT", {"RPSI"}},
        {"LWRA", {"LWRI", "LWR"}}, {"RWRA", {"RWRI", "RWR"}}, {"LFIN", {"LHND"}}, {"RFIN", {"RHND"}},
        {"STRN", {"STER"}}, {"LTOE", {"LMT1"}}, {"RTOE", {"RMT1"}},
    };
    set.bones = {
        {"LFHD", "RFHD"}, {"C7", "CLAV"},   {"CLAV", "STRN"}, {"LSHO", "LELB"}, {"LELB", "LWRA"},
        {"LWRA", "LFIN"}, {"RSHO", "RELB"}, {"RELB", "RWRA"}, {"RWRA", "RFIN"}, {"LFWT", "RFWT"},
        {"LBWT", "RBWT"}, {"LFWT", "LBWT"}, {"RFWT", "RBWT"}, {"LKNE", "LANK"}, {"LANK", "LTOE"},
        {"RKNE", "RANK"}, {"RANK", "RTOE"},
    };
    return set;
}

inline nlohmann::json to_json(const MarkerSet& set) {
    nlohmann::json j;
    j["names"] = set.names;
    j["aliases"] = set.aliases;
    nlohmann::json bones = nlohmann::json::array();
    for (const auto& [a, b] : set.bones) bones.push_back({a, b});
    j["bones"] = bones;
    return j;
}

inline MarkerSet marker_set_from_json(const nlohmann::json& j) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "names" && it.key() != "aliases" && it.key() != "bones")
            throw Error(ErrorCode::ConfigInvalid, "unknown marker-set key " + it.key());
    }
    MarkerSet set;
    set.names = j.at("names").get<std::vector<std::string>>();
    if (j.contains("aliases")) set.aliases = j.at("aliases").get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("bones")) {
        for (const auto& bone : j.at("bones")) set.bones.emplace_back(bone.at(0).get<std::string>(), bone.at(1).get<std::string>());
    }
    set.validate();
    return set;
}

inline MarkerSet load_marker_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open marker set " + path);
    try {
        return marker_set_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, std::string("marker set ") + path + ": " + e.what());
    }
}

// "Subject:LFHD " -> "LFHD"
inline std::string normalize_label(const std::string& label) {
    std::string s = label;
    if (auto colon = s.rfind(':'); colon != std::string::npos) s = s.substr(colon + 1);
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

// For each marker of the set, the index of the matching file label.
inline std::vector<int> resolve_markers(const std::vector<std::string>& labels, const MarkerSet& markers) {
    std::map<std::string, int> by_label;
    for (std::size_t i = 0; i < labels.size(); ++i) by_label.emplace(normalize_label(labels[i]), static_cast<int>(i));

    std::vector<int> indices;
    std::vector<std::string> missing;
    for (const auto& name : markers.names) {
        std::vector<std::string> candidates{name};
        if (auto it = markers.aliases.find(name); it != markers.aliases.end())
            candidates.insert(candidates.end(), it->second.begin(), it->second.end());
        int found = -1;
        for (const auto& c : candidates) {
            if (auto hit = by_label.find(normalize_label(c)); hit != by_label.end()) {
                found = hit->second;
                break;
            }
        }
        if (found < 0) missing.push_back(name);
        indices.push_back(found);
    }
    if (!missing.empty()) {
        std::string msg;
        for (const auto& m : missing) msg += (msg.empty() ? "" : ", ") + m;
        throw Error(ErrorCode::MissingMarker, msg);
    }
    return indices;
}

inline MotionSequence select_markers(const c3d::C3dFile& file, const MarkerSet& markers) {
    const auto indices = resolve_markers(file.labels, markers);
    const auto dim = static_cast<Eigen::Index>(indices.size() * 3);
    MotionSequence seq;
    seq.fps = file.frame_rate;
    seq.frames.resize(dim, file.frame_count);
    for (int f = 0; f < file.frame_count; ++f) {
        for (std::size_t m = 0; m < indices.size(); ++m) {
            const auto& p = file.at(f, indices[m]);
            for (int k = 0; k < 3; ++k) seq.frames(static_cast<Eigen::Index>(m * 3 + static_cast<std::size_t>(k)), f) = p[static_cast<std::size_t>(k)];
        }
    }
    return seq;
}

// Inverse of select_markers, used to export sequences (e.g. generated transitions).
inline c3d::C3dFile to_c3d(const MotionSequence& seq, const MarkerSet& markers) {
    if (seq.frames.rows() != static_cast<Eigen::Index>(markers.names.size() * 3))
        throw Error(ErrorCode::ShapeMismatch, "sequence dimension does not match the marker set");
    c3d::C3dFile file;
    file.point_count = static_cast<int>(markers.names.size());
    file.frame_count = static_cast<int>(seq.frames.cols());
    file.frame_rate = seq.fps;
    file.labels = markers.names;
    file.data_format = c3d::DataFormat::Float;
    file.scale_factor = 1.0;
    file.points.resize(static_cast<std::size_t>(file.point_count) * static_cast<std::size_t>(file.frame_count));
    for (int f = 0; f < file.frame_count; ++f)
        for (int m = 0; m < file.point_count; ++m)
            file.at(f, m) = {seq.frames(3 * m, f), seq.frames(3 * m + 1, f), seq.frames(3 * m + 2, f)};
    return file;
}

} // namespace mocap
