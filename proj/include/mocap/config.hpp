#pragma once

// Run configuration document for the command-line tool.
//
// Every section is optional; missing keys keep their defaults. Unknown keys,
// wrong types and invalid values are all collected and reported together.
// The config hash covers everything except the seed and the paths section.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mocap/analysis.hpp"
#include "mocap/binary_io.hpp"
#include "mocap/error.hpp"
#include "mocap/markers.hpp"
#include "mocap/multidec.hpp"
#include "mocap/preprocess.hpp"
#include "mocap/regan.hpp"
#include "mocap/trainer.hpp"

namespace mocap {

struct PartitionConfig {
    std::vector<std::string> test_actors;
    std::string valid_actor;
    // used when no test actors are named
    double train_fraction = 0.6;
    double valid_fraction = 0.2;
};

struct GeneratorRunConfig {
    regan::GenConfig model;
    regan::LossWeights weights;
    regan::GanTrainConfig train;
    int past_len = 10;
    int trans_len = 15;
    int sample_stride = 5;
};

struct ClusterConfig {
    int k_min = 1;
    int k_max = 40;
    int restarts = 3;
};

struct PathsConfig {
    std::string markers; // empty: built-in default marker set
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string variant = "FR-SC";
    double ratio = 0.5;
    PreprocConfig preprocess;
    multidec::ModelDims model;
    trainer::TrainConfig train;
    PartitionConfig partition;
    GeneratorRunConfig generator;
    ClusterConfig cluster;
    PathsConfig paths;

    multidec::ModelVariant model_variant() const { return multidec::ModelVariant::named(variant, ratio); }
};

namespace detail {

// Reads one JSON object, remembering which keys were consumed.
class Section {
public:
    Section(const nlohmann::json& obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (!obj_.is_object()) {
            errors_.push_back(where("") + "must be an object");
            ok_ = false;
        }
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!ok_) return;
        seen_.push_back(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            errors_.push_back(where(key) + "has the wrong type (" + std::string(it->type_name()) + ")");
        }
    }

    // Sub-object, or null when absent.
    const nlohmann::json* child(const std::string& key) {
        if (!ok_) return nullptr;
        seen_.push_back(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void finish() {
        if (!ok_) return;
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) errors_.push_back(where(it.key()) + "is not a known key");
    }

    std::string where(const std::string& key) const {
        const std::string full = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
        return "'" + full + "' ";
    }

private:
    const nlohmann::json& obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::vector<std::string> seen_;
    bool ok_ = true;
};

template <class Fn>
void check(std::vector<std::string>& errors, const std::string& what, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        errors.push_back(what + ": " + e.what());
    }
}

} // namespace detail

inline void validate_preprocess(const PreprocConfig& p) {
    if (!(p.target_fps > 0)) throw Error(ErrorCode::ConfigInvalid, "target_fps must be > 0");
    if (p.window_width < 0) throw Error(ErrorCode::ConfigInvalid, "window_width must be >= 0 (0 takes whole sequences)");
    if (p.window_offset < 0 || (p.window_width > 0 && p.window_offset > p.window_width))
        throw Error(ErrorCode::ConfigInvalid, "window_offset must lie in [0, window_width]");
    if (!(p.noise_sigma >= 0)) throw Error(ErrorCode::ConfigInvalid, "noise_sigma must be >= 0");
    if (p.left_hip < 0 || p.right_hip < 0 || p.left_hip == p.right_hip || p.root < -1 || p.up_axis < 0 || p.up_axis > 2)
        throw Error(ErrorCode::ConfigInvalid, "hip, root or up-axis index invalid");
}

inline RunConfig parse_run_config(const nlohmann::json& doc) {
    RunConfig c;
    std::vector<std::string> errors;
    detail::Section top(doc, "", errors);
    top.get("seed", c.seed);
    top.get("variant", c.variant);
    top.get("ratio", c.ratio);

    if (auto* j = top.child("preprocess")) {
        detail::Section s(*j, "preprocess", errors);
        s.get("target_fps", c.preprocess.target_fps);
        s.get("window_width", c.preprocess.window_width);
        s.get("window_offset", c.preprocess.window_offset);
        s.get("noise_sigma", c.preprocess.noise_sigma);
        s.get("left_hip", c.preprocess.left_hip);
        s.get("right_hip", c.preprocess.right_hip);
        s.get("root", c.preprocess.root);
        s.get("up_axis", c.preprocess.up_axis);
        s.finish();
    }
    if (auto* j = top.child("model")) {
        detail::Section s(*j, "model", errors);
        s.get("frame_encoder", c.model.frame_encoder);
        s.get("seq_encoder", c.model.seq_encoder);
        s.get("summary", c.model.summary);
        s.get("class_hidden", c.model.class_hidden);
        s.get("classes", c.model.classes);
        s.get("bidirectional_first", c.model.bidirectional_first);
        s.get("class_hidden_tanh", c.model.class_hidden_tanh);
        s.get("reverse_decoder", c.model.reverse_decoder);
        s.finish();
    }
    if (auto* j = top.child("train")) {
        detail::Section s(*j, "train", errors);
        auto& t = c.train;
        s.get("lr0", t.lr0);
        s.get("lr_halving_patience", t.lr_halving_patience);
        s.get("lr_floor", t.lr_floor);
        s.get("momentum", t.momentum);
        s.get("early_stop_patience", t.early_stop_patience);
        s.get("batch_labeled", t.batch_labeled);
        s.get("batch_mixed", t.batch_mixed);
        s.get("unlabeled_scale", t.unlabeled_scale);
        s.get("clip_norm", t.clip_norm);
        s.get("max_epochs", t.max_epochs);
        s.finish();
    }
    if (auto* j = top.child("partition")) {
        detail::Section s(*j, "partition", errors);
        s.get("test_actors", c.partition.test_actors);
        s.get("valid_actor", c.partition.valid_actor);
        s.get("train_fraction", c.partition.train_fraction);
        s.get("valid_fraction", c.partition.valid_fraction);
        s.finish();
    }
    if (auto* j = top.child("generator")) {
        detail::Section s(*j, "generator", errors);
        auto& g = c.generator;
        s.get("past_frame_encoder", g.model.past_frame_encoder);
        s.get("past_seq_encoder", g.model.past_seq_encoder);
        s.get("context", g.model.context);
        s.get("future_layers", g.model.future_layers);
        s.get("noise_dim", g.model.noise_dim);
        s.get("layers", g.model.generator);
        s.get("discriminator", g.model.discriminator);
        s.get("lambda", g.model.lambda);
        s.get("max_len", g.model.max_len);
        s.get("literal_density", g.model.literal_density);
        std::vector<double> w;
        s.get("weights", w);
        if (!w.empty()) {
            if (w.size() != 4)
                errors.push_back("'generator.weights' needs four values w_adv,w_rec,w_bone,w_vel");
            else
                g.weights = {w[0], w[1], w[2], w[3]};
        }
        s.get("steps", g.train.steps);
        s.get("batch", g.train.batch);
        s.get("lr_generator", g.train.lr_generator);
        s.get("lr_discriminator", g.train.lr_discriminator);
        s.get("momentum", g.train.momentum);
        s.get("clip_norm", g.train.clip_norm);
        s.get("past_len", g.past_len);
        s.get("trans_len", g.trans_len);
        s.get("sample_stride", g.sample_stride);
        s.finish();
    }
    if (auto* j = top.child("cluster")) {
        detail::Section s(*j, "cluster", errors);
        s.get("k_min", c.cluster.k_min);
        s.get("k_max", c.cluster.k_max);
        s.get("restarts", c.cluster.restarts);
        s.finish();
    }
    if (auto* j = top.child("paths")) {
        detail::Section s(*j, "paths", errors);
        s.get("markers", c.paths.markers);
        s.finish();
    }
    top.finish();

    if (c.model.frame_dim != static_cast<int>(kFrameDim)) c.model.frame_dim = kFrameDim;
    c.generator.model.frame_dim = kFrameDim;
    if (!(c.ratio >= 0.0 && c.ratio <= 1.0)) errors.push_back("'ratio' must lie in [0, 1], got " + std::to_string(c.ratio));
    else detail::check(errors, "variant", [&] { c.model_variant(); });
    detail::check(errors, "preprocess", [&] { validate_preprocess(c.preprocess); });
    detail::check(errors, "model", [&] { c.model.validate(); });
    detail::check(errors, "train", [&] { c.train.validate(); });
    detail::check(errors, "generator", [&] { c.generator.model.validate(); });
    detail::check(errors, "generator.weights", [&] { c.generator.weights.validate(); });
    if (c.generator.train.steps < 0 || c.generator.train.batch < 1 || !(c.generator.train.lr_generator > 0) ||
        !(c.generator.train.lr_discriminator > 0))
        errors.push_back("generator: steps >= 0, batch >= 1 and positive learning rates required");
    if (c.generator.past_len < 1 || c.generator.trans_len < 1 || c.generator.sample_stride < 1)
        errors.push_back("generator: past_len, trans_len and sample_stride must be >= 1");
    if (c.cluster.k_min < 1 || c.cluster.k_max < c.cluster.k_min || c.cluster.restarts < 1)
        errors.push_back("cluster: need 1 <= k_min <= k_max and restarts >= 1");
    if (!(c.partition.train_fraction > 0 && c.partition.valid_fraction >= 0 &&
          c.partition.train_fraction + c.partition.valid_fraction <= 1))
        errors.push_back("partition: fractions must be positive and sum to at most 1");

    if (!errors.empty()) {
        std::string msg = std::to_string(errors.size()) + " configuration error(s):";
        for (const auto& e : errors) msg += "\n  " + e;
        throw Error(ErrorCode::ConfigInvalid, msg);
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, "config " + path + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

// Canonical document: every field with its effective value.
inline nlohmann::json to_json(const RunConfig& c, bool with_seed_and_paths = true) {
    nlohmann::json j;
    if (with_seed_and_paths) {
        j["seed"] = c.seed;
        j["paths"] = {{"markers", c.paths.markers}};
    }
    j["variant"] = c.variant;
    j["ratio"] = c.ratio;
    const auto& p = c.preprocess;
    j["preprocess"] = {{"target_fps", p.target_fps}, {"window_width", p.window_width}, {"window_offset", p.window_offset},
                       {"noise_sigma", p.noise_sigma}, {"left_hip", p.left_hip}, {"right_hip", p.right_hip},
                       {"root", p.root}, {"up_axis", p.up_axis}};
    const auto& m = c.model;
    j["model"] = {{"frame_encoder", m.frame_encoder}, {"seq_encoder", m.seq_encoder}, {"summary", m.summary},
                  {"class_hidden", m.class_hidden}, {"classes", m.classes}, {"bidirectional_first", m.bidirectional_first},
                  {"class_hidden_tanh", m.class_hidden_tanh}, {"reverse_decoder", m.reverse_decoder}};
    const auto& t = c.train;
    j["train"] = {{"lr0", t.lr0}, {"lr_halving_patience", t.lr_halving_patience}, {"lr_floor", t.lr_floor},
                  {"momentum", t.momentum}, {"early_stop_patience", t.early_stop_patience},
                  {"batch_labeled", t.batch_labeled}, {"batch_mixed", t.batch_mixed},
                  {"unlabeled_scale", t.unlabeled_scale}, {"clip_norm", t.clip_norm}, {"max_epochs", t.max_epochs}};
    j["partition"] = {{"test_actors", c.partition.test_actors}, {"valid_actor", c.partition.valid_actor},
                      {"train_fraction", c.partition.train_fraction}, {"valid_fraction", c.partition.valid_fraction}};
    const auto& g = c.generator;
    j["generator"] = {{"past_frame_encoder", g.model.past_frame_encoder}, {"past_seq_encoder", g.model.past_seq_encoder},
                      {"context", g.model.context}, {"future_layers", g.model.future_layers},
                      {"noise_dim", g.model.noise_dim}, {"layers", g.model.generator},
                      {"discriminator", g.model.discriminator}, {"lambda", g.model.lambda}, {"max_len", g.model.max_len},
                      {"literal_density", g.model.literal_density},
                      {"weights", {g.weights.adv, g.weights.rec, g.weights.bone, g.weights.vel}},
                      {"steps", g.train.steps}, {"batch", g.train.batch}, {"lr_generator", g.train.lr_generator},
                      {"lr_discriminator", g.train.lr_discriminator}, {"momentum", g.train.momentum},
                      {"clip_norm", g.train.clip_norm}, {"past_len", g.past_len}, {"trans_len", g.trans_len},
                      {"sample_stride", g.sample_stride}};
    j["cluster"] = {{"k_min", c.cluster.k_min}, {"k_max", c.cluster.k_max}, {"restarts", c.cluster.restarts}};
    return j;
}

// FNV-1a over the canonical dump (sorted keys), seed and paths excluded.
inline std::string config_hash(const RunConfig& c) { return io::hex64(io::fnv1a(to_json(c, false).dump())); }

} // namespace mocap
