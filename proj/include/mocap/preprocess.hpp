#pragma once

// Frame normalization (facing direction, centering, scaling), temporal
// decimation, sliding windows and input corruption.

#include <algorithm>
#include <cmath>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mocap/binary_io.hpp"
#include "mocap/error.hpp"
#include "mocap/sequence.hpp"

namespace mocap {

// Window width 0 means "all frames".
inline constexpr int kWholeSequence = 0;

struct PreprocConfig {
    double target_fps = 30.0;
    int window_width = 30;
    int window_offset = 0; // 0 selects width / 2
    double noise_sigma = 0.05;
    int left_hip = 13;  // LFWT in the default marker set
    int right_hip = 14; // RFWT
    int root = -1;      // marker index, or -1 for the midpoint of the two hips
    int up_axis = 2;    // vertical coordinate (C3D files are usually z-up)

    int effective_offset() const {
        if (window_offset > 0) return window_offset;
        return std::max(1, window_width / 2);
    }
};

struct WindowBatch {
    std::vector<MotionSequence> windows;
    std::string parent_id;
    std::optional<int> label;
};

inline Eigen::Vector3d marker(const Eigen::VectorXd& frame, int index) {
    return frame.segment<3>(3 * index);
}

// Root to the origin, hip axis yawed onto +x (about the vertical only, so
// pelvis tilt survives), then every coordinate divided by the largest
// absolute coordinate of the frame.
inline Eigen::VectorXd orient_center_scale(const Eigen::VectorXd& frame, const PreprocConfig& cfg) {
    if (frame.size() % 3 != 0) throw Error(ErrorCode::ShapeMismatch, "frame dimension is not a multiple of 3");
    const int markers = static_cast<int>(frame.size() / 3);
    for (int idx : {cfg.left_hip, cfg.right_hip})
        if (idx < 0 || idx >= markers) throw Error(ErrorCode::ShapeMismatch, "hip marker index out of range");
    if (cfg.root >= markers) throw Error(ErrorCode::ShapeMismatch, "root marker index out of range");
    if (cfg.up_axis < 0 || cfg.up_axis > 2) throw Error(ErrorCode::ConfigInvalid, "up_axis must be 0, 1 or 2");

    const Eigen::Vector3d left = marker(frame, cfg.left_hip);
    const Eigen::Vector3d right = marker(frame, cfg.right_hip);
    if ((right - left).norm() < 1e-9) throw Error(ErrorCode::DegenerateHips, "hip markers coincide");
    const Eigen::Vector3d root = cfg.root >= 0 ? Eigen::Vector3d(marker(frame, cfg.root)) : Eigen::Vector3d(0.5 * (left + right));

    const int a = cfg.up_axis == 0 ? 1 : 0;
    const int b = cfg.up_axis == 2 ? 1 : 2;
    const Eigen::Vector3d axis = right - left;
    const double horizontal = std::hypot(axis[a], axis[b]);
    double cos_t = 1.0, sin_t = 0.0;
    // A vertical hip axis has no facing direction; leave yaw untouched.
    if (horizontal > 1e-12) {
        cos_t = axis[a] / horizontal;
        sin_t = -axis[b] / horizontal;
    }

    Eigen::VectorXd out(frame.size());
    for (int m = 0; m < markers; ++m) {
        Eigen::Vector3d p = marker(frame, m) - root;
        const double pa = p[a], pb = p[b];
        p[a] = cos_t * pa - sin_t * pb;
        p[b] = sin_t * pa + cos_t * pb;
        out.segment<3>(3 * m) = p;
    }
    const double extent = out.cwiseAbs().maxCoeff();
    if (extent > 0.0) out /= extent;
    return out;
}

inline MotionSequence orient_center_scale(const MotionSequence& seq, const PreprocConfig& cfg) {
    MotionSequence out = seq;
    for (int t = 0; t < seq.length(); ++t) out.frames.col(t) = orient_center_scale(Eigen::VectorXd(seq.frames.col(t)), cfg);
    return out;
}

inline int subsample_step(double source_fps, double target_fps) {
    if (!(target_fps > 0.0)) throw Error(ErrorCode::ConfigInvalid, "target fps must be positive");
    if (source_fps + 1e-9 < target_fps)
        throw Error(ErrorCode::UpsampleRequested,
                    "cannot raise " + std::to_string(source_fps) + " fps to " + std::to_string(target_fps));
    return std::max(1, static_cast<int>(std::lround(source_fps / target_fps)));
}

// Keeps frames 0, k, 2k, ... with k = round(source / target).
inline MotionSequence subsample(const MotionSequence& seq, double target_fps) {
    const int step = subsample_step(seq.fps, target_fps);
    const int kept = (seq.length() + step - 1) / step;
    MotionSequence out = seq;
    out.fps = target_fps;
    out.frames.resize(seq.frames.rows(), kept);
    for (int i = 0; i < kept; ++i) out.frames.col(i) = seq.frames.col(i * step);
    return out;
}

inline std::vector<int> window_starts(int length, int width, int offset) {
    if (offset < 1) throw Error(ErrorCode::ConfigInvalid, "window offset must be >= 1");
    if (width == kWholeSequence || length <= width) return {0};
    std::vector<int> starts;
    for (int s = 0; s + width <= length; s += offset) starts.push_back(s);
    return starts;
}

// Sequences shorter than the width come back as one unpadded window.
inline WindowBatch sliding_windows(const MotionSequence& seq, int width, int offset) {
    WindowBatch batch;
    batch.parent_id = seq.id;
    batch.label = seq.label;
    const int len = seq.length();
    const int span = (width == kWholeSequence || len <= width) ? len : width;
    for (int start : window_starts(len, width, offset)) {
        MotionSequence w;
        w.id = seq.id + "#" + std::to_string(start);
        w.frames = seq.frames.middleCols(start, span);
        w.fps = seq.fps;
        w.label = seq.label;
        w.actor = seq.actor;
        w.source = seq.source;
        batch.windows.push_back(std::move(w));
    }
    return batch;
}

inline Eigen::VectorXd corrupt(const Eigen::VectorXd& frame, double sigma, std::mt19937_64& rng) {
    if (sigma < 0.0) throw Error(ErrorCode::ConfigInvalid, "noise sigma must be >= 0");
    if (sigma == 0.0) return frame;
    std::normal_distribution<double> noise(0.0, sigma);
    Eigen::VectorXd out = frame;
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += noise(rng);
    return out;
}

inline Eigen::MatrixXd corrupt(const Eigen::MatrixXd& frames, double sigma, std::mt19937_64& rng) {
    if (sigma < 0.0) throw Error(ErrorCode::ConfigInvalid, "noise sigma must be >= 0");
    if (sigma == 0.0) return frames;
    std::normal_distribution<double> noise(0.0, sigma);
    Eigen::MatrixXd out = frames;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) += noise(rng);
    return out;
}

// Raw capture -> model-ready sequence: decimate, then normalize every frame.
inline MotionSequence preprocess_sequence(const MotionSequence& raw, const PreprocConfig& cfg) {
    return orient_center_scale(subsample(raw, cfg.target_fps), cfg);
}

// ---- window cache ----------------------------------------------------------

inline std::filesystem::path window_cache_path(const std::filesystem::path& dir, const std::string& sequence_id,
                                               const std::string& config_hash) {
    std::string safe;
    for (char c : sequence_id) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return dir / (safe + "-" + config_hash + ".win");
}

inline void save_window_cache(const std::filesystem::path& file, const WindowBatch& batch) {
    io::Writer w;
    w.u32(0x4e49574d); // "MWIN"
    w.str(batch.parent_id);
    w.u32(batch.label ? 1u : 0u);
    w.u32(static_cast<std::uint32_t>(batch.label.value_or(0)));
    w.u32(static_cast<std::uint32_t>(batch.windows.size()));
    for (const auto& win : batch.windows) {
        w.str(win.id);
        w.f64(win.fps);
        w.u32(static_cast<std::uint32_t>(win.frames.rows()));
        w.u32(static_cast<std::uint32_t>(win.frames.cols()));
        for (Eigen::Index i = 0; i < win.frames.size(); ++i) w.f64(win.frames.data()[i]);
    }
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + file.string());
    out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
}

inline WindowBatch load_window_cache(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + file.string());
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    io::Reader r(bytes);
    if (r.u32() != 0x4e49574d) throw Error(ErrorCode::InvalidFile, "not a window cache file");
    WindowBatch batch;
    batch.parent_id = r.str();
    const bool has_label = r.u32() != 0;
    const auto label = static_cast<int>(r.u32());
    if (has_label) batch.label = label;
    const auto n = r.u32();
    for (std::uint32_t k = 0; k < n; ++k) {
        MotionSequence win;
        win.id = r.str();
        win.fps = r.f64();
        const auto rows = r.u32();
        const auto cols = r.u32();
        win.frames.resize(rows, cols);
        for (Eigen::Index i = 0; i < win.frames.size(); ++i) win.frames.data()[i] = r.f64();
        win.label = batch.label;
        batch.windows.push_back(std::move(win));
    }
    return batch;
}

} // namespace mocap
