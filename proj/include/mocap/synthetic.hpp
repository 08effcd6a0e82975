#pragma once

// Synthetic "gesture" marker clouds for desk-scale experiments.
//
// A fixed 23-marker standing body (default marker order, z up, facing +y,
// right side on +x) is animated by one of six periodic motions. Each
// sequence draws its own amplitude, frequency, phase, yaw, floor position
// and marker jitter; each actor has a fixed body scale. `separation` scales
// the class-specific motion against a shared torso sway, so small values
// give a harder task.

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mocap/error.hpp"
#include "mocap/markers.hpp"
#include "mocap/sequence.hpp"

namespace mocap::synth {

inline constexpr int kMotionCount = 6;
inline const char* motion_name(int k) {
    static const char* names[kMotionCount] = {"left_wave", "squat", "right_wave", "march", "twist", "bow"};
    return names[k % kMotionCount];
}

struct SynthConfig {
    int classes = 3;
    double fps = 120.0;
    double min_seconds = 2.0;
    double max_seconds = 3.0;
    double marker_noise = 0.005; // metres
    double separation = 1.0;
    double sway = 0.04;          // shared lateral torso sway, metres
    double max_translation = 2.0;
};

// Standing pose in metres.
inline std::array<Eigen::Vector3d, kMarkerCount> rest_pose() {
    return {{
        {-0.07, 0.05, 1.70}, {0.07, 0.05, 1.70},   // LFHD RFHD
        {0.00, -0.06, 1.50}, {0.00, 0.08, 1.45},   // C7 CLAV
        {0.00, 0.10, 1.28},                        // STRN
        {-0.19, 0.00, 1.45}, {-0.21, 0.00, 1.17},  // LSHO LELB
        {-0.22, 0.00, 0.93}, {-0.22, 0.00, 0.85},  // LWRA LFIN
        {0.19, 0.00, 1.45},  {0.21, 0.00, 1.17},   // RSHO RELB
        {0.22, 0.00, 0.93},  {0.22, 0.00, 0.85},   // RWRA RFIN
        {-0.12, 0.08, 1.00}, {0.12, 0.08, 1.00},   // LFWT RFWT
        {-0.10, -0.10, 1.02}, {0.10, -0.10, 1.02}, // LBWT RBWT
        {-0.10, 0.03, 0.52}, {-0.10, -0.02, 0.08}, // LKNE LANK
        {-0.10, 0.13, 0.02},                       // LTOE
        {0.10, 0.03, 0.52},  {0.10, -0.02, 0.08},  // RKNE RANK
        {0.10, 0.13, 0.02},                        // RTOE
    }};
}

namespace detail {

enum : int { LFHD, RFHD, C7, CLAV, STRN, LSHO, LELB, LWRA, LFIN, RSHO, RELB, RWRA, RFIN,
             LFWT, RFWT, LBWT, RBWT, LKNE, LANK, LTOE, RKNE, RANK, RTOE };

inline constexpr int kUpperBody[] = {LFHD, RFHD, C7, CLAV, STRN, LSHO, LELB, LWRA, LFIN, RSHO, RELB, RWRA, RFIN};

// Rotates the arm below `shoulder` sideways by `angle` in the frontal plane.
inline void raise_arm(std::array<Eigen::Vector3d, kMarkerCount>& p, int shoulder, double side, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    for (int m = shoulder + 1; m <= shoulder + 3; ++m) {
        const Eigen::Vector3d r = p[m] - p[shoulder];
        p[m] = p[shoulder] + Eigen::Vector3d(c * r.x() - side * s * r.z(), r.y(), side * s * r.x() + c * r.z());
    }
}

inline void rotate_about(std::array<Eigen::Vector3d, kMarkerCount>& p, const Eigen::Vector3d& centre,
                         const Eigen::Matrix3d& rot) {
    for (int m : kUpperBody) p[m] = centre + rot * (p[m] - centre);
}

} // namespace detail

struct MotionParams {
    double amplitude = 1.0;
    double frequency = 1.0; // Hz
    double phase = 0.0;
};

// Body pose at time `t` seconds for motion `k`, before scale/yaw/translation.
inline std::array<Eigen::Vector3d, kMarkerCount> pose_at(int k, double t, const MotionParams& mp, double separation,
                                                          double sway) {
    using namespace detail;
    auto p = rest_pose();
    const double w = 2.0 * M_PI * mp.frequency * t + mp.phase;
    const double a = mp.amplitude * separation;
    switch (k % kMotionCount) {
    case 0: // raise and wave the left arm
        raise_arm(p, LSHO, -1.0, a * (1.3 + 0.5 * std::sin(w)));
        break;
    case 2:
        raise_arm(p, RSHO, 1.0, a * (1.3 + 0.5 * std::sin(w)));
        break;
    case 1: { // squat
        const double d = a * 0.28 * 0.5 * (1.0 - std::cos(w));
        for (int m = 0; m < kMarkerCount; ++m) {
            if (m == LANK || m == LTOE || m == RANK || m == RTOE) continue;
            p[m].z() -= d;
        }
        p[LKNE].y() += 0.6 * d;
        p[RKNE].y() += 0.6 * d;
        break;
    }
    case 3: { // march on the spot
        const double hl = a * 0.25 * std::max(0.0, std::sin(w));
        const double hr = a * 0.25 * std::max(0.0, -std::sin(w));
        for (auto [knee, h] : {std::pair{LKNE, hl}, std::pair{RKNE, hr}}) {
            p[knee].z() += h;
            p[knee].y() += 0.8 * h;
            for (int m = knee + 1; m <= knee + 2; ++m) {
                p[m].z() += h;
                p[m].y() += 0.3 * h;
            }
        }
        break;
    }
    case 4: { // twist the upper body about the vertical
        const double ang = a * 0.6 * std::sin(w);
        rotate_about(p, 0.5 * (p[LFWT] + p[RFWT]), Eigen::AngleAxisd(ang, Eigen::Vector3d::UnitZ()).toRotationMatrix());
        break;
    }
    case 5: { // bow forward
        const double ang = a * 0.7 * 0.5 * (1.0 - std::cos(w));
        rotate_about(p, 0.5 * (p[LFWT] + p[RFWT]), Eigen::AngleAxisd(ang, Eigen::Vector3d::UnitX()).toRotationMatrix());
        break;
    }
    }
    const double s = sway * std::sin(0.5 * w + 1.0);
    for (int m : kUpperBody) p[m].x() += s;
    return p;
}

inline MotionSequence synth_gesture(int motion, std::optional<int> label, const std::string& id, const std::string& actor,
                                    double body_scale, const SynthConfig& cfg, std::mt19937_64& rng) {
    if (cfg.fps <= 0 || cfg.min_seconds <= 0 || cfg.max_seconds < cfg.min_seconds)
        throw Error(ErrorCode::ConfigInvalid, "synthetic duration/fps invalid");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, cfg.marker_noise);

    const double seconds = cfg.min_seconds + (cfg.max_seconds - cfg.min_seconds) * unit(rng);
    const int frames = std::max(2, static_cast<int>(std::lround(seconds * cfg.fps)));
    MotionParams mp;
    mp.amplitude = 0.7 + 0.3 * unit(rng);
    mp.frequency = 0.8 + 0.6 * unit(rng);
    mp.phase = 2.0 * M_PI * unit(rng);
    const double yaw = 2.0 * M_PI * unit(rng);
    const Eigen::Vector3d shift(cfg.max_translation * (2 * unit(rng) - 1), cfg.max_translation * (2 * unit(rng) - 1), 0.0);
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();

    MotionSequence seq;
    seq.id = id;
    seq.fps = cfg.fps;
    seq.label = label;
    seq.actor = actor;
    seq.source = "synthetic:" + std::string(motion_name(motion));
    seq.frames.resize(kFrameDim, frames);
    for (int f = 0; f < frames; ++f) {
        const auto pose = pose_at(motion, f / cfg.fps, mp, cfg.separation, cfg.sway);
        for (int m = 0; m < kMarkerCount; ++m) {
            Eigen::Vector3d q = rot * (body_scale * pose[m]) + shift;
            for (int d = 0; d < 3; ++d) seq.frames(3 * m + d, f) = q[d] + (cfg.marker_noise > 0 ? jitter(rng) : 0.0);
        }
    }
    return seq;
}

// `count` sequences with classes assigned round-robin and actors cycled.
// Actor body scales are drawn first, in actor order.
inline std::vector<MotionSequence> synth_dataset(const SynthConfig& cfg, int count, const std::vector<std::string>& actors,
                                                 std::mt19937_64& rng, bool labeled = true) {
    if (cfg.classes < 1 || cfg.classes > kMotionCount)
        throw Error(ErrorCode::ConfigInvalid, "synthetic classes must lie in [1, 6]");
    if (actors.empty()) throw Error(ErrorCode::ConfigInvalid, "synthetic dataset needs at least one actor");
    std::uniform_real_distribution<double> scale(0.85, 1.15);
    std::vector<double> scales;
    for (std::size_t i = 0; i < actors.size(); ++i) scales.push_back(scale(rng));
    std::vector<MotionSequence> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int label = i % cfg.classes;
        const std::size_t a = static_cast<std::size_t>(i) % actors.size();
        const std::string id = actors[a] + "_" + std::to_string(i);
        out.push_back(synth_gesture(label, labeled ? std::optional<int>(label) : std::nullopt, id, actors[a], scales[a], cfg, rng));
    }
    return out;
}

} // namespace mocap::synth
