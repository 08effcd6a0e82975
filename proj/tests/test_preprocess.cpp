#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "mocap/preprocess.hpp"

using namespace mocap;

namespace {

Eigen::VectorXd random_frame(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    Eigen::VectorXd f(69);
    for (auto& v : f) v = u(rng);
    return f;
}

// Yaw by `angle` about the vertical axis, then shift.
Eigen::VectorXd yaw_and_shift(const Eigen::VectorXd& f, double angle, const Eigen::Vector3d& shift, int up = 2) {
    Eigen::Vector3d axis = Eigen::Vector3d::Zero();
    axis[up] = 1.0;
    const Eigen::Matrix3d r = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    Eigen::VectorXd out(f.size());
    for (int m = 0; m < 23; ++m) out.segment<3>(3 * m) = r * f.segment<3>(3 * m) + shift;
    return out;
}

MotionSequence ramp(int frames, double fps) {
    MotionSequence s;
    s.id = "ramp";
    s.fps = fps;
    s.label = 1;
    s.frames.resize(3, frames);
    for (int t = 0; t < frames; ++t) s.frames.col(t).setConstant(t);
    return s;
}

} // namespace

TEST(OrientCenterScale, CanonicalFrameUnchanged) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    Eigen::VectorXd f(69);
    for (auto& v : f) v = u(rng);
    f.segment<3>(3 * 13) << -0.2, 0.0, 0.1;
    f.segment<3>(3 * 14) << 0.2, 0.0, -0.1;
    f[0] = 1.0; // max |coordinate| is exactly 1
    const auto out = orient_center_scale(f, PreprocConfig{});
    EXPECT_LT((out - f).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(OrientCenterScale, YawAndTranslationInvariant) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> angle(-M_PI, M_PI), shift(-5, 5);
    const PreprocConfig cfg;
    double worst = 0;
    for (int i = 0; i < 200; ++i) {
        const auto f = random_frame(rng);
        const auto g = yaw_and_shift(f, angle(rng), {shift(rng), shift(rng), shift(rng)});
        worst = std::max(worst, (orient_center_scale(f, cfg) - orient_center_scale(g, cfg)).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(OrientCenterScale, OtherUpAxis) {
    std::mt19937_64 rng(3);
    PreprocConfig cfg;
    cfg.up_axis = 1;
    for (int i = 0; i < 20; ++i) {
        const auto f = random_frame(rng);
        const auto g = yaw_and_shift(f, 0.3 * i, {1.0, -2.0, 0.5}, 1);
        EXPECT_LT((orient_center_scale(f, cfg) - orient_center_scale(g, cfg)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(OrientCenterScale, RootAtOriginAndBounded) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        const auto out = orient_center_scale(random_frame(rng), PreprocConfig{});
        const Eigen::Vector3d root = 0.5 * (out.segment<3>(39) + out.segment<3>(42));
        EXPECT_LT(root.norm(), 1e-9);
        EXPECT_LE(out.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
        EXPECT_NEAR(out.cwiseAbs().maxCoeff(), 1.0, 1e-12);
        // hip axis now points along +x in the horizontal plane
        const Eigen::Vector3d axis = out.segment<3>(42) - out.segment<3>(39);
        EXPECT_NEAR(axis.y(), 0.0, 1e-12);
        EXPECT_GT(axis.x(), 0.0);
    }
}

TEST(OrientCenterScale, PelvisTiltSurvives) {
    // cartwheel-like frame: the hip axis is steep, not parallel to the ground
    std::mt19937_64 rng(5);
    auto f = random_frame(rng);
    f.segment<3>(39) << 0.3, 0.4, 1.0;
    f.segment<3>(42) << 0.45, 0.6, 1.5; // horizontal 0.25, vertical 0.5
    const double tilt_in = std::atan2(0.5, 0.25);
    const auto g = yaw_and_shift(f, 1.1, {0.2, 0.3, 0.0});
    for (const auto& frame : {f, g}) {
        const auto out = orient_center_scale(frame, PreprocConfig{});
        const Eigen::Vector3d axis = out.segment<3>(42) - out.segment<3>(39);
        EXPECT_NEAR(std::atan2(axis.z(), std::hypot(axis.x(), axis.y())), tilt_in, 1e-12);
    }
}

TEST(OrientCenterScale, Errors) {
    std::mt19937_64 rng(6);
    auto f = random_frame(rng);
    f.segment<3>(42) = f.segment<3>(39);
    try {
        orient_center_scale(f, PreprocConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateHips);
    }
    EXPECT_THROW(orient_center_scale(Eigen::VectorXd::Ones(68), PreprocConfig{}), Error);
    PreprocConfig bad;
    bad.left_hip = 40;
    EXPECT_THROW(orient_center_scale(random_frame(rng), bad), Error);
}

TEST(Subsample, DecimationIndices) {
    const auto a = subsample(ramp(120, 120), 30);
    EXPECT_EQ(a.length(), 30);
    EXPECT_DOUBLE_EQ(a.fps, 30);
    const auto b = subsample(ramp(121, 120), 30);
    ASSERT_EQ(b.length(), 31);
    for (int i = 0; i < 31; ++i) EXPECT_DOUBLE_EQ(b.frames(0, i), 4.0 * i);
    const auto same = subsample(ramp(17, 30), 30);
    EXPECT_EQ(same.frames, ramp(17, 30).frames);
    // 100 fps -> every 3rd frame
    const auto c = subsample(ramp(10, 100), 30);
    ASSERT_EQ(c.length(), 4);
    EXPECT_DOUBLE_EQ(c.frames(0, 3), 9.0);
}

TEST(Subsample, UpsampleRejected) {
    try {
        subsample(ramp(10, 24), 30);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UpsampleRequested);
    }
}

TEST(Windows, SpecifiedStarts) {
    const auto b = sliding_windows(ramp(90, 30), 30, 15);
    ASSERT_EQ(b.windows.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(b.windows[static_cast<std::size_t>(i)].length(), 30);
        EXPECT_DOUBLE_EQ(b.windows[static_cast<std::size_t>(i)].frames(0, 0), 15.0 * i);
    }
    EXPECT_EQ(b.parent_id, "ramp");
    EXPECT_EQ(b.label, 1);
    const auto one = sliding_windows(ramp(30, 30), 30, 15);
    ASSERT_EQ(one.windows.size(), 1u);
    EXPECT_EQ(one.windows[0].frames, ramp(30, 30).frames);
    const auto all = sliding_windows(ramp(77, 30), kWholeSequence, 15);
    ASSERT_EQ(all.windows.size(), 1u);
    EXPECT_EQ(all.windows[0].length(), 77);
    const auto shorter = sliding_windows(ramp(12, 30), 30, 15);
    ASSERT_EQ(shorter.windows.size(), 1u);
    EXPECT_EQ(shorter.windows[0].length(), 12);
    EXPECT_THROW(sliding_windows(ramp(12, 30), 5, 0), Error);
}

TEST(Windows, CountFormulaAndCoverage) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> len(1, 300), width(1, 60), off(1, 70);
    for (int trial = 0; trial < 500; ++trial) {
        const int t = len(rng), w = width(rng), o = off(rng);
        const auto b = sliding_windows(ramp(t, 30), w, o);
        const std::size_t expected = t < w ? 1u : static_cast<std::size_t>((t - w) / o + 1);
        ASSERT_EQ(b.windows.size(), expected) << t << " " << w << " " << o;
        double previous = -1;
        std::set<int> covered;
        for (const auto& win : b.windows) {
            EXPECT_EQ(win.length(), std::min(t, w));
            EXPECT_GT(win.frames(0, 0), previous);
            previous = win.frames(0, 0);
            for (int k = 0; k < win.length(); ++k) covered.insert(static_cast<int>(win.frames(0, k)));
        }
        // every frame is covered when windows overlap or abut and the last window reaches the end
        if (o <= w && (t < w || (t - w) % o == 0)) EXPECT_EQ(covered.size(), static_cast<std::size_t>(t));
        if (o <= w) {
            // without reaching the end, coverage is the prefix up to the last window
            const int reach = t < w ? t : ((t - w) / o) * o + w;
            EXPECT_EQ(covered.size(), static_cast<std::size_t>(reach));
        }
    }
}

TEST(Corrupt, Statistics) {
    std::mt19937_64 rng(8);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    const int n = 100000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double v = corrupt(zero, 0.05, rng)[0];
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    EXPECT_LT(std::abs(mean), 0.001);
    EXPECT_GE(sd, 0.049);
    EXPECT_LE(sd, 0.051);
}

TEST(Corrupt, IdentityAndReproducible) {
    std::mt19937_64 rng(9), a(10), b(10);
    const auto f = random_frame(rng);
    EXPECT_EQ(corrupt(f, 0.0, rng), f);
    EXPECT_EQ(corrupt(f, 0.05, a), corrupt(f, 0.05, b));
    const Eigen::MatrixXd m = Eigen::MatrixXd::Random(69, 5);
    std::mt19937_64 c(11), d(11);
    EXPECT_EQ(corrupt(m, 0.05, c), corrupt(m, 0.05, d));
    EXPECT_NE(corrupt(m, 0.05, c), m);
    EXPECT_THROW(corrupt(f, -0.1, rng), Error);
}

TEST(WindowCache, RoundTripAndKeying) {
    const auto dir = std::filesystem::temp_directory_path() / "mocap_window_cache_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto s = ramp(50, 30);
    s.actor = "tr";
    const auto batch = sliding_windows(s, 20, 10);
    const auto path = window_cache_path(dir, s.id, "abc123");
    EXPECT_NE(path.filename().string().find("ramp"), std::string::npos);
    EXPECT_NE(path.filename().string().find("abc123"), std::string::npos);
    EXPECT_NE(window_cache_path(dir, s.id, "abc124"), path);
    save_window_cache(path, batch);
    const auto back = load_window_cache(path);
    ASSERT_EQ(back.windows.size(), batch.windows.size());
    EXPECT_EQ(back.parent_id, batch.parent_id);
    EXPECT_EQ(back.label, batch.label);
    for (std::size_t i = 0; i < batch.windows.size(); ++i) EXPECT_EQ(back.windows[i].frames, batch.windows[i].frames);
    std::ofstream(dir / "junk.win") << "junk";
    EXPECT_THROW(load_window_cache(dir / "junk.win"), Error);
    EXPECT_THROW(load_window_cache(dir / "missing.win"), Error);
}

TEST(Pipeline, DecimatesThenNormalizes) {
    std::mt19937_64 rng(12);
    MotionSequence raw;
    raw.fps = 120;
    raw.frames.resize(69, 9);
    for (int t = 0; t < 9; ++t) raw.frames.col(t) = random_frame(rng);
    const PreprocConfig cfg;
    const auto out = preprocess_sequence(raw, cfg);
    ASSERT_EQ(out.length(), 3);
    for (int i = 0; i < 3; ++i)
        EXPECT_EQ(Eigen::VectorXd(out.frames.col(i)), orient_center_scale(Eigen::VectorXd(raw.frames.col(4 * i)), cfg));
}
