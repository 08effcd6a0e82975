#include <gtest/gtest.h>

#include <bit>
#include <random>

#include "mocap/c3d.hpp"
#include "support/fixtures.hpp"

using namespace mocap;

namespace {

void put_u16(std::vector<std::uint8_t>& b, std::size_t at, std::uint16_t v) {
    b[at] = static_cast<std::uint8_t>(v & 0xff);
    b[at + 1] = static_cast<std::uint8_t>(v >> 8);
}

void put_f32(std::vector<std::uint8_t>& b, std::size_t at, float v) {
    const auto raw = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) b[at + static_cast<std::size_t>(k)] = static_cast<std::uint8_t>((raw >> (8 * k)) & 0xff);
}

// One marker "HEAD", one frame at (1, 2, 3), float-coded, 120 fps; assembled
// byte by byte from the public layout rather than through the writer.
std::vector<std::uint8_t> minimal_file() {
    std::vector<std::uint8_t> b(3 * 512, 0);
    b[0] = 2;
    b[1] = 0x50;
    put_u16(b, 2, 1);    // points
    put_u16(b, 6, 1);    // first frame
    put_u16(b, 8, 1);    // last frame
    put_f32(b, 12, -1.0f);
    put_u16(b, 16, 3);   // data start block
    put_f32(b, 20, 120.0f);

    std::size_t p = 512;
    b[p++] = 0;
    b[p++] = 0x50;
    b[p++] = 1;
    b[p++] = 84;
    // group POINT, id 1
    b[p++] = 5;
    b[p++] = 0xff;
    for (char c : std::string("POINT")) b[p++] = static_cast<std::uint8_t>(c);
    put_u16(b, p, 3);
    p += 2;
    b[p++] = 0;
    // POINT:LABELS, char[4][1]
    b[p++] = 6;
    b[p++] = 1;
    for (char c : std::string("LABELS")) b[p++] = static_cast<std::uint8_t>(c);
    put_u16(b, p, 11);
    p += 2;
    b[p++] = 0xff; // type -1
    b[p++] = 2;
    b[p++] = 4;
    b[p++] = 1;
    for (char c : std::string("HEAD")) b[p++] = static_cast<std::uint8_t>(c);
    b[p++] = 0;

    put_f32(b, 1024, 1.0f);
    put_f32(b, 1028, 2.0f);
    put_f32(b, 1032, 3.0f);
    put_f32(b, 1036, 0.0f);
    return b;
}

void expect_same(const c3d::C3dFile& a, const c3d::C3dFile& b, double tol) {
    ASSERT_EQ(a.point_count, b.point_count);
    ASSERT_EQ(a.frame_count, b.frame_count);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.data_format, b.data_format);
    EXPECT_NEAR(a.frame_rate, b.frame_rate, 1e-6);
    EXPECT_NEAR(a.scale_factor, b.scale_factor, 1e-6);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i)
        for (int k = 0; k < 3; ++k) ASSERT_NEAR(a.points[i][k], b.points[i][k], tol) << "point " << i;
}

} // namespace

TEST(C3dParse, HandAssembledMinimalFile) {
    const auto bytes = minimal_file();
    const auto f = c3d::parse(bytes);
    EXPECT_EQ(f.point_count, 1);
    EXPECT_EQ(f.frame_count, 1);
    EXPECT_DOUBLE_EQ(f.frame_rate, 120.0);
    EXPECT_EQ(f.data_format, c3d::DataFormat::Float);
    ASSERT_EQ(f.labels.size(), 1u);
    EXPECT_EQ(f.labels[0], "HEAD");
    EXPECT_EQ(f.at(0, 0), (c3d::Point{1.0, 2.0, 3.0}));
}

TEST(C3dParse, RejectsWrongKeyByte) {
    auto bytes = minimal_file();
    bytes[1] = 0x51;
    try {
        c3d::parse(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MalformedHeader);
    }
}

TEST(C3dParse, RejectsNonIntelProcessors) {
    for (std::uint8_t proc : {std::uint8_t{85}, std::uint8_t{86}}) {
        auto bytes = minimal_file();
        bytes[512 + 3] = proc;
        try {
            c3d::parse(bytes);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::UnsupportedEncoding);
        }
    }
}

TEST(C3dParse, DetectsTruncation) {
    auto bytes = minimal_file();
    bytes.resize(1024 + 8);
    try {
        c3d::parse(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TruncatedData);
    }
    bytes.resize(100);
    EXPECT_THROW(c3d::parse(bytes), Error);
}

TEST(C3dParse, IntegerDataUsesScaleFactor) {
    auto bytes = minimal_file();
    put_f32(bytes, 12, 0.5f);
    // int16 samples occupy half the space of floats
    put_u16(bytes, 1024, 10);
    put_u16(bytes, 1026, static_cast<std::uint16_t>(-4));
    put_u16(bytes, 1028, 6);
    put_u16(bytes, 1030, 0);
    const auto f = c3d::parse(bytes);
    EXPECT_EQ(f.data_format, c3d::DataFormat::Integer);
    EXPECT_EQ(f.at(0, 0), (c3d::Point{5.0, -2.0, 3.0}));
}

TEST(C3dParse, SkipsAnalogSamplesBetweenFrames) {
    c3d::C3dFile f;
    f.point_count = 1;
    f.frame_count = 2;
    f.frame_rate = 100.0;
    f.labels = {"A"};
    f.points = {{1, 2, 3}, {4, 5, 6}};
    auto bytes = c3d::write(f);
    // Re-layout the data with 2 analog words after each point record.
    const std::size_t data = (static_cast<std::size_t>(bytes[16] | (bytes[17] << 8)) - 1) * 512;
    std::vector<float> words = {1, 2, 3, 0, 9, 9, 4, 5, 6, 0, 9, 9};
    for (std::size_t i = 0; i < words.size(); ++i) put_f32(bytes, data + 4 * i, words[i]);
    put_u16(bytes, 4, 2);
    const auto g = c3d::parse(bytes);
    EXPECT_EQ(g.at(1, 0), (c3d::Point{4, 5, 6}));
}

TEST(C3dWrite, MinimalRoundTrip) {
    const auto f = c3d::parse(minimal_file());
    expect_same(c3d::parse(c3d::write(f)), f, 0.0);
}

TEST(C3dWrite, TwoMarkersTenFrames) {
    c3d::C3dFile f;
    f.point_count = 2;
    f.frame_count = 10;
    f.frame_rate = 120.0;
    f.labels = {"L", "R"};
    for (int t = 0; t < 10; ++t) {
        f.points.push_back({double(t), 0, 1});
        f.points.push_back({0, double(t), 2});
    }
    const auto g = c3d::parse(c3d::write(f));
    EXPECT_EQ(g.frame_count, 10);
    expect_same(g, f, 0.0);
}

TEST(C3dWrite, RejectsInvariantViolations) {
    c3d::C3dFile f;
    f.point_count = 1;
    f.frame_count = 1;
    f.frame_rate = 30;
    f.labels = {};
    f.points = {{0, 0, 0}};
    EXPECT_THROW(c3d::write(f), Error);
}

TEST(C3dWrite, ManyMarkersSpillIntoSecondLabelParameter) {
    c3d::C3dFile f;
    f.point_count = 300;
    f.frame_count = 2;
    f.frame_rate = 60;
    for (int i = 0; i < 300; ++i) f.labels.push_back("P" + std::to_string(i));
    f.points.assign(600, {1.5, -2.5, 3.25});
    expect_same(c3d::parse(c3d::write(f)), f, 0.0);
}

// parse(write(parse(write(f)))) reproduces the first parse for random files
// of both encodings.
TEST(C3dProperty, RoundTripRandomFiles) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const auto format = trial % 2 ? c3d::DataFormat::Integer : c3d::DataFormat::Float;
        const auto f = testkit::random_c3d(rng, format);
        const auto once = c3d::parse(c3d::write(f));
        const auto twice = c3d::parse(c3d::write(once));
        expect_same(twice, once, 1e-6);
        // First pass is lossless for float data and within half a quantum for integers.
        expect_same(once, f, format == c3d::DataFormat::Float ? 0.0 : 0.5 * f.scale_factor + 1e-9);
    }
}
