#pragma once

#include <random>
#include <string>
#include <vector>

#include "mocap/c3d.hpp"

namespace mocap::testkit {

// Random but valid C3D content. Integer-coded files keep coordinates inside
// the int16 range at the chosen scale; float-coded files use float-exact values.
inline c3d::C3dFile random_c3d(std::mt19937_64& rng, c3d::DataFormat format) {
    std::uniform_int_distribution<int> points(1, 40), frames(1, 60);
    std::uniform_real_distribution<double> scale_dist(0.05, 2.0), rate_dist(24.0, 240.0);
    c3d::C3dFile f;
    f.point_count = points(rng);
    f.frame_count = frames(rng);
    f.frame_rate = static_cast<float>(rate_dist(rng));
    f.data_format = format;
    f.scale_factor = format == c3d::DataFormat::Integer ? static_cast<float>(scale_dist(rng)) : 1.0;
    for (int i = 0; i < f.point_count; ++i) f.labels.push_back("MK" + std::to_string(i) + std::string(static_cast<std::size_t>(i % 5), 'X'));
    std::uniform_real_distribution<double> coord(-1500.0, 1500.0);
    const double limit = 30000.0 * f.scale_factor;
    std::uniform_real_distribution<double> coord_int(-limit, limit);
    f.points.resize(static_cast<std::size_t>(f.point_count * f.frame_count));
    for (auto& p : f.points)
        for (auto& v : p) v = format == c3d::DataFormat::Float ? static_cast<double>(static_cast<float>(coord(rng))) : coord_int(rng);
    return f;
}

} // namespace mocap::testkit
