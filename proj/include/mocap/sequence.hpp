#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

namespace mocap {

// A time-ordered marker cloud: one column per frame, marker-major (x, y, z) rows.
struct MotionSequence {
    std::string id;
    Eigen::MatrixXd frames;
    double fps = 0.0;
    std::optional<int> label;
    std::optional<std::string> actor;
    std::string source;

    int length() const { return static_cast<int>(frames.cols()); }
    int dim() const { return static_cast<int>(frames.rows()); }
};

} // namespace mocap
