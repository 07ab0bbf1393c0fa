#pragma once

#include <vector>

#include <opencv2/core.hpp>

namespace morphdet {

// Compact SURF-style keypoint detector/descriptor: box-filter approximated
// Hessian scale space over an integral image, 3x3x3 non-maximum suppression,
// Haar-wavelet orientation assignment and the classic 64-dimensional
// (sum dx, sum |dx|, sum dy, sum |dy|) x 4x4 subregion descriptor. Parameter
// defaults follow the original formulation (3 octaves, 4 layers).
struct SurfKeypoint {
    cv::Point2f pt;
    float scale = 0.f;       // sigma-equivalent
    float orientation = 0.f; // radians
    float response = 0.f;
};

struct SurfParams {
    double hessian_threshold = 60.0;
    int octaves = 3;
    int layers = 4;
    bool upright = false;
};

inline constexpr int kSurfDescriptorDim = 64;

std::vector<SurfKeypoint> surf_detect(const cv::Mat1b& gray, const SurfParams& params = {});

// one 64-d row per keypoint
std::vector<std::vector<float>> surf_describe(const cv::Mat1b& gray,
                                              const std::vector<SurfKeypoint>& keypoints,
                                              const SurfParams& params = {});

}  // namespace morphdet
