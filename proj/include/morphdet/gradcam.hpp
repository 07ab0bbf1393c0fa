#pragma once

#include <string>
#include <utility>

#include <opencv2/core.hpp>

#include "morphdet/embedder.hpp"
#include "morphdet/face_prep.hpp"
#include "morphdet/nn.hpp"

namespace morphdet {

// Lower-face rows excluded from CAM comparisons by default (expression
// variation around mouth/chin would dominate otherwise).
inline constexpr double kCamLowerExclusion = 0.45;

struct ActivationMap {
    cv::Mat1f grid;       // layer-native H x W, min-max scaled into [0,1]
    cv::Mat1f upsampled;  // bilinear 160x160 copy for visualization
    std::string layer_tag;
    ImageRef face_ref;
};

// Gradient-weighted activation maps of the pair distance for both towers:
// per-channel weights are the spatial mean of d(distance)/d(feature map),
// the map is the rectified weighted channel sum. A zero-distance pair yields
// all-zero maps by convention. layer_tag must name a conv block of the
// backbone ("block1".."block4").
std::pair<ActivationMap, ActivationMap> grad_cam_pair(const SmallCnn& net,
                                                      const AlignedFace& face_a,
                                                      const AlignedFace& face_b,
                                                      const std::string& layer_tag,
                                                      bool normalize_embeddings = true);

// Mean absolute per-pixel difference over the retained upper rows
// (rows r with r < (1 - exclude_lower_fraction) * H).
double cam_distance(const ActivationMap& map_a, const ActivationMap& map_b,
                    double exclude_lower_fraction);

// Heatmap overlay for inspection.
void render_cam_overlay(const cv::Mat& face_pixels, const ActivationMap& map,
                        const std::string& png_path);

}  // namespace morphdet
