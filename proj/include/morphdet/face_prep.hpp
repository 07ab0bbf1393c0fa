#pragma once

#include <array>
#include <string>

#include <opencv2/core.hpp>

#include "morphdet/face_analysis.hpp"
#include "morphdet/types.hpp"

namespace morphdet {

inline constexpr int kAlignedSize = 160;

// Canonical five-point template for a 160x160 crop: the widely used
// 112x112 arrangement (eye centers, nose tip, mouth corners) scaled by
// 160/112. Pinned here so alignment is reproducible.
const std::array<cv::Point2f, 5>& canonical_five_point_template();

struct AlignedFace {
    cv::Mat pixels;        // exactly 160x160, 8UC3
    ImageRef source;
    cv::Matx23d transform; // similarity mapping source landmarks onto the template

    void validate() const;  // size + invertibility of the linear part
};

// Least-squares similarity transform (rotation+scale+translation) mapping
// src points onto dst points.
cv::Matx23d similarity_transform(const std::array<cv::Point2f, 5>& src,
                                 const std::array<cv::Point2f, 5>& dst);

// Warps the face into the canonical 160x160 crop with bicubic resampling;
// out-of-frame regions are filled with black. Throws ValidationError for a
// degenerate (collinear) landmark configuration.
AlignedFace align_face(const cv::Mat& image, const FaceDetection& detection,
                       const ImageRef& source = {});

// detect + align in one step
AlignedFace prepare_face(const cv::Mat& image, const FaceDetector& detector,
                         const ImageRef& source = {});

cv::Matx23d invert_affine(const cv::Matx23d& m);

void save_transform_json(const cv::Matx23d& m, const std::string& path);

}  // namespace morphdet
