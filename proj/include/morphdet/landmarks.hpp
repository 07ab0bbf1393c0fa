#pragma once

#include <array>
#include <vector>

#include <opencv2/core.hpp>

#include "morphdet/types.hpp"

namespace morphdet {

// 68-point facial landmark convention (viewer perspective):
//   0-16  jawline, left ear to right ear
//   17-21 left eyebrow, 22-26 right eyebrow
//   27-30 nose bridge, 31-35 lower nose
//   36-41 left eye, 42-47 right eye
//   48-59 outer lip, 60-67 inner lip
inline constexpr int kLandmarkCount = 68;

// Index ranges
inline constexpr int kJawBegin = 0, kJawEnd = 17;
inline constexpr int kInnerFaceBegin = 17;  // everything but the jawline

struct LandmarkSet {
    std::vector<cv::Point2f> points;  // exactly kLandmarkCount entries
    cv::Size image_size;

    void validate() const;     // throws ValidationError on count mismatch
    void clamp_to_bounds();    // clamps points into [0,w-1]x[0,h-1]
};

// Index remapping under a horizontal flip of the image.
const std::array<int, kLandmarkCount>& mirror_index_map();

// Applies x -> (w-1) - x and the mirror index remapping.
LandmarkSet mirror_landmarks(const LandmarkSet& lm);

// Five fiducials derived from the 68 points: left eye center, right eye
// center, nose tip, left mouth corner, right mouth corner.
std::array<cv::Point2f, 5> five_points_from_68(const LandmarkSet& lm);

// Eight frame anchors (corners plus edge midpoints) appended to a landmark
// set so that the morph triangulation covers the whole frame.
std::vector<cv::Point2f> border_anchor_points(cv::Size size);

}  // namespace morphdet
