#pragma once

#include <array>
#include <vector>

#include <opencv2/core.hpp>

#include "morphdet/types.hpp"

namespace morphdet {

using Triangle = std::array<int, 3>;  // vertex indices, sorted ascending

// Delaunay triangulation (Bowyer-Watson) over the given points. Duplicate
// points (within 1e-6) are collapsed onto their first occurrence before
// triangulation; triangle indices always refer to the input vector. The
// result is canonical: each triple sorted ascending, list sorted
// lexicographically. Throws ValidationError for fewer than 3 unique points
// or an all-collinear configuration.
std::vector<Triangle> delaunay_triangulate(const std::vector<cv::Point2f>& points);

// Convex hull in counter-clockwise order (monotone chain), returning indices
// into the input vector. Collinear points on the hull boundary are dropped.
std::vector<int> convex_hull_indices(const std::vector<cv::Point2f>& points);

}  // namespace morphdet
