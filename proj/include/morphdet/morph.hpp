#pragma once

#include <cstdint>
#include <string>

#include <opencv2/core.hpp>

#include "morphdet/landmarks.hpp"

namespace morphdet {

enum class MorphMode { complete, splicing };

struct MorphRecipe {
    std::string source_a;  // subject id of source A
    std::string source_b;  // subject id of source B
    double alpha = 0.5;
    MorphMode mode = MorphMode::complete;
    char splice_recipient = 'a';  // 'a' or 'b', splicing mode only
    uint64_t seed = 0;

    void validate() const;
};

// Feather applied outside the splice hull: Gaussian falloff, exactly zero
// beyond kSpliceFeatherRadius pixels from the hull.
inline constexpr double kSpliceFeatherRadius = 11.0;
inline constexpr double kSpliceFeatherSigma = kSpliceFeatherRadius / 3.0;

// Landmark-based morph. Both sources are warped triangle-by-triangle to the
// alpha-averaged landmark positions (68 points plus 8 frame anchors, one
// Delaunay triangulation computed on the averaged set and reused for both
// sources), then alpha-blended. Float version keeps full precision; the
// 8-bit version quantizes round-half-up at the final blend only.
cv::Mat warp_blend_f(const cv::Mat& img_a, const LandmarkSet& lm_a, const cv::Mat& img_b,
                     const LandmarkSet& lm_b, double alpha);
cv::Mat warp_blend(const cv::Mat& img_a, const LandmarkSet& lm_a, const cv::Mat& img_b,
                   const LandmarkSet& lm_b, double alpha);

// Landmarks of the morphed output: the alpha-average of the source sets.
LandmarkSet average_landmarks(const LandmarkSet& lm_a, const LandmarkSet& lm_b, double alpha);

// Splices the inner-face region of a complete morph into the recipient
// image: inside the convex hull of the recipient's inner-face landmarks the
// morph pixels are taken verbatim, beyond the feather band the recipient is
// preserved bit-exactly, with a Gaussian falloff in between.
cv::Mat splice_morph(const cv::Mat& complete_morph, const cv::Mat& recipient,
                     const LandmarkSet& recipient_lm);

// Splice weight map in [0,1] (1 inside the hull, 0 beyond the feather band);
// exposed so tests can check the band geometry directly.
cv::Mat splice_weight_map(const LandmarkSet& recipient_lm);

}  // namespace morphdet
