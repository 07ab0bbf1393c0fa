#pragma once

#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "morphdet/svm_head.hpp"
#include "morphdet/types.hpp"

namespace morphdet {

enum class TextureKind { lbp, bsif };
enum class KeypointKind { sift, surf };

struct TextureDescriptor {
    TextureKind kind;
    std::vector<double> histogram;  // 256 bins, L1-normalized
};

struct KeypointDescriptor {
    KeypointKind kind;
    std::vector<float> aggregated;  // 128 (sift) or 64 (surf), mean over keypoints
};

// fixed luma weights for all grayscale conversions in the baselines
cv::Mat1b to_grayscale(const cv::Mat& bgr);

// 8-neighbor LBP (clockwise from the top-left neighbor, threshold
// neighbor >= center) over interior pixels, 256-bin L1-normalized histogram.
TextureDescriptor lbp_histogram(const cv::Mat& face);

// Pinned 3x3 8-filter ICA bank applied with replicate padding; responses
// thresholded at > 0 assemble the 8-bit code (filter i -> bit i).
struct BsifFilterBank {
    int size = 3;
    int bits = 8;
    std::vector<cv::Mat1d> filters;  // bits entries, size x size each
    std::string sha256;
};

// Throws ValidationError with hash detail when the file is missing or its
// content hash does not match the embedded checksum.
BsifFilterBank load_bsif_bank(const std::string& path);
void save_bsif_bank(const BsifFilterBank& bank, const std::string& path);
std::string bsif_bank_content_hash(const BsifFilterBank& bank);

TextureDescriptor bsif_histogram(const cv::Mat& face, const BsifFilterBank& bank);

// Detects keypoints with default parameters and averages the descriptor
// vectors into one fixed-length feature; an image with no keypoints yields
// the zero vector.
KeypointDescriptor keypoint_vector(const cv::Mat& face, KeypointKind kind);

// SVM score on (feature_trusted - feature_questioned); larger => morph.
// The head must be fitted in difference mode with matching dimension.
double differential_classify(const std::vector<float>& feature_trusted,
                             const std::vector<float>& feature_questioned, const SvmHead& svm);

std::vector<float> texture_feature(const TextureDescriptor& d);

}  // namespace morphdet
