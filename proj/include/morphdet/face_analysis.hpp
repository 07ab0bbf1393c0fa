#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "morphdet/landmarks.hpp"
#include "morphdet/types.hpp"

namespace morphdet {

struct FaceDetection {
    cv::Rect2d bounding_box;
    // left eye center, right eye center, nose tip, left/right mouth corner
    std::array<cv::Point2f, 5> landmarks5;
    double confidence = 0.0;
};

// Adapter contract around a five-point face detector. Implementations must
// be deterministic for fixed weights/parameters and usable from multiple
// threads for read-only inference.
class FaceDetector {
public:
    virtual ~FaceDetector() = default;
    virtual std::vector<FaceDetection> detect_all(const cv::Mat& image) const = 0;
    virtual std::string name() const = 0;
};

// Adapter contract around a 68-point landmarker.
class FaceLandmarker {
public:
    virtual ~FaceLandmarker() = default;
    virtual LandmarkSet locate(const cv::Mat& image) const = 0;
    virtual std::string name() const = 0;
};

// Highest-confidence detection; throws NoFaceError when none is found,
// carrying source_hint (typically the image path) in the message.
FaceDetection detect_face(const cv::Mat& image, const FaceDetector& detector,
                          const std::string& source_hint = "");

// Model-free detector for clean portrait imagery (the synthetic testbed and
// similar). Finds head blobs against the backdrop, locates irises, mouth and
// nostrils by color/shape analysis, and searches the four cardinal
// orientations. A production deployment would register an external CNN
// detector behind the same interface.
class GeometricFaceDetector : public FaceDetector {
public:
    std::vector<FaceDetection> detect_all(const cv::Mat& image) const override;
    std::string name() const override { return "geometric"; }
};

class GeometricLandmarker : public FaceLandmarker {
public:
    LandmarkSet locate(const cv::Mat& image) const override;
    std::string name() const override { return "geometric"; }
};

// Registry lookup; throws ValidationError for an unknown backend name and
// lists the available ones.
const FaceDetector& face_detector(const std::string& backend);
const FaceLandmarker& face_landmarker(const std::string& backend);

}  // namespace morphdet
