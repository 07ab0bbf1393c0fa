#include "morphdet/face_prep.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Dense>
#include <json.hpp>
#include <opencv2/imgproc.hpp>

namespace morphdet {

const std::array<cv::Point2f, 5>& canonical_five_point_template() {
    static const std::array<cv::Point2f, 5> tmpl = [] {
        // reference arrangement for 112x112 crops
        const std::array<cv::Point2f, 5> base = {{{38.2946f, 51.6963f},
                                                  {73.5318f, 51.5014f},
                                                  {56.0252f, 71.7366f},
                                                  {41.5493f, 92.3655f},
                                                  {70.7299f, 92.2041f}}};
        std::array<cv::Point2f, 5> scaled;
        const float s = float(kAlignedSize) / 112.0f;
        for (size_t i = 0; i < 5; ++i) scaled[i] = {base[i].x * s, base[i].y * s};
        return scaled;
    }();
    return tmpl;
}

void AlignedFace::validate() const {
    if (pixels.rows != kAlignedSize || pixels.cols != kAlignedSize || pixels.type() != CV_8UC3)
        throw ValidationError("aligned face must be exactly 160x160x3");
    const double det = transform(0, 0) * transform(1, 1) - transform(0, 1) * transform(1, 0);
    if (std::abs(det) < 1e-12)
        throw ValidationError("aligned face transform is singular");
}

cv::Matx23d similarity_transform(const std::array<cv::Point2f, 5>& src,
                                 const std::array<cv::Point2f, 5>& dst) {
    // Umeyama closed-form similarity estimate
    Eigen::Matrix<double, 2, 5> X, Y;
    for (int i = 0; i < 5; ++i) {
        X(0, i) = src[size_t(i)].x;
        X(1, i) = src[size_t(i)].y;
        Y(0, i) = dst[size_t(i)].x;
        Y(1, i) = dst[size_t(i)].y;
    }
    const Eigen::Vector2d mx = X.rowwise().mean();
    const Eigen::Vector2d my = Y.rowwise().mean();
    const Eigen::Matrix<double, 2, 5> Xd = X.colwise() - mx;
    const Eigen::Matrix<double, 2, 5> Yd = Y.colwise() - my;

    const double var_x = Xd.squaredNorm() / 5.0;
    if (var_x < 1e-12) throw ValidationError("similarity transform: source points coincide");

    const Eigen::Matrix2d sigma = Yd * Xd.transpose() / 5.0;
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix2d S = Eigen::Matrix2d::Identity();
    if (sigma.determinant() < 0.0 ||
        (std::abs(sigma.determinant()) < 1e-15 &&
         svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0))
        S(1, 1) = -1.0;
    const Eigen::Matrix2d R = svd.matrixU() * S * svd.matrixV().transpose();
    const double scale = (svd.singularValues().asDiagonal() * S).trace() / var_x;
    const Eigen::Vector2d t = my - scale * R * mx;

    return {scale * R(0, 0), scale * R(0, 1), t(0),
            scale * R(1, 0), scale * R(1, 1), t(1)};
}

AlignedFace align_face(const cv::Mat& image, const FaceDetection& detection,
                       const ImageRef& source) {
    if (image.empty() || image.type() != CV_8UC3)
        throw ValidationError("align_face expects an 8-bit 3-channel image");

    // reject a collinear landmark configuration
    {
        Eigen::Matrix<double, 5, 2> P;
        for (int i = 0; i < 5; ++i) {
            P(i, 0) = detection.landmarks5[size_t(i)].x;
            P(i, 1) = detection.landmarks5[size_t(i)].y;
        }
        const Eigen::Matrix<double, 5, 2> D = P.rowwise() - P.colwise().mean();
        Eigen::JacobiSVD<Eigen::Matrix<double, 5, 2>> svd(D);
        const double smax = svd.singularValues()(0);
        const double smin = svd.singularValues()(1);
        if (smax < 1e-9 || smin / smax < 1e-6)
            throw ValidationError("degenerate landmark configuration (collinear)");
    }

    AlignedFace out;
    out.source = source;
    out.transform = similarity_transform(detection.landmarks5, canonical_five_point_template());
    cv::Mat m(out.transform);
    cv::warpAffine(image, out.pixels, m, {kAlignedSize, kAlignedSize}, cv::INTER_CUBIC,
                   cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
    out.validate();
    return out;
}

AlignedFace prepare_face(const cv::Mat& image, const FaceDetector& detector,
                         const ImageRef& source) {
    const FaceDetection det = detect_face(image, detector, source.path);
    return align_face(image, det, source);
}

cv::Matx23d invert_affine(const cv::Matx23d& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    if (std::abs(det) < 1e-15) throw ValidationError("affine transform not invertible");
    const double ia = m(1, 1) / det, ib = -m(0, 1) / det;
    const double ic = -m(1, 0) / det, id = m(0, 0) / det;
    return {ia, ib, -(ia * m(0, 2) + ib * m(1, 2)),
            ic, id, -(ic * m(0, 2) + id * m(1, 2))};
}

void save_transform_json(const cv::Matx23d& m, const std::string& path) {
    nlohmann::json j;
    j["transform"] = {{m(0, 0), m(0, 1), m(0, 2)}, {m(1, 0), m(1, 1), m(1, 2)}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write transform sidecar: " + path);
    out << j.dump() << "\n";
}

}  // namespace morphdet
