#include "morphdet/face_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/imgproc.hpp>

namespace morphdet {

namespace {

constexpr double kDeg = CV_PI / 180.0;

double luma(const cv::Vec3b& bgr) {
    return 0.114 * bgr[0] + 0.587 * bgr[1] + 0.299 * bgr[2];
}

// quarter-turn mapping between the original frame and the analysis frame
cv::Point2d unrotate_point(const cv::Point2d& p, int k, cv::Size original) {
    switch (k & 3) {
        case 0: return p;
        case 1: return {p.y, double(original.height - 1) - p.x};          // was ROTATE_90_CW
        case 2:
            return {double(original.width - 1) - p.x, double(original.height - 1) - p.y};
        default: return {double(original.width - 1) - p.y, p.x};          // was ROTATE_90_CCW
    }
}

struct Blob {
    cv::Rect bbox;
    int area = 0;
    cv::Point2d centroid;
};

std::vector<Blob> blobs_from_mask(const cv::Mat1b& mask, int min_area) {
    cv::Mat labels, stats, centroids;
    const int n = cv::connectedComponentsWithStats(mask, labels, stats, centroids, 8, CV_32S);
    std::vector<Blob> out;
    for (int i = 1; i < n; ++i) {
        Blob b;
        b.area = stats.at<int>(i, cv::CC_STAT_AREA);
        if (b.area < min_area) continue;
        b.bbox = {stats.at<int>(i, cv::CC_STAT_LEFT), stats.at<int>(i, cv::CC_STAT_TOP),
                  stats.at<int>(i, cv::CC_STAT_WIDTH), stats.at<int>(i, cv::CC_STAT_HEIGHT)};
        b.centroid = {centroids.at<double>(i, 0), centroids.at<double>(i, 1)};
        out.push_back(b);
    }
    return out;
}

struct Candidate {
    bool valid = false;
    int rotation = 0;           // quarter turns applied to reach the analysis frame
    cv::Rect bbox;              // analysis frame
    cv::Mat1b head_mask;        // analysis frame, full image size
    double skin_luma = 0.0;
    cv::Point2d eye_l, eye_r;
    double iris_area = 0.0;
    cv::Point2d mouth_c, mouth_l, mouth_r;
    cv::Mat1b mouth_mask;
    cv::Point2d nose_tip;
    bool nostrils_found = false;
    double nostril_sep = 0.0;
    double confidence = 0.0;
};

cv::Vec3d border_median_color(const cv::Mat& img) {
    std::vector<uint8_t> ch[3];
    auto push = (int(img.rows) * 2 + int(img.cols) * 2) * 2;
    for (int c = 0; c < 3; ++c) ch[c].reserve(size_t(push));
    for (int y = 0; y < img.rows; ++y) {
        for (int x = 0; x < img.cols; ++x) {
            if (y > 1 && y < img.rows - 2 && x > 1 && x < img.cols - 2) continue;
            const cv::Vec3b& v = img.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c) ch[c].push_back(v[c]);
        }
    }
    cv::Vec3d med;
    for (int c = 0; c < 3; ++c) {
        auto& v = ch[c];
        std::nth_element(v.begin(), v.begin() + long(v.size() / 2), v.end());
        med[c] = v[v.size() / 2];
    }
    return med;
}

double median_of(std::vector<double>& v) {
    if (v.empty()) return 0.0;
    std::nth_element(v.begin(), v.begin() + long(v.size() / 2), v.end());
    return v[v.size() / 2];
}

// analysis of one orientation of the image
std::vector<Candidate> analyze_frame(const cv::Mat& img, int rotation) {
    std::vector<Candidate> out;
    const cv::Vec3d bg = border_median_color(img);

    cv::Mat1b fg(img.size(), uint8_t(0));
    for (int y = 0; y < img.rows; ++y) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        uint8_t* frow = fg.ptr<uint8_t>(y);
        for (int x = 0; x < img.cols; ++x) {
            const double d = std::abs(row[x][0] - bg[0]) + std::abs(row[x][1] - bg[1]) +
                             std::abs(row[x][2] - bg[2]);
            frow[x] = d > 55.0 ? 255 : 0;
        }
    }

    const int min_head_area = int(img.total() / 50);
    cv::Mat labels, stats, centroids;
    const int n_components = cv::connectedComponentsWithStats(fg, labels, stats, centroids, 8, CV_32S);
    for (int comp = 1; comp < n_components; ++comp) {
        Blob head;
        head.area = stats.at<int>(comp, cv::CC_STAT_AREA);
        if (head.area < min_head_area) continue;
        head.bbox = {stats.at<int>(comp, cv::CC_STAT_LEFT), stats.at<int>(comp, cv::CC_STAT_TOP),
                     stats.at<int>(comp, cv::CC_STAT_WIDTH),
                     stats.at<int>(comp, cv::CC_STAT_HEIGHT)};
        head.centroid = {centroids.at<double>(comp, 0), centroids.at<double>(comp, 1)};

        Candidate cand;
        cand.valid = true;
        cand.rotation = rotation;
        cand.bbox = head.bbox;
        cand.head_mask = cv::Mat1b(img.size(), uint8_t(0));
        for (int y = head.bbox.y; y < head.bbox.y + head.bbox.height; ++y)
            for (int x = head.bbox.x; x < head.bbox.x + head.bbox.width; ++x)
                if (labels.at<int>(y, x) == comp) cand.head_mask(y, x) = 255;

        std::vector<double> lumas;
        lumas.reserve(size_t(head.area));
        for (int y = head.bbox.y; y < head.bbox.y + head.bbox.height; ++y)
            for (int x = head.bbox.x; x < head.bbox.x + head.bbox.width; ++x)
                if (cand.head_mask(y, x)) lumas.push_back(luma(img.at<cv::Vec3b>(y, x)));
        cand.skin_luma = median_of(lumas);

        // --- irises: dark, roundish blobs in the upper part of the head ---
        cv::Mat1b dark(img.size(), uint8_t(0));
        const int upper_limit = head.bbox.y + int(0.68 * head.bbox.height);
        for (int y = head.bbox.y; y < std::min(upper_limit, img.rows); ++y)
            for (int x = head.bbox.x; x < head.bbox.x + head.bbox.width; ++x)
                if (cand.head_mask(y, x) && luma(img.at<cv::Vec3b>(y, x)) < 0.62 * cand.skin_luma)
                    dark(y, x) = 255;
        std::vector<Blob> dark_blobs = blobs_from_mask(dark, 10);
        std::vector<Blob> iris_cands;
        for (const Blob& b : dark_blobs) {
            const double aspect = double(b.bbox.width) / std::max(1, b.bbox.height);
            const double extent = double(b.area) / double(b.bbox.width * b.bbox.height);
            if (aspect > 2.1 || aspect < 0.45) continue;  // brows and strands are elongated
            if (extent < 0.45) continue;
            if (b.area > head.area / 40) continue;
            iris_cands.push_back(b);
        }
        double best_pair_score = -1.0;
        for (size_t i = 0; i < iris_cands.size(); ++i) {
            for (size_t j = i + 1; j < iris_cands.size(); ++j) {
                const Blob &a = iris_cands[i], &b = iris_cands[j];
                const double dx = std::abs(a.centroid.x - b.centroid.x);
                const double dy = std::abs(a.centroid.y - b.centroid.y);
                if (dx < 0.14 * head.bbox.width || dx > 0.72 * head.bbox.width) continue;
                if (dy > 0.3 * dx + 2.0) continue;
                const double size_ratio =
                    double(std::max(a.area, b.area)) / double(std::min(a.area, b.area));
                if (size_ratio > 3.0) continue;
                const double score = dx / (1.0 + dy) / size_ratio;
                if (score > best_pair_score) {
                    best_pair_score = score;
                    if (a.centroid.x < b.centroid.x) {
                        cand.eye_l = a.centroid;
                        cand.eye_r = b.centroid;
                    } else {
                        cand.eye_l = b.centroid;
                        cand.eye_r = a.centroid;
                    }
                    cand.iris_area = 0.5 * (a.area + b.area);
                }
            }
        }
        if (best_pair_score < 0.0) {
            cand.confidence = 0.02;  // headlike blob without an eye pair
            out.push_back(std::move(cand));
            continue;
        }

        // --- mouth: red-dominant blob below the eyes ---
        cand.mouth_mask = cv::Mat1b(img.size(), uint8_t(0));
        const int mouth_top = int(std::lround(0.5 * (cand.eye_l.y + cand.eye_r.y)));
        for (int y = mouth_top; y < head.bbox.y + head.bbox.height; ++y) {
            for (int x = head.bbox.x; x < head.bbox.x + head.bbox.width; ++x) {
                if (!cand.head_mask(y, x)) continue;
                const cv::Vec3b& v = img.at<cv::Vec3b>(y, x);
                if (int(v[2]) - std::max(int(v[0]), int(v[1])) > 38 && v[2] > 90)
                    cand.mouth_mask(y, x) = 255;
            }
        }
        std::vector<Blob> red_blobs = blobs_from_mask(cand.mouth_mask, 12);
        const Blob* mouth = nullptr;
        for (const Blob& b : red_blobs)
            if (!mouth || b.area > mouth->area) mouth = &b;
        double q_mouth = 0.25;
        if (mouth) {
            cand.mouth_c = mouth->centroid;
            // corners: extreme columns of the mouth blob
            int min_x = img.cols, max_x = -1;
            std::vector<double> min_ys, max_ys;
            for (int y = mouth->bbox.y; y < mouth->bbox.y + mouth->bbox.height; ++y) {
                for (int x = mouth->bbox.x; x < mouth->bbox.x + mouth->bbox.width; ++x) {
                    if (!cand.mouth_mask(y, x)) continue;
                    if (x < min_x) {
                        min_x = x;
                        min_ys.clear();
                    }
                    if (x == min_x) min_ys.push_back(y);
                    if (x > max_x) {
                        max_x = x;
                        max_ys.clear();
                    }
                    if (x == max_x) max_ys.push_back(y);
                }
            }
            const double ml_y = std::accumulate(min_ys.begin(), min_ys.end(), 0.0) /
                                std::max<size_t>(1, min_ys.size());
            const double mr_y = std::accumulate(max_ys.begin(), max_ys.end(), 0.0) /
                                std::max<size_t>(1, max_ys.size());
            cand.mouth_l = {double(min_x), ml_y};
            cand.mouth_r = {double(max_x), mr_y};
            q_mouth = 1.0;
        } else {
            // fall back to a plausible spot so alignment still has 5 points
            const cv::Point2d eye_mid = 0.5 * (cand.eye_l + cand.eye_r);
            const double eye_dist = cv::norm(cand.eye_r - cand.eye_l);
            cand.mouth_c = eye_mid + cv::Point2d(0, 1.1 * eye_dist);
            cand.mouth_l = cand.mouth_c + cv::Point2d(-0.4 * eye_dist, 0);
            cand.mouth_r = cand.mouth_c + cv::Point2d(0.4 * eye_dist, 0);
        }

        // --- nostrils: small dark dots between the eye line and the mouth ---
        const cv::Point2d eye_mid = 0.5 * (cand.eye_l + cand.eye_r);
        const double eye_dist = cv::norm(cand.eye_r - cand.eye_l);
        {
            cv::Mat1b nd(img.size(), uint8_t(0));
            const int y0 = int(eye_mid.y + 0.25 * (cand.mouth_c.y - eye_mid.y));
            const int y1 = int(eye_mid.y + 0.85 * (cand.mouth_c.y - eye_mid.y));
            for (int y = std::max(0, y0); y < std::min(img.rows, y1); ++y)
                for (int x = int(cand.eye_l.x); x <= int(cand.eye_r.x); ++x)
                    if (cand.head_mask(y, x) &&
                        luma(img.at<cv::Vec3b>(y, x)) < 0.70 * cand.skin_luma)
                        nd(y, x) = 255;
            std::vector<Blob> dots = blobs_from_mask(nd, 2);
            std::erase_if(dots, [&](const Blob& b) { return b.area > 60; });
            double best = -1.0;
            for (size_t i = 0; i < dots.size(); ++i) {
                for (size_t j = i + 1; j < dots.size(); ++j) {
                    const double dx = std::abs(dots[i].centroid.x - dots[j].centroid.x);
                    const double dy = std::abs(dots[i].centroid.y - dots[j].centroid.y);
                    if (dy > 3.0 || dx < 2.0 || dx > 0.45 * eye_dist) continue;
                    const double mid_off = std::abs(0.5 * (dots[i].centroid.x + dots[j].centroid.x) -
                                                    eye_mid.x);
                    const double score = 1.0 / (1.0 + dy + mid_off);
                    if (score > best) {
                        best = score;
                        const cv::Point2d mid = 0.5 * (dots[i].centroid + dots[j].centroid);
                        cand.nose_tip = mid - cv::Point2d(0, 0.06 * eye_dist);
                        cand.nostrils_found = true;
                        cand.nostril_sep = dx;
                    }
                }
            }
            if (!cand.nostrils_found)
                cand.nose_tip = eye_mid + 0.63 * (cand.mouth_c - eye_mid);
        }

        // --- confidence ---
        const double dy_eyes = std::abs(cand.eye_l.y - cand.eye_r.y);
        const double q_sym = std::exp(-std::pow(dy_eyes / std::max(eye_dist, 1.0), 2.0) * 12.0);
        const double mouth_drop = (cand.mouth_c.y - eye_mid.y) / std::max(eye_dist, 1.0);
        const double q_pose = mouth_drop > 0.45 && mouth_drop < 2.2 ? 1.0 : 0.3;
        const double mouth_center_off =
            std::abs(cand.mouth_c.x - eye_mid.x) / std::max(eye_dist, 1.0);
        const double q_center = std::exp(-mouth_center_off * mouth_center_off * 6.0);
        cand.confidence = std::clamp(q_sym * q_pose * q_center * q_mouth, 0.0, 1.0);
        out.push_back(std::move(cand));
    }
    return out;
}

// rotate, analyze and keep per-location winners across the four orientations
std::vector<Candidate> analyze_all_orientations(const cv::Mat& image) {
    if (image.empty() || image.type() != CV_8UC3)
        throw ValidationError("face analysis expects a non-empty 8-bit 3-channel image");

    std::vector<Candidate> all;
    for (int k = 0; k < 4; ++k) {
        cv::Mat frame;
        if (k == 0)
            frame = image;
        else
            cv::rotate(image, frame,
                       k == 1 ? cv::ROTATE_90_CLOCKWISE
                              : (k == 2 ? cv::ROTATE_180 : cv::ROTATE_90_COUNTERCLOCKWISE));
        for (Candidate& c : analyze_frame(frame, k)) all.push_back(std::move(c));
    }

    // suppress duplicates of the same head found in different orientations
    auto center_in_original = [&](const Candidate& c) {
        const cv::Point2d center(c.bbox.x + c.bbox.width / 2.0, c.bbox.y + c.bbox.height / 2.0);
        return unrotate_point(center, c.rotation, image.size());
    };
    std::sort(all.begin(), all.end(),
              [](const Candidate& a, const Candidate& b) { return a.confidence > b.confidence; });
    std::vector<Candidate> kept;
    for (Candidate& c : all) {
        const cv::Point2d pc = center_in_original(c);
        bool dup = false;
        for (const Candidate& k2 : kept) {
            const cv::Point2d qc = center_in_original(k2);
            const double min_dim = std::min({c.bbox.width, c.bbox.height, k2.bbox.width,
                                             k2.bbox.height});
            if (cv::norm(pc - qc) < 0.5 * min_dim) {
                dup = true;
                break;
            }
        }
        if (!dup) kept.push_back(std::move(c));
    }
    return kept;
}

FaceDetection detection_from_candidate(const Candidate& c, cv::Size original) {
    FaceDetection det;
    const cv::Point2d corners[4] = {
        {double(c.bbox.x), double(c.bbox.y)},
        {double(c.bbox.x + c.bbox.width), double(c.bbox.y)},
        {double(c.bbox.x), double(c.bbox.y + c.bbox.height)},
        {double(c.bbox.x + c.bbox.width), double(c.bbox.y + c.bbox.height)}};
    double min_x = 1e9, min_y = 1e9, max_x = -1e9, max_y = -1e9;
    for (const auto& q : corners) {
        const cv::Point2d m = unrotate_point(q, c.rotation, original);
        min_x = std::min(min_x, m.x);
        max_x = std::max(max_x, m.x);
        min_y = std::min(min_y, m.y);
        max_y = std::max(max_y, m.y);
    }
    det.bounding_box = {min_x, min_y, max_x - min_x, max_y - min_y};
    const cv::Point2d pts[5] = {c.eye_l, c.eye_r, c.nose_tip, c.mouth_l, c.mouth_r};
    for (int i = 0; i < 5; ++i) {
        const cv::Point2d m = unrotate_point(pts[i], c.rotation, original);
        det.landmarks5[size_t(i)] = {float(m.x), float(m.y)};
    }
    det.confidence = c.confidence;
    return det;
}

}  // namespace

std::vector<FaceDetection> GeometricFaceDetector::detect_all(const cv::Mat& image) const {
    std::vector<FaceDetection> dets;
    for (const Candidate& c : analyze_all_orientations(image))
        if (c.confidence > 0.05) dets.push_back(detection_from_candidate(c, image.size()));
    std::sort(dets.begin(), dets.end(),
              [](const FaceDetection& a, const FaceDetection& b) {
                  return a.confidence > b.confidence;
              });
    return dets;
}

FaceDetection detect_face(const cv::Mat& image, const FaceDetector& detector,
                          const std::string& source_hint) {
    const auto dets = detector.detect_all(image);
    if (dets.empty())
        throw NoFaceError("no face detected" +
                          (source_hint.empty() ? std::string() : " in " + source_hint));
    return dets.front();
}

namespace {

// ray march outward from origin while inside the mask; returns the last
// in-mask point along the direction
cv::Point2d march_mask(const cv::Mat1b& mask, const cv::Point2d& origin, double angle_rad,
                       double max_dist) {
    const double ux = std::cos(angle_rad), uy = std::sin(angle_rad);
    cv::Point2d last = origin;
    for (double t = 0.0; t <= max_dist; t += 0.5) {
        const int x = int(std::lround(origin.x + t * ux));
        const int y = int(std::lround(origin.y + t * uy));
        if (x < 0 || y < 0 || x >= mask.cols || y >= mask.rows) break;
        if (mask(y, x)) last = {origin.x + t * ux, origin.y + t * uy};
    }
    return last;
}

}  // namespace

LandmarkSet GeometricLandmarker::locate(const cv::Mat& image) const {
    const auto candidates = analyze_all_orientations(image);
    const Candidate* best = nullptr;
    for (const auto& c : candidates)
        if (c.confidence > 0.05 && (!best || c.confidence > best->confidence)) best = &c;
    if (!best) throw NoFaceError("no face found for landmark localization");
    const Candidate& c = *best;

    cv::Mat frame;  // analysis frame the candidate lives in
    if (c.rotation == 0)
        frame = image;
    else
        cv::rotate(image, frame,
                   c.rotation == 1
                       ? cv::ROTATE_90_CLOCKWISE
                       : (c.rotation == 2 ? cv::ROTATE_180 : cv::ROTATE_90_COUNTERCLOCKWISE));

    const cv::Point2d eye_mid = 0.5 * (c.eye_l + c.eye_r);
    const double eye_dist = std::max(cv::norm(c.eye_r - c.eye_l), 8.0);
    const double iris_r = std::sqrt(std::max(c.iris_area, 4.0) / CV_PI);

    std::vector<cv::Point2d> pts(kLandmarkCount);

    // jawline: ray cast on the head mask from a point between nose and mouth
    const cv::Point2d jaw_origin = 0.5 * (eye_mid + c.mouth_c);
    const double max_march = 2.5 * double(std::max(c.bbox.width, c.bbox.height));
    for (int i = 0; i < 17; ++i) {
        const double angle = (190.0 - 12.5 * i) * kDeg;
        pts[size_t(i)] = march_mask(c.head_mask, jaw_origin, angle, max_march);
    }

    // eyes: almond template around the iris, extent from the sclera if visible
    auto eye_extent = [&](const cv::Point2d& eye) {
        double rx = 2.2 * iris_r, ry = 1.35 * iris_r;
        double max_dx = 0.0, max_dy = 0.0;
        const int win = int(std::lround(3.2 * iris_r));
        for (int y = int(eye.y) - win; y <= int(eye.y) + win; ++y) {
            for (int x = int(eye.x) - win; x <= int(eye.x) + win; ++x) {
                if (x < 0 || y < 0 || x >= frame.cols || y >= frame.rows) continue;
                const cv::Vec3b& v = frame.at<cv::Vec3b>(y, x);
                if (luma(v) > 1.08 * c.skin_luma && v[0] > 170 && v[1] > 170 && v[2] > 170) {
                    max_dx = std::max(max_dx, std::abs(x - eye.x));
                    max_dy = std::max(max_dy, std::abs(y - eye.y));
                }
            }
        }
        if (max_dx > iris_r) rx = std::clamp(max_dx + 0.5, 1.6 * iris_r, 3.4 * iris_r);
        if (max_dy > 0.5 * iris_r) ry = std::clamp(max_dy + 0.5, 0.9 * iris_r, 2.1 * iris_r);
        return cv::Point2d(rx, ry);
    };
    auto place_eye = [&](int base, const cv::Point2d& eye) {
        const cv::Point2d ext = eye_extent(eye);
        const double rx = ext.x, ry = ext.y;
        pts[size_t(base + 0)] = {eye.x - rx, eye.y};
        pts[size_t(base + 1)] = {eye.x - rx / 3.0, eye.y - ry};
        pts[size_t(base + 2)] = {eye.x + rx / 3.0, eye.y - ry};
        pts[size_t(base + 3)] = {eye.x + rx, eye.y};
        pts[size_t(base + 4)] = {eye.x + rx / 3.0, eye.y + ry};
        pts[size_t(base + 5)] = {eye.x - rx / 3.0, eye.y + ry};
    };
    place_eye(36, c.eye_l);
    place_eye(42, c.eye_r);

    // brows: mean dark row per x-slice in a window above each eye. The same
    // t = -1..+1 sweep gives outer->inner for the left brow and inner->outer
    // for the right one, matching the index convention.
    auto place_brow = [&](int base, const cv::Point2d& eye) {
        const double half_len = 0.32 * eye_dist;
        const double y_top = eye.y - 0.62 * eye_dist;
        const double y_bot = eye.y - 0.14 * eye_dist;
        for (int k = 0; k < 5; ++k) {
            const double t = -1.0 + 0.5 * k;
            const double xs = eye.x + t * half_len;
            double sum_y = 0.0;
            int n = 0;
            for (int y = int(y_top); y <= int(y_bot); ++y) {
                for (int dx = -2; dx <= 2; ++dx) {
                    const int x_px = int(std::lround(xs)) + dx;
                    if (x_px < 0 || y < 0 || x_px >= frame.cols || y >= frame.rows) continue;
                    if (!c.head_mask(y, x_px)) continue;
                    if (luma(frame.at<cv::Vec3b>(y, x_px)) < 0.72 * c.skin_luma) {
                        sum_y += y;
                        ++n;
                    }
                }
            }
            const double y_pt = n > 0 ? sum_y / n : eye.y - 0.38 * eye_dist;
            pts[size_t(base + k)] = {xs, y_pt};
        }
    };
    place_brow(17, c.eye_l);
    place_brow(22, c.eye_r);

    // nose
    const double nose_half =
        c.nostrils_found ? std::clamp(c.nostril_sep / 1.52, 0.10 * eye_dist, 0.35 * eye_dist)
                         : 0.19 * eye_dist;
    {
        const cv::Point2d nasion = eye_mid;
        for (int k = 0; k < 4; ++k) {
            const double t = double(k) / 3.0;
            pts[size_t(27 + k)] = nasion + t * (c.nose_tip - nasion);
        }
        const double base_y = c.nose_tip.y + 0.10 * eye_dist;
        const double off[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
        const double dip[5] = {0.0, 0.03, 0.06, 0.03, 0.0};
        for (int k = 0; k < 5; ++k)
            pts[size_t(31 + k)] = {c.nose_tip.x + off[k] * nose_half,
                                   base_y + dip[k] * eye_dist};
    }

    // mouth: ray cast on the lip mask; fall back to template offsets
    {
        const bool have_mask = !c.mouth_mask.empty() && cv::countNonZero(c.mouth_mask) > 0;
        auto lip_point = [&](double angle_deg, double fallback_r) {
            if (have_mask) {
                const cv::Point2d p =
                    march_mask(c.mouth_mask, c.mouth_c, angle_deg * kDeg, 0.9 * eye_dist);
                if (cv::norm(p - c.mouth_c) > 1.0) return p;
            }
            return c.mouth_c + fallback_r * cv::Point2d(std::cos(angle_deg * kDeg),
                                                        std::sin(angle_deg * kDeg));
        };
        // angles in image coordinates (y down): negative angles point up
        const double fr = 0.33 * eye_dist;
        for (int k = 0; k <= 6; ++k)  // 48..54, left corner over the top to right corner
            pts[size_t(48 + k)] = lip_point(30.0 * k - 180.0, fr);
        for (int j = 1; j <= 5; ++j)  // 55..59, right to left along the bottom
            pts[size_t(55 + j - 1)] = lip_point(30.0 * j, fr);
        const double inner_angles[8] = {-180, -135, -90, -45, 0, 45, 90, 135};
        for (int k = 0; k < 8; ++k) {
            const cv::Point2d outer = lip_point(inner_angles[k], fr);
            pts[size_t(60 + k)] = c.mouth_c + 0.5 * (outer - c.mouth_c);
        }
    }

    LandmarkSet lm;
    lm.image_size = image.size();
    lm.points.resize(kLandmarkCount);
    for (int i = 0; i < kLandmarkCount; ++i) {
        const cv::Point2d mapped = unrotate_point(pts[size_t(i)], c.rotation, image.size());
        lm.points[size_t(i)] = {float(mapped.x), float(mapped.y)};
    }
    lm.clamp_to_bounds();
    return lm;
}

const FaceDetector& face_detector(const std::string& backend) {
    static const GeometricFaceDetector geometric;
    if (backend == "geometric") return geometric;
    throw ValidationError("unknown face detector backend '" + backend +
                          "' (available: geometric)");
}

const FaceLandmarker& face_landmarker(const std::string& backend) {
    static const GeometricLandmarker geometric;
    if (backend == "geometric") return geometric;
    throw ValidationError("unknown landmarker backend '" + backend + "' (available: geometric)");
}

}  // namespace morphdet
