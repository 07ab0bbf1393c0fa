#include "morphdet/morph.hpp"

#include <algorithm>
#include <cmath>

#include "morphdet/delaunay.hpp"

namespace morphdet {

void MorphRecipe::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("morph alpha must lie in [0,1]");
    if (source_a.empty() || source_b.empty())
        throw ValidationError("morph recipe needs two source subjects");
    if (mode == MorphMode::splicing && splice_recipient != 'a' && splice_recipient != 'b')
        throw ValidationError("splice_recipient must be 'a' or 'b'");
}

LandmarkSet average_landmarks(const LandmarkSet& lm_a, const LandmarkSet& lm_b, double alpha) {
    lm_a.validate();
    lm_b.validate();
    LandmarkSet avg;
    avg.image_size = lm_a.image_size;
    avg.points.resize(kLandmarkCount);
    const float wa = float(1.0 - alpha), wb = float(alpha);
    for (int i = 0; i < kLandmarkCount; ++i)
        avg.points[size_t(i)] = wa * lm_a.points[size_t(i)] + wb * lm_b.points[size_t(i)];
    return avg;
}

namespace {

// 2x3 affine mapping dst triangle -> src triangle, solved in doubles.
struct Affine23 {
    double m[2][3];
    cv::Point2d apply(double x, double y) const {
        return {m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2]};
    }
};

bool affine_from_triangles(const cv::Point2f dst[3], const cv::Point2f src[3], Affine23& out) {
    const double x0 = dst[0].x, y0 = dst[0].y;
    const double x1 = dst[1].x, y1 = dst[1].y;
    const double x2 = dst[2].x, y2 = dst[2].y;
    const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    if (std::abs(det) < 1e-12) return false;
    for (int r = 0; r < 2; ++r) {
        const double u0 = r == 0 ? src[0].x : src[0].y;
        const double u1 = r == 0 ? src[1].x : src[1].y;
        const double u2 = r == 0 ? src[2].x : src[2].y;
        const double a = ((u1 - u0) * (y2 - y0) - (u2 - u0) * (y1 - y0)) / det;
        const double b = ((u2 - u0) * (x1 - x0) - (u1 - u0) * (x2 - x0)) / det;
        out.m[r][0] = a;
        out.m[r][1] = b;
        out.m[r][2] = u0 - a * x0 - b * y0;
    }
    return true;
}

// Inclusive point-in-triangle with a small epsilon so shared edges are
// claimed by the first triangle in canonical order.
bool point_in_triangle(double px, double py, const cv::Point2f t[3]) {
    auto side = [&](const cv::Point2f& a, const cv::Point2f& b) {
        return (double(b.x) - a.x) * (py - a.y) - (double(b.y) - a.y) * (px - a.x);
    };
    const double d0 = side(t[0], t[1]);
    const double d1 = side(t[1], t[2]);
    const double d2 = side(t[2], t[0]);
    const double eps = 1e-9;
    const bool has_neg = d0 < -eps || d1 < -eps || d2 < -eps;
    const bool has_pos = d0 > eps || d1 > eps || d2 > eps;
    return !(has_neg && has_pos);
}

cv::Mat1i rasterize_triangle_map(const std::vector<Triangle>& tris,
                                 const std::vector<cv::Point2f>& pts, cv::Size size) {
    cv::Mat1i map(size, -1);
    for (size_t t = 0; t < tris.size(); ++t) {
        const cv::Point2f tri[3] = {pts[size_t(tris[t][0])], pts[size_t(tris[t][1])],
                                    pts[size_t(tris[t][2])]};
        const int x0 = std::max(0, int(std::floor(std::min({tri[0].x, tri[1].x, tri[2].x}))));
        const int x1 = std::min(size.width - 1, int(std::ceil(std::max({tri[0].x, tri[1].x, tri[2].x}))));
        const int y0 = std::max(0, int(std::floor(std::min({tri[0].y, tri[1].y, tri[2].y}))));
        const int y1 = std::min(size.height - 1, int(std::ceil(std::max({tri[0].y, tri[1].y, tri[2].y}))));
        for (int y = y0; y <= y1; ++y) {
            int* row = map.ptr<int>(y);
            for (int x = x0; x <= x1; ++x) {
                if (row[x] >= 0) continue;
                if (point_in_triangle(double(x), double(y), tri)) row[x] = int(t);
            }
        }
    }
    return map;
}

cv::Vec3f sample_bilinear(const cv::Mat& img, double x, double y) {
    const int w = img.cols, h = img.rows;
    x = std::clamp(x, 0.0, double(w - 1));
    y = std::clamp(y, 0.0, double(h - 1));
    const int x0 = std::min(int(x), w - 2 >= 0 ? w - 2 : 0);
    const int y0 = std::min(int(y), h - 2 >= 0 ? h - 2 : 0);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    const cv::Vec3b p00 = img.at<cv::Vec3b>(y0, x0);
    const cv::Vec3b p01 = img.at<cv::Vec3b>(y0, x1);
    const cv::Vec3b p10 = img.at<cv::Vec3b>(y1, x0);
    const cv::Vec3b p11 = img.at<cv::Vec3b>(y1, x1);
    cv::Vec3f out;
    for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * p00[c] + fx * p01[c];
        const double bot = (1.0 - fx) * p10[c] + fx * p11[c];
        out[c] = float((1.0 - fy) * top + fy * bot);
    }
    return out;
}

void check_morph_inputs(const cv::Mat& img_a, const LandmarkSet& lm_a, const cv::Mat& img_b,
                        const LandmarkSet& lm_b, double alpha) {
    if (img_a.size() != img_b.size() || img_a.type() != CV_8UC3 || img_b.type() != CV_8UC3)
        throw ValidationError("warp_blend needs two 8-bit 3-channel images of equal size");
    lm_a.validate();
    lm_b.validate();
    if (lm_a.image_size != img_a.size() || lm_b.image_size != img_b.size())
        throw ValidationError("landmark sets do not match image dimensions");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");
}

}  // namespace

cv::Mat warp_blend_f(const cv::Mat& img_a, const LandmarkSet& lm_a, const cv::Mat& img_b,
                     const LandmarkSet& lm_b, double alpha) {
    check_morph_inputs(img_a, lm_a, img_b, lm_b, alpha);
    const cv::Size size = img_a.size();

    const auto anchors = border_anchor_points(size);
    auto full_points = [&](const LandmarkSet& lm) {
        std::vector<cv::Point2f> pts = lm.points;
        pts.insert(pts.end(), anchors.begin(), anchors.end());
        return pts;
    };
    const std::vector<cv::Point2f> pts_a = full_points(lm_a);
    const std::vector<cv::Point2f> pts_b = full_points(lm_b);

    std::vector<cv::Point2f> pts_avg(pts_a.size());
    const float wa = float(1.0 - alpha), wb = float(alpha);
    for (size_t i = 0; i < pts_a.size(); ++i) pts_avg[i] = wa * pts_a[i] + wb * pts_b[i];

    const std::vector<Triangle> tris = delaunay_triangulate(pts_avg);
    const cv::Mat1i tri_map = rasterize_triangle_map(tris, pts_avg, size);

    // per-triangle affines, averaged position -> each source
    std::vector<Affine23> to_a(tris.size()), to_b(tris.size());
    std::vector<bool> tri_ok(tris.size(), false);
    for (size_t t = 0; t < tris.size(); ++t) {
        cv::Point2f davg[3], da[3], db[3];
        for (int k = 0; k < 3; ++k) {
            davg[k] = pts_avg[size_t(tris[t][k])];
            da[k] = pts_a[size_t(tris[t][k])];
            db[k] = pts_b[size_t(tris[t][k])];
        }
        tri_ok[t] = affine_from_triangles(davg, da, to_a[t]) &&
                    affine_from_triangles(davg, db, to_b[t]);
    }

    cv::Mat out(size, CV_32FC3, cv::Scalar(0, 0, 0));
    for (int y = 0; y < size.height; ++y) {
        const int* trow = tri_map.ptr<int>(y);
        cv::Vec3f* orow = out.ptr<cv::Vec3f>(y);
        for (int x = 0; x < size.width; ++x) {
            const int t = trow[x];
            cv::Vec3f va, vb;
            if (t >= 0 && tri_ok[size_t(t)]) {
                const cv::Point2d pa = to_a[size_t(t)].apply(x, y);
                const cv::Point2d pb = to_b[size_t(t)].apply(x, y);
                va = sample_bilinear(img_a, pa.x, pa.y);
                vb = sample_bilinear(img_b, pb.x, pb.y);
            } else {
                va = cv::Vec3f(img_a.at<cv::Vec3b>(y, x));
                vb = cv::Vec3f(img_b.at<cv::Vec3b>(y, x));
            }
            for (int c = 0; c < 3; ++c) orow[x][c] = wa * va[c] + wb * vb[c];
        }
    }
    return out;
}

cv::Mat warp_blend(const cv::Mat& img_a, const LandmarkSet& lm_a, const cv::Mat& img_b,
                   const LandmarkSet& lm_b, double alpha) {
    const cv::Mat blended = warp_blend_f(img_a, lm_a, img_b, lm_b, alpha);
    cv::Mat out(blended.size(), CV_8UC3);
    for (int y = 0; y < blended.rows; ++y) {
        const cv::Vec3f* brow = blended.ptr<cv::Vec3f>(y);
        cv::Vec3b* orow = out.ptr<cv::Vec3b>(y);
        for (int x = 0; x < blended.cols; ++x)
            for (int c = 0; c < 3; ++c)
                orow[x][c] = cv::saturate_cast<uint8_t>(std::floor(double(brow[x][c]) + 0.5));
    }
    return out;
}

cv::Mat splice_weight_map(const LandmarkSet& recipient_lm) {
    recipient_lm.validate();
    const cv::Size size = recipient_lm.image_size;

    std::vector<cv::Point2f> inner(recipient_lm.points.begin() + kInnerFaceBegin,
                                   recipient_lm.points.end());
    const std::vector<int> hull_idx = convex_hull_indices(inner);
    if (hull_idx.size() < 3) throw ValidationError("splice mask hull is empty or degenerate");
    std::vector<cv::Point2f> hull;
    hull.reserve(hull_idx.size());
    for (int i : hull_idx) hull.push_back(inner[size_t(i)]);

    // normalize winding to positive shoelace area in image coordinates
    {
        double area2 = 0.0;
        for (size_t i = 0; i < hull.size(); ++i) {
            const cv::Point2f& a = hull[i];
            const cv::Point2f& b = hull[(i + 1) % hull.size()];
            area2 += double(a.x) * b.y - double(b.x) * a.y;
        }
        if (area2 < 0.0) std::reverse(hull.begin(), hull.end());
    }

    // hard hull mask, inclusive edges
    cv::Mat1b mask(size, uint8_t(0));
    auto inside_hull = [&](double px, double py) {
        for (size_t i = 0; i < hull.size(); ++i) {
            const cv::Point2f& a = hull[i];
            const cv::Point2f& b = hull[(i + 1) % hull.size()];
            const double c = (double(b.x) - a.x) * (py - a.y) - (double(b.y) - a.y) * (px - a.x);
            if (c < -1e-9) return false;
        }
        return true;
    };
    for (int y = 0; y < size.height; ++y)
        for (int x = 0; x < size.width; ++x)
            if (inside_hull(x, y)) mask(y, x) = 1;

    // boundary pixels of the mask
    std::vector<cv::Point> boundary;
    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            if (!mask(y, x)) continue;
            const bool edge = x == 0 || y == 0 || x == size.width - 1 || y == size.height - 1 ||
                              !mask(y, x - 1) || !mask(y, x + 1) || !mask(y - 1, x) ||
                              !mask(y + 1, x);
            if (edge) boundary.push_back({x, y});
        }
    }
    if (boundary.empty()) throw ValidationError("splice mask hull is empty");

    cv::Mat weights(size, CV_32F, cv::Scalar(0.f));
    const double r2_max = kSpliceFeatherRadius * kSpliceFeatherRadius;
    for (int y = 0; y < size.height; ++y) {
        float* wrow = weights.ptr<float>(y);
        for (int x = 0; x < size.width; ++x) {
            if (mask(y, x)) {
                wrow[x] = 1.f;
                continue;
            }
            double best = r2_max + 1.0;
            for (const auto& b : boundary) {
                const double dx = x - b.x, dy = y - b.y;
                const double d2 = dx * dx + dy * dy;
                if (d2 < best) best = d2;
            }
            if (best <= r2_max)
                wrow[x] = float(std::exp(-best / (2.0 * kSpliceFeatherSigma * kSpliceFeatherSigma)));
        }
    }
    return weights;
}

cv::Mat splice_morph(const cv::Mat& complete_morph, const cv::Mat& recipient,
                     const LandmarkSet& recipient_lm) {
    if (complete_morph.size() != recipient.size() || complete_morph.type() != CV_8UC3 ||
        recipient.type() != CV_8UC3)
        throw ValidationError("splice_morph needs two 8-bit 3-channel images of equal size");
    if (recipient_lm.image_size != recipient.size())
        throw ValidationError("recipient landmarks do not match recipient dimensions");

    const cv::Mat weights = splice_weight_map(recipient_lm);
    cv::Mat out(recipient.size(), CV_8UC3);
    for (int y = 0; y < out.rows; ++y) {
        const float* wrow = weights.ptr<float>(y);
        const cv::Vec3b* mrow = complete_morph.ptr<cv::Vec3b>(y);
        const cv::Vec3b* rrow = recipient.ptr<cv::Vec3b>(y);
        cv::Vec3b* orow = out.ptr<cv::Vec3b>(y);
        for (int x = 0; x < out.cols; ++x) {
            const float w = wrow[x];
            if (w <= 0.f) {
                orow[x] = rrow[x];  // bit-exact outside the feather band
            } else if (w >= 1.f) {
                orow[x] = mrow[x];
            } else {
                for (int c = 0; c < 3; ++c) {
                    const double v = double(w) * mrow[x][c] + (1.0 - double(w)) * rrow[x][c];
                    orow[x][c] = cv::saturate_cast<uint8_t>(std::floor(v + 0.5));
                }
            }
        }
    }
    return out;
}

}  // namespace morphdet
