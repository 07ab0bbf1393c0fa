#include "morphdet/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace morphdet {

namespace {

struct WorkTriangle {
    int a, b, c;
    double cx, cy, r2;  // circumcircle
};

bool circumcircle(const cv::Point2d& p1, const cv::Point2d& p2, const cv::Point2d& p3,
                  double& cx, double& cy, double& r2) {
    const double ax = p1.x, ay = p1.y;
    const double bx = p2.x, by = p2.y;
    const double cx_ = p3.x, cy_ = p3.y;
    const double d = 2.0 * (ax * (by - cy_) + bx * (cy_ - ay) + cx_ * (ay - by));
    if (std::abs(d) < 1e-12) return false;
    const double a2 = ax * ax + ay * ay;
    const double b2 = bx * bx + by * by;
    const double c2 = cx_ * cx_ + cy_ * cy_;
    cx = (a2 * (by - cy_) + b2 * (cy_ - ay) + c2 * (ay - by)) / d;
    cy = (a2 * (cx_ - bx) + b2 * (ax - cx_) + c2 * (bx - ax)) / d;
    const double dx = ax - cx, dy = ay - cy;
    r2 = dx * dx + dy * dy;
    return true;
}

}  // namespace

std::vector<Triangle> delaunay_triangulate(const std::vector<cv::Point2f>& points) {
    // collapse duplicates onto the first occurrence
    std::vector<int> unique_idx;
    for (size_t i = 0; i < points.size(); ++i) {
        bool dup = false;
        for (int u : unique_idx) {
            const cv::Point2f d = points[i] - points[size_t(u)];
            if (std::abs(d.x) < 1e-6f && std::abs(d.y) < 1e-6f) {
                dup = true;
                break;
            }
        }
        if (!dup) unique_idx.push_back(int(i));
    }
    if (unique_idx.size() < 3)
        throw ValidationError("triangulation needs at least 3 unique points, got " +
                              std::to_string(unique_idx.size()));

    std::vector<cv::Point2d> pts;
    pts.reserve(unique_idx.size() + 3);
    for (int u : unique_idx) pts.emplace_back(points[size_t(u)].x, points[size_t(u)].y);

    // super-triangle comfortably containing all points
    double min_x = pts[0].x, max_x = pts[0].x, min_y = pts[0].y, max_y = pts[0].y;
    for (const auto& p : pts) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    const double span = std::max({max_x - min_x, max_y - min_y, 1.0});
    const double mid_x = 0.5 * (min_x + max_x), mid_y = 0.5 * (min_y + max_y);
    const int s0 = int(pts.size()), s1 = s0 + 1, s2 = s0 + 2;
    pts.emplace_back(mid_x - 20.0 * span, mid_y - span);
    pts.emplace_back(mid_x + 20.0 * span, mid_y - span);
    pts.emplace_back(mid_x, mid_y + 20.0 * span);

    std::vector<WorkTriangle> tris;
    {
        WorkTriangle t{s0, s1, s2, 0, 0, 0};
        circumcircle(pts[size_t(s0)], pts[size_t(s1)], pts[size_t(s2)], t.cx, t.cy, t.r2);
        tris.push_back(t);
    }

    for (int i = 0; i < s0; ++i) {
        const cv::Point2d& p = pts[size_t(i)];
        // triangles whose circumcircle contains p
        std::vector<std::pair<int, int>> boundary;  // edges of the cavity
        std::map<std::pair<int, int>, int> edge_count;
        std::vector<WorkTriangle> keep;
        keep.reserve(tris.size());
        for (const auto& t : tris) {
            const double dx = p.x - t.cx, dy = p.y - t.cy;
            if (dx * dx + dy * dy <= t.r2 * (1.0 + 1e-12)) {
                const std::pair<int, int> edges[3] = {{std::min(t.a, t.b), std::max(t.a, t.b)},
                                                      {std::min(t.b, t.c), std::max(t.b, t.c)},
                                                      {std::min(t.c, t.a), std::max(t.c, t.a)}};
                for (const auto& e : edges) edge_count[e]++;
            } else {
                keep.push_back(t);
            }
        }
        for (const auto& [edge, count] : edge_count)
            if (count == 1) boundary.push_back(edge);
        tris.swap(keep);
        for (const auto& [u, v] : boundary) {
            WorkTriangle t{u, v, i, 0, 0, 0};
            if (!circumcircle(pts[size_t(u)], pts[size_t(v)], p, t.cx, t.cy, t.r2))
                continue;  // degenerate sliver against a collinear edge
            tris.push_back(t);
        }
    }

    std::vector<Triangle> out;
    for (const auto& t : tris) {
        if (t.a >= s0 || t.b >= s0 || t.c >= s0) continue;
        Triangle tri{unique_idx[size_t(t.a)], unique_idx[size_t(t.b)], unique_idx[size_t(t.c)]};
        std::sort(tri.begin(), tri.end());
        out.push_back(tri);
    }
    if (out.empty()) throw ValidationError("triangulation degenerate: all points collinear");
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> convex_hull_indices(const std::vector<cv::Point2f>& points) {
    std::vector<int> idx(points.size());
    for (size_t i = 0; i < points.size(); ++i) idx[i] = int(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const auto& pa = points[size_t(a)];
        const auto& pb = points[size_t(b)];
        return pa.x < pb.x || (pa.x == pb.x && pa.y < pb.y);
    });
    idx.erase(std::unique(idx.begin(), idx.end(),
                          [&](int a, int b) {
                              return points[size_t(a)] == points[size_t(b)];
                          }),
              idx.end());
    if (idx.size() < 3) return idx;

    auto cross = [&](int o, int a, int b) {
        const cv::Point2d po(points[size_t(o)]), pa(points[size_t(a)]), pb(points[size_t(b)]);
        return (pa.x - po.x) * (pb.y - po.y) - (pa.y - po.y) * (pb.x - po.x);
    };

    std::vector<int> hull(2 * idx.size());
    size_t k = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], idx[i]) <= 0) --k;
        hull[k++] = idx[i];
    }
    const size_t lower = k + 1;
    for (size_t i = idx.size() - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], idx[i]) <= 0) --k;
        hull[k++] = idx[i];
    }
    hull.resize(k - 1);
    return hull;
}

}  // namespace morphdet
