#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "morphdet/delaunay.hpp"
#include "morphdet/landmarks.hpp"

using namespace morphdet;

namespace {

// independent hull: gift wrapping (Jarvis march), counts hull vertices
size_t gift_wrap_hull_size(const std::vector<cv::Point2f>& pts) {
    std::vector<int> unique;
    for (size_t i = 0; i < pts.size(); ++i) {
        bool dup = false;
        for (int u : unique)
            if (pts[size_t(u)] == pts[i]) dup = true;
        if (!dup) unique.push_back(int(i));
    }
    if (unique.size() < 3) return unique.size();

    int start = unique[0];
    for (int i : unique)
        if (pts[size_t(i)].x < pts[size_t(start)].x ||
            (pts[size_t(i)].x == pts[size_t(start)].x && pts[size_t(i)].y < pts[size_t(start)].y))
            start = i;
    std::set<int> hull;
    int current = start;
    do {
        hull.insert(current);
        int next = unique[0] == current ? unique[1 % unique.size()] : unique[0];
        for (int candidate : unique) {
            if (candidate == current) continue;
            const double cx = pts[size_t(current)].x, cy = pts[size_t(current)].y;
            const double cross = (pts[size_t(next)].x - cx) * (pts[size_t(candidate)].y - cy) -
                                 (pts[size_t(next)].y - cy) * (pts[size_t(candidate)].x - cx);
            const double dn = std::hypot(pts[size_t(next)].x - cx, pts[size_t(next)].y - cy);
            const double dc = std::hypot(pts[size_t(candidate)].x - cx, pts[size_t(candidate)].y - cy);
            if (cross < 0 || (std::abs(cross) < 1e-9 && dc > dn)) next = candidate;
        }
        current = next;
    } while (current != start && hull.size() <= unique.size());
    return hull.size();
}

// counts input points lying on the hull boundary (collinear ones included)
size_t boundary_point_count(const std::vector<cv::Point2f>& pts) {
    // hull vertices via gift wrapping, then membership test on hull edges
    std::vector<int> unique;
    for (size_t i = 0; i < pts.size(); ++i) {
        bool dup = false;
        for (int u : unique)
            if (pts[size_t(u)] == pts[i]) dup = true;
        if (!dup) unique.push_back(int(i));
    }
    int start = unique[0];
    for (int i : unique)
        if (pts[size_t(i)].x < pts[size_t(start)].x ||
            (pts[size_t(i)].x == pts[size_t(start)].x && pts[size_t(i)].y < pts[size_t(start)].y))
            start = i;
    std::vector<int> hull;
    int current = start;
    do {
        hull.push_back(current);
        int next = unique[0] == current ? unique[1 % unique.size()] : unique[0];
        for (int candidate : unique) {
            if (candidate == current) continue;
            const double cx = pts[size_t(current)].x, cy = pts[size_t(current)].y;
            const double cross = (pts[size_t(next)].x - cx) * (pts[size_t(candidate)].y - cy) -
                                 (pts[size_t(next)].y - cy) * (pts[size_t(candidate)].x - cx);
            const double dn = std::hypot(pts[size_t(next)].x - cx, pts[size_t(next)].y - cy);
            const double dc = std::hypot(pts[size_t(candidate)].x - cx, pts[size_t(candidate)].y - cy);
            if (cross < 0 || (std::abs(cross) < 1e-9 && dc > dn)) next = candidate;
        }
        current = next;
    } while (current != start && hull.size() <= unique.size());

    size_t count = 0;
    for (int i : unique) {
        const cv::Point2d p(pts[size_t(i)]);
        bool on_boundary = false;
        for (size_t e = 0; e < hull.size() && !on_boundary; ++e) {
            const cv::Point2d a(pts[size_t(hull[e])]);
            const cv::Point2d b(pts[size_t(hull[(e + 1) % hull.size()])]);
            const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            if (std::abs(cross) > 1e-6) continue;
            const double dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
            const double len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
            if (dot >= -1e-9 && dot <= len2 + 1e-9) on_boundary = true;
        }
        if (on_boundary) ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("four corners triangulate into two triangles") {
    const std::vector<cv::Point2f> corners = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
    const auto tris = delaunay_triangulate(corners);
    CHECK(tris.size() == 2);
}

TEST_CASE("euler relation on 76 random-ish points") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> coord(5.f, 250.f);
    std::vector<cv::Point2f> pts;
    for (int i = 0; i < 68; ++i) pts.push_back({coord(rng), coord(rng)});
    const auto anchors = border_anchor_points({256, 256});
    pts.insert(pts.end(), anchors.begin(), anchors.end());

    const auto tris = delaunay_triangulate(pts);
    // b counts every input point on the hull boundary, collinear ones
    // (the frame edge midpoints) included
    const size_t b = boundary_point_count(pts);
    CHECK(tris.size() == 2 * pts.size() - 2 - b);
}

TEST_CASE("triangulation is canonical and deterministic") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> coord(0.f, 100.f);
    std::vector<cv::Point2f> pts;
    for (int i = 0; i < 30; ++i) pts.push_back({coord(rng), coord(rng)});
    const auto a = delaunay_triangulate(pts);
    const auto b = delaunay_triangulate(pts);
    CHECK(a == b);
    for (const auto& t : a) {
        CHECK(t[0] < t[1]);
        CHECK(t[1] < t[2]);
    }
    for (size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1] < a[i]);
}

TEST_CASE("duplicates collapse, too few unique points error") {
    const std::vector<cv::Point2f> dup = {{0, 0}, {0, 0}, {5, 0}, {5, 0}, {0, 5}};
    const auto tris = delaunay_triangulate(dup);
    CHECK(tris.size() == 1);

    const std::vector<cv::Point2f> two = {{0, 0}, {1, 1}, {1, 1}};
    CHECK_THROWS_AS(delaunay_triangulate(two), ValidationError);
}

TEST_CASE("delaunay empty-circumcircle property on a sample") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<float> coord(0.f, 50.f);
    std::vector<cv::Point2f> pts;
    for (int i = 0; i < 20; ++i) pts.push_back({coord(rng), coord(rng)});
    const auto tris = delaunay_triangulate(pts);
    for (const auto& t : tris) {
        const cv::Point2d a = pts[size_t(t[0])], b = pts[size_t(t[1])], c = pts[size_t(t[2])];
        const double d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
        if (std::abs(d) < 1e-9) continue;
        const double a2 = a.x * a.x + a.y * a.y;
        const double b2 = b.x * b.x + b.y * b.y;
        const double c2 = c.x * c.x + c.y * c.y;
        const double ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
        const double uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
        const double r2 = (a.x - ux) * (a.x - ux) + (a.y - uy) * (a.y - uy);
        for (size_t i = 0; i < pts.size(); ++i) {
            if (int(i) == t[0] || int(i) == t[1] || int(i) == t[2]) continue;
            const double dist2 = (pts[i].x - ux) * (pts[i].x - ux) + (pts[i].y - uy) * (pts[i].y - uy);
            CHECK(dist2 >= r2 * (1.0 - 1e-6));
        }
    }
}

TEST_CASE("convex hull indices of a square with interior point") {
    const std::vector<cv::Point2f> pts = {{0, 0}, {10, 0}, {10, 10}, {0, 10}, {5, 5}};
    const auto hull = convex_hull_indices(pts);
    CHECK(hull.size() == 4);
    for (int i : hull) CHECK(i != 4);
}
