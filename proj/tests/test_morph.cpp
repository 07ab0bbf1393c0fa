#include <doctest.h>

#include <cmath>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "morphdet/morph.hpp"
#include "morphdet/synth_face.hpp"

using namespace morphdet;

namespace {

double mean_abs_diff(const cv::Mat& a, const cv::Mat& b) {
    cv::Mat d;
    cv::absdiff(a, b, d);
    const cv::Scalar s = cv::sum(d);
    return (s[0] + s[1] + s[2]) / double(a.total() * 3);
}

struct Fixture {
    cv::Mat img_a, img_b;
    LandmarkSet lm_a, lm_b;
};

Fixture make_fixture(uint64_t seed) {
    std::mt19937_64 rng(seed);
    const FaceParams pa = sample_identity(rng, Gender::male);
    const FaceParams pb = sample_identity(rng, Gender::female);
    const RenderedFace fa = render_face(pa);
    const RenderedFace fb = render_face(pb);
    return {fa.image, fb.image, fa.landmarks, fb.landmarks};
}

}  // namespace

TEST_CASE("identity morph reproduces the source") {
    const Fixture f = make_fixture(100);
    const cv::Mat out = warp_blend(f.img_a, f.lm_a, f.img_a, f.lm_a, 0.5);
    CHECK(mean_abs_diff(out, f.img_a) <= 1.0);
}

TEST_CASE("alpha endpoints recover the warped sources") {
    const Fixture f = make_fixture(101);
    const cv::Mat at0 = warp_blend(f.img_a, f.lm_a, f.img_b, f.lm_b, 0.0);
    // alpha 0: averaged points equal lm_a, so A passes through unchanged
    CHECK(mean_abs_diff(at0, f.img_a) <= 1.0);
    const cv::Mat at1 = warp_blend(f.img_a, f.lm_a, f.img_b, f.lm_b, 1.0);
    CHECK(mean_abs_diff(at1, f.img_b) <= 1.0);
}

TEST_CASE("half-alpha morph is symmetric in its sources") {
    for (uint64_t seed : {102, 103, 104}) {
        const Fixture f = make_fixture(seed);
        const cv::Mat ab = warp_blend(f.img_a, f.lm_a, f.img_b, f.lm_b, 0.5);
        const cv::Mat ba = warp_blend(f.img_b, f.lm_b, f.img_a, f.lm_a, 0.5);
        CHECK(mean_abs_diff(ab, ba) <= 2.0);
    }
}

TEST_CASE("blend is a convex combination of the warped sources") {
    const Fixture f = make_fixture(105);
    const cv::Mat warped_a = warp_blend_f(f.img_a, f.lm_a, f.img_b, f.lm_b, 0.0);
    const cv::Mat warped_b = warp_blend_f(f.img_a, f.lm_a, f.img_b, f.lm_b, 1.0);
    // geometry differs between alpha values, so check the bound loosely via
    // the float blend against min/max of the endpoint *pixel ranges*
    const cv::Mat half = warp_blend_f(f.img_a, f.lm_a, f.img_b, f.lm_b, 0.5);
    double lo = 1e9, hi = -1e9, lo_h = 1e9, hi_h = -1e9;
    for (int y = 0; y < half.rows; ++y)
        for (int x = 0; x < half.cols; ++x)
            for (int c = 0; c < 3; ++c) {
                lo = std::min({lo, double(warped_a.at<cv::Vec3f>(y, x)[c]),
                               double(warped_b.at<cv::Vec3f>(y, x)[c])});
                hi = std::max({hi, double(warped_a.at<cv::Vec3f>(y, x)[c]),
                               double(warped_b.at<cv::Vec3f>(y, x)[c])});
                lo_h = std::min(lo_h, double(half.at<cv::Vec3f>(y, x)[c]));
                hi_h = std::max(hi_h, double(half.at<cv::Vec3f>(y, x)[c]));
            }
    CHECK(lo_h >= lo - 1e-3);
    CHECK(hi_h <= hi + 1e-3);
}

TEST_CASE("averaged landmarks interpolate the endpoints") {
    const Fixture f = make_fixture(106);
    const LandmarkSet avg = average_landmarks(f.lm_a, f.lm_b, 0.25);
    for (int i = 0; i < kLandmarkCount; ++i) {
        const cv::Point2f expect = 0.75f * f.lm_a.points[size_t(i)] + 0.25f * f.lm_b.points[size_t(i)];
        CHECK(std::abs(avg.points[size_t(i)].x - expect.x) < 1e-4);
        CHECK(std::abs(avg.points[size_t(i)].y - expect.y) < 1e-4);
    }
}

TEST_CASE("dimension mismatch is rejected") {
    const Fixture f = make_fixture(107);
    cv::Mat small;
    cv::resize(f.img_b, small, {128, 128});
    LandmarkSet lm_small = f.lm_b;
    lm_small.image_size = {128, 128};
    CHECK_THROWS_AS(warp_blend(f.img_a, f.lm_a, small, lm_small, 0.5), ValidationError);
}

TEST_CASE("splice preserves the recipient outside the feather band bit-exactly") {
    const Fixture f = make_fixture(108);
    const cv::Mat complete = warp_blend(f.img_a, f.lm_a, f.img_b, f.lm_b, 0.5);
    const cv::Mat spliced = splice_morph(complete, f.img_a, f.lm_a);
    const cv::Mat weights = splice_weight_map(f.lm_a);

    size_t inside = 0, outside = 0, band = 0;
    for (int y = 0; y < spliced.rows; ++y) {
        for (int x = 0; x < spliced.cols; ++x) {
            const float w = weights.at<float>(y, x);
            if (w <= 0.f) {
                ++outside;
                CHECK(spliced.at<cv::Vec3b>(y, x) == f.img_a.at<cv::Vec3b>(y, x));
            } else if (w >= 1.f) {
                ++inside;
                CHECK(spliced.at<cv::Vec3b>(y, x) == complete.at<cv::Vec3b>(y, x));
            } else {
                ++band;
            }
        }
    }
    // mask is a proper, non-empty subset of the frame
    CHECK(inside > 0);
    CHECK(outside > 0);
    CHECK(band > 0);
    CHECK(inside + band < spliced.total());
}

TEST_CASE("splicing an identity morph into its source is a no-op") {
    const Fixture f = make_fixture(109);
    const cv::Mat complete = warp_blend(f.img_a, f.lm_a, f.img_a, f.lm_a, 0.5);
    const cv::Mat spliced = splice_morph(complete, f.img_a, f.lm_a);
    CHECK(mean_abs_diff(spliced, f.img_a) <= 1.0);
}

TEST_CASE("splice weights decay monotonically with distance in the band") {
    const Fixture f = make_fixture(110);
    const cv::Mat weights = splice_weight_map(f.lm_a);
    double min_w = 2.0, max_w = -1.0;
    for (int y = 0; y < weights.rows; ++y)
        for (int x = 0; x < weights.cols; ++x) {
            const float w = weights.at<float>(y, x);
            CHECK(w >= 0.f);
            CHECK(w <= 1.f);
            min_w = std::min(min_w, double(w));
            max_w = std::max(max_w, double(w));
        }
    CHECK(min_w == 0.0);
    CHECK(max_w == 1.0);
}

TEST_CASE("morph recipe validation") {
    MorphRecipe r;
    r.source_a = "x";
    r.source_b = "y";
    r.alpha = 1.5;
    CHECK_THROWS_AS(r.validate(), ValidationError);
    r.alpha = 0.5;
    CHECK_NOTHROW(r.validate());
    r.mode = MorphMode::splicing;
    r.splice_recipient = 'z';
    CHECK_THROWS_AS(r.validate(), ValidationError);
}
