#include <doctest.h>

#include <filesystem>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "morphdet/hashing.hpp"
#include "morphdet/synth_face.hpp"

using namespace morphdet;
namespace fs = std::filesystem;

namespace {

std::string image_hash(const cv::Mat& img) {
    return sha256_hex(img.data, img.total() * img.elemSize());
}

}  // namespace

TEST_CASE("rendering is deterministic for fixed parameters") {
    std::mt19937_64 rng(3);
    FaceParams p = sample_identity(rng, Gender::female);
    p.noise_seed = 99;
    const RenderedFace a = render_face(p);
    const RenderedFace b = render_face(p);
    CHECK(image_hash(a.image) == image_hash(b.image));
    CHECK(a.landmarks.points == b.landmarks.points);
}

TEST_CASE("ground-truth landmarks are anatomically ordered") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 8; ++i) {
        const FaceParams p = sample_identity(rng, i % 2 ? Gender::male : Gender::female);
        const RenderedFace face = render_face(p);
        REQUIRE(face.landmarks.points.size() == 68);

        double eye_y = 0, mouth_y = 0, brow_y = 0;
        for (int k = 36; k < 48; ++k) eye_y += face.landmarks.points[size_t(k)].y;
        for (int k = 48; k < 60; ++k) mouth_y += face.landmarks.points[size_t(k)].y;
        for (int k = 17; k < 27; ++k) brow_y += face.landmarks.points[size_t(k)].y;
        eye_y /= 12;
        mouth_y /= 12;
        brow_y /= 10;
        CHECK(brow_y < eye_y);
        CHECK(eye_y < mouth_y);

        // left of image is left: jaw endpoints straddle the face
        CHECK(face.landmarks.points[0].x < face.landmarks.points[16].x);
        // chin is the lowest jaw point
        CHECK(face.landmarks.points[8].y > face.landmarks.points[0].y);
    }
}

TEST_CASE("captures of one identity differ, identities differ more") {
    std::mt19937_64 rng(11);
    const FaceParams id_a = sample_identity(rng, Gender::male);
    const FaceParams id_b = sample_identity(rng, Gender::male);
    std::mt19937_64 var_rng(1);
    const RenderedFace a1 = render_face(with_capture_variation(id_a, var_rng));
    const RenderedFace a2 = render_face(with_capture_variation(id_a, var_rng));
    const RenderedFace b1 = render_face(with_capture_variation(id_b, var_rng));

    auto mean_abs_diff = [](const cv::Mat& x, const cv::Mat& y) {
        cv::Mat d;
        cv::absdiff(x, y, d);
        const cv::Scalar s = cv::mean(d);
        return (s[0] + s[1] + s[2]) / 3.0;
    };
    const double same_id = mean_abs_diff(a1.image, a2.image);
    const double diff_id = mean_abs_diff(a1.image, b1.image);
    CHECK(same_id > 0.0);
    CHECK(diff_id > same_id);
}

TEST_CASE("generated dataset has the requested structure") {
    const std::string dir = "/tmp/morphdet_test_synth";
    fs::remove_all(dir);
    SynthDatasetSpec spec;
    spec.n_subjects = 4;
    spec.images_per_subject = 2;
    spec.male_fraction = 0.5;
    spec.siblings = true;
    spec.seed = 21;
    const Manifest m = generate_synth_dataset(spec, dir);
    CHECK(m.subjects.size() == 8);  // 4 bases + 4 siblings
    int siblings = 0;
    for (const auto& s : m.subjects) {
        CHECK(s.images.size() == 2);
        CHECK(s.images[0].kind == ImageKind::bona_fide_reference);
        CHECK(s.images[1].kind == ImageKind::bona_fide_probe);
        for (const auto& img : s.images) CHECK(fs::exists(img.path));
        if (!s.sibling_of.empty()) ++siblings;
    }
    CHECK(siblings == 4);
    CHECK(fs::exists(fs::path(dir) / "manifest.json"));

    // regeneration with the same seed is identical
    const std::string dir2 = "/tmp/morphdet_test_synth2";
    fs::remove_all(dir2);
    const Manifest m2 = generate_synth_dataset(spec, dir2);
    for (size_t i = 0; i < m.subjects.size(); ++i) {
        for (size_t k = 0; k < m.subjects[i].images.size(); ++k) {
            const cv::Mat a = cv::imread(m.subjects[i].images[k].path);
            const cv::Mat b = cv::imread(m2.subjects[i].images[k].path);
            CHECK(image_hash(a) == image_hash(b));
        }
    }
}
