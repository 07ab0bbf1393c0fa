#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <opencv2/core.hpp>

#include "morphdet/landmarks.hpp"
#include "morphdet/types.hpp"

namespace morphdet {

// Parametric portrait used as the desk-scale testbed. Identity-level
// parameters describe the face geometry and coloring; per-image parameters
// add expression, pose jitter and photometric variation.
struct FaceParams {
    // identity
    cv::Vec3d skin{140, 170, 205};  // BGR
    cv::Vec3d hair{60, 70, 80};
    cv::Vec3d lip{90, 75, 175};
    cv::Vec3d iris{70, 55, 45};
    cv::Vec3d brow{55, 65, 75};
    double face_rx = 68, face_ry = 90;
    double jaw_taper = 0.88;         // chin narrowing factor
    double eye_dx = 30, eye_y = -22; // relative to face center
    double eye_rx = 11, eye_ry = 6.2, iris_r = 4.4;
    double brow_gap = 13, brow_thick = 3.2, brow_tilt = 0.0;
    double nose_tip_y = 22, nose_w = 11;
    double mouth_y = 46, mouth_w = 24, mouth_h = 7;
    double hair_bottom = -38;        // hair cap lower edge, relative to center
    double background = 205;

    // expression (per image)
    double mouth_curve = 0.0;  // >0 corners up
    double mouth_open = 0.0;   // inner lip opening in px
    double brow_raise = 0.0;

    // pose (per image), applied around the canvas center
    double rot_deg = 0.0, scale = 1.0, tx = 0.0, ty = 0.0;

    // photometric (per image)
    double illum_angle = 0.0, illum_strength = 0.0;
    double noise_sigma = 1.5;
    uint64_t noise_seed = 0;
};

struct RenderedFace {
    cv::Mat image;          // 8UC3
    LandmarkSet landmarks;  // ground-truth 68 points
};

inline constexpr int kSynthCanvas = 256;

// Identity-level parameters at canonical pose. Gender nudges a few shape
// priors so the stratified split has something real to stratify.
FaceParams sample_identity(std::mt19937_64& rng, Gender gender);

// A visually similar sibling of the given identity; used to build the
// hard-pair pretraining set.
FaceParams sibling_identity(const FaceParams& base, std::mt19937_64& rng);

// Expression, pose and photometric variation for one capture.
FaceParams with_capture_variation(const FaceParams& identity, std::mt19937_64& rng);

RenderedFace render_face(const FaceParams& params, cv::Size canvas = {kSynthCanvas, kSynthCanvas});

struct SynthDatasetSpec {
    int n_subjects = 64;
    int images_per_subject = 4;
    double male_fraction = 0.5;
    bool siblings = false;  // emit a hard sibling for every subject
    uint64_t seed = 7;
    std::string name = "synth";
};

// Renders the dataset into out_dir/images and writes out_dir/manifest.json.
// Also stores ground-truth landmarks per image under out_dir/landmarks as
// sidecar JSON (used only by generator-level tests, never by the pipeline).
Manifest generate_synth_dataset(const SynthDatasetSpec& spec, const std::string& out_dir);

}  // namespace morphdet
