#include "morphdet/synth_face.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "morphdet/hashing.hpp"

namespace fs = std::filesystem;

namespace morphdet {

namespace {

constexpr double kDegToRad = CV_PI / 180.0;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// face outline with chin taper, theta in radians (image coords, y down)
cv::Point2f outline_point(const FaceParams& p, const cv::Point2d& center, double theta) {
    const double s = std::sin(theta);
    const double squeeze = 1.0 - (1.0 - p.jaw_taper) * std::pow(std::max(0.0, s), 1.5);
    return {float(center.x + p.face_rx * squeeze * std::cos(theta)),
            float(center.y + p.face_ry * s)};
}

struct Geometry {
    std::vector<cv::Point2f> face_outline;
    std::vector<cv::Point2f> hair_cap;
    std::vector<cv::Point2f> left_brow, right_brow;     // 5 pts each
    std::vector<cv::Point2f> left_eye, right_eye;       // 6 pts each
    cv::Point2f left_iris, right_iris;
    std::vector<cv::Point2f> nose_bridge;               // 4 pts
    std::vector<cv::Point2f> nose_base;                 // 5 pts
    cv::Point2f nostril_l, nostril_r;
    std::vector<cv::Point2f> outer_lip;                 // 12 pts
    std::vector<cv::Point2f> inner_lip;                 // 8 pts
    double iris_r = 4.0, eye_ry = 6.0;
};

Geometry build_geometry(const FaceParams& p, const cv::Point2d& c) {
    Geometry g;
    g.iris_r = p.iris_r;
    g.eye_ry = p.eye_ry;

    for (int i = 0; i < 72; ++i)
        g.face_outline.push_back(outline_point(p, c, 2.0 * CV_PI * i / 72.0));

    // hair cap: enlarged upper outline arc closed with a chord
    {
        const double hb = std::clamp(p.hair_bottom / p.face_ry, -0.9, -0.1);
        const double theta0 = CV_PI + std::asin(-hb);  // left chord end, above center
        const double theta1 = 2.0 * CV_PI - std::asin(-hb);
        for (int i = 0; i <= 40; ++i) {
            const double t = theta0 + (theta1 - theta0) * i / 40.0;
            cv::Point2f q = outline_point(p, c, t);
            q = c + cv::Point2d(1.07 * (q.x - c.x), 1.07 * (q.y - c.y));
            g.hair_cap.push_back(q);
        }
    }

    // left brow: indices 17..21 run outer(left) to inner; x increases with k
    {
        const double bx = c.x - p.eye_dx;
        const double by = c.y + p.eye_y - p.eye_ry - p.brow_gap - p.brow_raise;
        const double hl = 1.45 * p.eye_rx;
        for (int k = 0; k < 5; ++k) {
            const double t = -1.0 + 0.5 * k;  // -1 outer .. +1 inner
            const double arch = 2.6 * (1.0 - t * t);
            const double tilt = p.brow_tilt * t * hl * 0.25;
            g.left_brow.push_back({float(bx + t * hl), float(by - arch + tilt)});
        }
        // right brow: indices 22..26 run inner to outer(right), mirror of left
        for (int k = 0; k < 5; ++k) {
            const double t = 1.0 - 0.5 * k;  // +1 inner .. -1 outer  (mirror of left 21..17)
            const double arch = 2.6 * (1.0 - t * t);
            const double tilt = p.brow_tilt * t * hl * 0.25;
            g.right_brow.push_back({float(c.x + p.eye_dx - t * hl), float(by - arch + tilt)});
        }
    }

    auto eye_points = [&](double sign) {
        std::vector<cv::Point2f> pts(6);
        const double ex = c.x + sign * p.eye_dx;
        const double ey = c.y + p.eye_y;
        pts[0] = {float(ex - p.eye_rx), float(ey)};
        pts[1] = {float(ex - p.eye_rx / 3.0), float(ey - p.eye_ry)};
        pts[2] = {float(ex + p.eye_rx / 3.0), float(ey - p.eye_ry)};
        pts[3] = {float(ex + p.eye_rx), float(ey)};
        pts[4] = {float(ex + p.eye_rx / 3.0), float(ey + p.eye_ry)};
        pts[5] = {float(ex - p.eye_rx / 3.0), float(ey + p.eye_ry)};
        return pts;
    };
    g.left_eye = eye_points(-1.0);
    g.right_eye = eye_points(+1.0);
    g.left_iris = {float(c.x - p.eye_dx), float(c.y + p.eye_y)};
    g.right_iris = {float(c.x + p.eye_dx), float(c.y + p.eye_y)};

    {
        const double top_y = c.y + p.eye_y;
        const double tip_y = c.y + p.nose_tip_y;
        for (int k = 0; k < 4; ++k) {
            const double t = double(k) / 3.0;
            g.nose_bridge.push_back({float(c.x), float(top_y + t * (tip_y - top_y))});
        }
        const double base_y = tip_y + 3.0;
        const double off[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
        const double dip[5] = {0.0, 1.0, 2.0, 1.0, 0.0};
        for (int k = 0; k < 5; ++k)
            g.nose_base.push_back(
                {float(c.x + off[k] * p.nose_w / 2.0), float(base_y + dip[k])});
        g.nostril_l = {float(c.x - 0.38 * p.nose_w), float(base_y + 0.5)};
        g.nostril_r = {float(c.x + 0.38 * p.nose_w), float(base_y + 0.5)};
    }

    {
        const double mx = c.x, my = c.y + p.mouth_y;
        const double w2 = p.mouth_w / 2.0;
        const double h_up = p.mouth_h * 0.5, h_lo = p.mouth_h * 0.62;
        auto curve = [&](double x) {
            const double u = (x - mx) / w2;
            return -p.mouth_curve * u * u;
        };
        for (int k = 0; k <= 6; ++k) {  // 48..54, left corner over the top to right corner
            const double phi = CV_PI - CV_PI * k / 6.0;
            const double x = mx + w2 * std::cos(phi);
            double y = my - h_up * std::sin(phi);
            if (k == 3) y += 1.2;  // cupid dip
            g.outer_lip.push_back({float(x), float(y + curve(x))});
        }
        for (int j = 1; j <= 5; ++j) {  // 55..59, right to left along the bottom
            const double phi = CV_PI * j / 6.0;
            const double x = mx + w2 * std::cos(phi);
            const double y = my + h_lo * std::sin(phi);
            g.outer_lip.push_back({float(x), float(y + curve(x))});
        }
        const double wi = 0.78 * w2;
        const double hi = std::max(0.3, p.mouth_open / 2.0);
        const double inner_phi_top[5] = {CV_PI, 0.75 * CV_PI, 0.5 * CV_PI, 0.25 * CV_PI, 0.0};
        for (int k = 0; k < 5; ++k) {  // 60..64
            const double x = mx + wi * std::cos(inner_phi_top[k]);
            const double y = my - hi * std::sin(inner_phi_top[k]);
            g.inner_lip.push_back({float(x), float(y + curve(x))});
        }
        const double inner_phi_bot[3] = {0.25 * CV_PI, 0.5 * CV_PI, 0.75 * CV_PI};
        for (int k = 0; k < 3; ++k) {  // 65..67
            const double x = mx + wi * std::cos(inner_phi_bot[k]);
            const double y = my + hi * std::sin(inner_phi_bot[k]);
            g.inner_lip.push_back({float(x), float(y + curve(x))});
        }
    }
    return g;
}

LandmarkSet geometry_landmarks(const FaceParams& p, const cv::Point2d& c, cv::Size canvas) {
    LandmarkSet lm;
    lm.image_size = canvas;
    lm.points.resize(kLandmarkCount);
    const Geometry g = build_geometry(p, c);
    for (int i = 0; i < 17; ++i) {
        const double theta = (190.0 - 12.5 * i) * kDegToRad;
        lm.points[size_t(i)] = outline_point(p, c, theta);
    }
    for (int k = 0; k < 5; ++k) lm.points[size_t(17 + k)] = g.left_brow[size_t(k)];
    for (int k = 0; k < 5; ++k) lm.points[size_t(22 + k)] = g.right_brow[size_t(k)];
    for (int k = 0; k < 4; ++k) lm.points[size_t(27 + k)] = g.nose_bridge[size_t(k)];
    for (int k = 0; k < 5; ++k) lm.points[size_t(31 + k)] = g.nose_base[size_t(k)];
    for (int k = 0; k < 6; ++k) lm.points[size_t(36 + k)] = g.left_eye[size_t(k)];
    for (int k = 0; k < 6; ++k) lm.points[size_t(42 + k)] = g.right_eye[size_t(k)];
    for (int k = 0; k < 12; ++k) lm.points[size_t(48 + k)] = g.outer_lip[size_t(k)];
    for (int k = 0; k < 8; ++k) lm.points[size_t(60 + k)] = g.inner_lip[size_t(k)];
    return lm;
}

void apply_pose(std::vector<cv::Point2f>& pts, const FaceParams& p, cv::Size canvas) {
    const double a = p.rot_deg * kDegToRad;
    const double cs = std::cos(a) * p.scale, sn = std::sin(a) * p.scale;
    const cv::Point2d c(canvas.width / 2.0, canvas.height / 2.0);
    for (auto& q : pts) {
        const double dx = q.x - c.x, dy = q.y - c.y;
        q.x = float(c.x + cs * dx - sn * dy + p.tx);
        q.y = float(c.y + sn * dx + cs * dy + p.ty);
    }
}

std::vector<cv::Point> to_fixed(const std::vector<cv::Point2f>& pts, int shift = 4) {
    std::vector<cv::Point> out;
    out.reserve(pts.size());
    const double f = double(1 << shift);
    for (const auto& p : pts)
        out.push_back({int(std::lround(p.x * f)), int(std::lround(p.y * f))});
    return out;
}

void fill_poly(cv::Mat& img, const std::vector<cv::Point2f>& pts, const cv::Vec3d& color) {
    const auto fixed = to_fixed(pts);
    cv::fillPoly(img, std::vector<std::vector<cv::Point>>{fixed},
                 cv::Scalar(color[0], color[1], color[2]), cv::LINE_AA, 4);
}

void draw_polyline(cv::Mat& img, const std::vector<cv::Point2f>& pts, const cv::Vec3d& color,
                   double thickness) {
    const auto fixed = to_fixed(pts);
    cv::polylines(img, std::vector<std::vector<cv::Point>>{fixed}, false,
                  cv::Scalar(color[0], color[1], color[2]),
                  std::max(1, int(std::lround(thickness))), cv::LINE_AA, 4);
}

void fill_circle(cv::Mat& img, const cv::Point2f& center, double radius, const cv::Vec3d& color,
                 double scale_y = 1.0) {
    std::vector<cv::Point2f> pts;
    for (int i = 0; i < 24; ++i) {
        const double t = 2.0 * CV_PI * i / 24.0;
        pts.push_back({float(center.x + radius * std::cos(t)),
                       float(center.y + radius * scale_y * std::sin(t))});
    }
    fill_poly(img, pts, color);
}

}  // namespace

FaceParams sample_identity(std::mt19937_64& rng, Gender gender) {
    FaceParams p;
    const double r = uniform(rng, 185, 225);
    p.skin = {r - uniform(rng, 45, 80), r - uniform(rng, 22, 42), r};
    const double hair_base = uniform(rng, 30, 115);
    p.hair = {hair_base * uniform(rng, 0.8, 1.2), hair_base * uniform(rng, 0.8, 1.1), hair_base};
    p.lip = {uniform(rng, 75, 110), uniform(rng, 58, 92), uniform(rng, 150, 200)};
    const double ir = uniform(rng, 30, 80);
    p.iris = {ir * uniform(rng, 0.8, 1.4), ir, ir * uniform(rng, 0.7, 1.1)};
    p.brow = {uniform(rng, 30, 75), uniform(rng, 30, 75), uniform(rng, 35, 85)};

    p.face_rx = uniform(rng, 58, 76);
    p.face_ry = uniform(rng, 80, 98);
    p.jaw_taper = uniform(rng, 0.76, 0.97);
    p.eye_dx = p.face_rx * uniform(rng, 0.42, 0.52);
    p.eye_y = -p.face_ry * uniform(rng, 0.20, 0.29);
    p.eye_rx = uniform(rng, 9.5, 13.0);
    p.eye_ry = uniform(rng, 5.0, 7.2);
    p.iris_r = uniform(rng, 3.5, 5.0);
    p.brow_gap = uniform(rng, 10, 16);
    p.brow_thick = uniform(rng, 2.6, 4.4);
    p.brow_tilt = uniform(rng, -0.5, 0.5);
    p.nose_tip_y = p.face_ry * uniform(rng, 0.18, 0.28);
    p.nose_w = uniform(rng, 9, 14);
    p.mouth_y = p.face_ry * uniform(rng, 0.46, 0.56);
    p.mouth_w = uniform(rng, 19, 29);
    p.mouth_h = uniform(rng, 5.5, 8.5);
    p.hair_bottom = -p.face_ry * uniform(rng, 0.40, 0.62);
    p.background = uniform(rng, 185, 224);

    if (gender == Gender::male) {
        p.jaw_taper = std::min(0.99, p.jaw_taper + 0.06);
        p.brow_thick += 0.9;
        p.hair_bottom = -p.face_ry * uniform(rng, 0.55, 0.68);
    } else if (gender == Gender::female) {
        p.mouth_h += 0.8;
        p.lip[2] = std::min(215.0, p.lip[2] + 12.0);
        p.hair_bottom = -p.face_ry * uniform(rng, 0.36, 0.52);
    }
    return p;
}

FaceParams sibling_identity(const FaceParams& base, std::mt19937_64& rng) {
    FaceParams p = base;
    auto nudge = [&](double v, double frac, double lo, double hi) {
        return std::clamp(v + v * uniform(rng, -frac, frac), lo, hi);
    };
    p.face_rx = nudge(p.face_rx, 0.035, 55, 80);
    p.face_ry = nudge(p.face_ry, 0.035, 76, 102);
    p.eye_dx = nudge(p.eye_dx, 0.05, 20, 42);
    p.mouth_w = nudge(p.mouth_w, 0.07, 17, 31);
    p.nose_w = nudge(p.nose_w, 0.08, 8, 15);
    p.jaw_taper = std::clamp(p.jaw_taper + uniform(rng, -0.03, 0.03), 0.74, 0.99);
    for (int c = 0; c < 3; ++c) {
        p.skin[c] = std::clamp(p.skin[c] + uniform(rng, -6, 6), 90.0, 235.0);
        p.hair[c] = std::clamp(p.hair[c] + uniform(rng, -10, 10), 20.0, 150.0);
    }
    return p;
}

FaceParams with_capture_variation(const FaceParams& identity, std::mt19937_64& rng) {
    FaceParams p = identity;
    p.mouth_curve = uniform(rng, -1.5, 3.5);
    p.mouth_open = std::max(0.0, uniform(rng, -3.0, 4.0));
    p.brow_raise = uniform(rng, -1.5, 2.5);
    p.rot_deg = uniform(rng, -5.0, 5.0);
    p.scale = uniform(rng, 0.95, 1.06);
    p.tx = uniform(rng, -7.0, 7.0);
    p.ty = uniform(rng, -7.0, 7.0);
    p.illum_angle = uniform(rng, 0.0, 2.0 * CV_PI);
    p.illum_strength = uniform(rng, 0.0, 0.05);
    p.noise_sigma = uniform(rng, 1.0, 2.4);
    p.noise_seed = rng();
    return p;
}

RenderedFace render_face(const FaceParams& p, cv::Size canvas) {
    const cv::Point2d center(canvas.width / 2.0, canvas.height / 2.0);
    Geometry g = build_geometry(p, center);
    LandmarkSet lm = geometry_landmarks(p, center, canvas);

    // one pose transform for every drawn primitive and every landmark
    apply_pose(g.face_outline, p, canvas);
    apply_pose(g.hair_cap, p, canvas);
    apply_pose(g.left_brow, p, canvas);
    apply_pose(g.right_brow, p, canvas);
    apply_pose(g.left_eye, p, canvas);
    apply_pose(g.right_eye, p, canvas);
    apply_pose(g.nose_bridge, p, canvas);
    apply_pose(g.nose_base, p, canvas);
    apply_pose(g.outer_lip, p, canvas);
    apply_pose(g.inner_lip, p, canvas);
    {
        std::vector<cv::Point2f> singles{g.left_iris, g.right_iris, g.nostril_l, g.nostril_r};
        apply_pose(singles, p, canvas);
        g.left_iris = singles[0];
        g.right_iris = singles[1];
        g.nostril_l = singles[2];
        g.nostril_r = singles[3];
    }
    apply_pose(lm.points, p, canvas);

    cv::Mat img(canvas, CV_8UC3,
                cv::Scalar(p.background * 0.97, p.background, p.background * 1.01));

    fill_poly(img, g.hair_cap, p.hair);
    fill_poly(img, g.face_outline, p.skin);
    // hair fringe over the forehead
    {
        std::vector<cv::Point2f> fringe;
        const double hb = std::clamp(p.hair_bottom / p.face_ry, -0.9, -0.1);
        const double theta0 = CV_PI + std::asin(-hb);
        const double theta1 = 2.0 * CV_PI - std::asin(-hb);
        for (int i = 0; i <= 40; ++i)
            fringe.push_back(outline_point(p, center, theta0 + (theta1 - theta0) * i / 40.0));
        apply_pose(fringe, p, canvas);
        fill_poly(img, fringe, p.hair);
    }

    draw_polyline(img, g.left_brow, p.brow, p.brow_thick * p.scale);
    draw_polyline(img, g.right_brow, p.brow, p.brow_thick * p.scale);

    const cv::Vec3d sclera(236, 240, 242);
    fill_poly(img, g.left_eye, sclera);
    fill_poly(img, g.right_eye, sclera);
    fill_circle(img, g.left_iris, p.iris_r * p.scale, p.iris);
    fill_circle(img, g.right_iris, p.iris_r * p.scale, p.iris);
    fill_circle(img, g.left_iris, 0.45 * p.iris_r * p.scale, cv::Vec3d(18, 16, 16));
    fill_circle(img, g.right_iris, 0.45 * p.iris_r * p.scale, cv::Vec3d(18, 16, 16));

    draw_polyline(img, g.nose_bridge, p.skin * 0.90, 2.0 * p.scale);
    draw_polyline(img, g.nose_base, p.skin * 0.84, 1.5 * p.scale);
    fill_circle(img, g.nostril_l, 1.6 * p.scale, p.skin * 0.45, 0.8);
    fill_circle(img, g.nostril_r, 1.6 * p.scale, p.skin * 0.45, 0.8);

    fill_poly(img, g.outer_lip, p.lip);
    if (p.mouth_open > 0.5)
        fill_poly(img, g.inner_lip, cv::Vec3d(38, 32, 46));
    else {
        std::vector<cv::Point2f> seam(g.inner_lip.begin(), g.inner_lip.begin() + 5);
        draw_polyline(img, seam, p.lip * 0.62, 1.0);
    }

    cv::GaussianBlur(img, img, cv::Size(3, 3), 0.55);

    // directional illumination ramp plus sensor noise
    cv::Mat imgf;
    img.convertTo(imgf, CV_32FC3);
    const double ux = std::cos(p.illum_angle), uy = std::sin(p.illum_angle);
    const double diag = std::hypot(canvas.width, canvas.height);
    std::mt19937_64 noise_rng(p.noise_seed);
    std::normal_distribution<float> gauss(0.f, float(p.noise_sigma));
    for (int y = 0; y < canvas.height; ++y) {
        cv::Vec3f* row = imgf.ptr<cv::Vec3f>(y);
        for (int x = 0; x < canvas.width; ++x) {
            const double proj = ((x - center.x) * ux + (y - center.y) * uy) / diag;
            const float gain = float(1.0 + p.illum_strength * 2.0 * proj);
            for (int c = 0; c < 3; ++c) row[x][c] = row[x][c] * gain + gauss(noise_rng);
        }
    }
    imgf.convertTo(img, CV_8UC3);

    lm.clamp_to_bounds();
    return {img, lm};
}

namespace {

void save_landmarks_json(const LandmarkSet& lm, const std::string& path) {
    nlohmann::json j;
    j["image_size"] = {lm.image_size.width, lm.image_size.height};
    j["points"] = nlohmann::json::array();
    for (const auto& p : lm.points) j["points"].push_back({p.x, p.y});
    std::ofstream out(path);
    out << j.dump() << "\n";
}

}  // namespace

Manifest generate_synth_dataset(const SynthDatasetSpec& spec, const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "landmarks");

    Manifest manifest;
    manifest.name = spec.name;

    const int n_male = int(std::llround(spec.male_fraction * spec.n_subjects));
    std::mt19937_64 id_rng(derive_seed(spec.seed, "synth/identities"));

    auto add_subject = [&](const std::string& sid, Gender gender, const FaceParams& identity,
                           const std::string& sibling_of) {
        SubjectRecord rec;
        rec.subject_id = sid;
        rec.gender = gender;
        rec.sibling_of = sibling_of;
        std::mt19937_64 img_rng(derive_seed(spec.seed, "synth/captures/" + sid));
        for (int k = 0; k < spec.images_per_subject; ++k) {
            const FaceParams capture = with_capture_variation(identity, img_rng);
            const RenderedFace rendered = render_face(capture);
            const std::string stem = sid + "_" + std::to_string(k);
            const std::string img_path = (fs::path(out_dir) / "images" / (stem + ".png")).string();
            if (!cv::imwrite(img_path, rendered.image))
                throw std::runtime_error("cannot write " + img_path);
            save_landmarks_json(rendered.landmarks,
                                (fs::path(out_dir) / "landmarks" / (stem + ".json")).string());
            ImageRef ref;
            ref.path = img_path;
            ref.kind = k == 0 ? ImageKind::bona_fide_reference : ImageKind::bona_fide_probe;
            ref.contributors = {sid};
            rec.images.push_back(std::move(ref));
        }
        manifest.subjects.push_back(std::move(rec));
    };

    for (int i = 0; i < spec.n_subjects; ++i) {
        const Gender gender = i < n_male ? Gender::male : Gender::female;
        char sid[16];
        std::snprintf(sid, sizeof(sid), "%c%03d", gender == Gender::male ? 'm' : 'f', i);
        const FaceParams identity = sample_identity(id_rng, gender);
        add_subject(sid, gender, identity, "");
        if (spec.siblings) {
            std::mt19937_64 sib_rng(derive_seed(spec.seed, std::string("synth/sibling/") + sid));
            const FaceParams sibling = sibling_identity(identity, sib_rng);
            add_subject(std::string(sid) + "s", gender, sibling, sid);
        }
    }

    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace morphdet
