#include "morphdet/surf_lite.hpp"

#include <algorithm>
#include <cmath>

namespace morphdet {

namespace {

// integral image with one row/col zero border: I(y,x) = sum over [0,y)x[0,x)
cv::Mat1d integral_of(const cv::Mat1b& gray) {
    cv::Mat1d integral(gray.rows + 1, gray.cols + 1, 0.0);
    for (int y = 0; y < gray.rows; ++y) {
        double rowsum = 0.0;
        for (int x = 0; x < gray.cols; ++x) {
            rowsum += gray(y, x);
            integral(y + 1, x + 1) = integral(y, x + 1) + rowsum;
        }
    }
    return integral;
}

// sum over the inclusive pixel rectangle [x0..x1] x [y0..y1], clamped
double box_sum(const cv::Mat1d& integral, int x0, int y0, int x1, int y1) {
    const int w = integral.cols - 1, h = integral.rows - 1;
    x0 = std::clamp(x0, 0, w);
    y0 = std::clamp(y0, 0, h);
    x1 = std::clamp(x1 + 1, 0, w);
    y1 = std::clamp(y1 + 1, 0, h);
    if (x1 <= x0 || y1 <= y0) return 0.0;
    return integral(y1, x1) - integral(y0, x1) - integral(y1, x0) + integral(y0, x0);
}

// box-filter approximations of the scale-normalized second derivatives for
// filter size L (odd, >= 9); x,y is the filter center
struct HessianResponse {
    double det;
    double laplacian_sign;
};

HessianResponse hessian_at(const cv::Mat1d& integral, int x, int y, int size) {
    const int l = size / 3;          // lobe size
    const int hs = size / 2;         // half size
    const int hl = l / 2;

    // Dyy: three stacked horizontal lobes (top/middle/bottom), width 2l-1
    const int wx0 = x - (l - 1), wx1 = x + (l - 1);
    const double top = box_sum(integral, wx0, y - hs, wx1, y - hs + l - 1);
    const double mid = box_sum(integral, wx0, y - hl, wx1, y + hl);
    const double bot = box_sum(integral, wx0, y + hs - l + 1, wx1, y + hs);
    const double dyy = top + bot - 2.0 * mid;

    const int wy0 = y - (l - 1), wy1 = y + (l - 1);
    const double left = box_sum(integral, x - hs, wy0, x - hs + l - 1, wy1);
    const double cen = box_sum(integral, x - hl, wy0, x + hl, wy1);
    const double right = box_sum(integral, x + hs - l + 1, wy0, x + hs, wy1);
    const double dxx = left + right - 2.0 * cen;

    // Dxy: four l x l lobes around the center
    const double pp = box_sum(integral, x + 1, y + 1, x + l, y + l);
    const double pm = box_sum(integral, x + 1, y - l, x + l, y - 1);
    const double mp = box_sum(integral, x - l, y + 1, x - 1, y + l);
    const double mm = box_sum(integral, x - l, y - l, x - 1, y - 1);
    const double dxy = mm + pp - pm - mp;

    const double inv_area = 1.0 / double(size * size);
    const double nxx = dxx * inv_area;
    const double nyy = dyy * inv_area;
    const double nxy = dxy * inv_area;
    return {nxx * nyy - 0.81 * nxy * nxy, nxx + nyy >= 0 ? 1.0 : -1.0};
}

double haar_x(const cv::Mat1d& integral, int x, int y, int s) {
    return box_sum(integral, x, y - s / 2, x + s / 2 - 1, y + s / 2 - 1) -
           box_sum(integral, x - s / 2, y - s / 2, x - 1, y + s / 2 - 1);
}

double haar_y(const cv::Mat1d& integral, int x, int y, int s) {
    return box_sum(integral, x - s / 2, y, x + s / 2 - 1, y + s / 2 - 1) -
           box_sum(integral, x - s / 2, y - s / 2, x + s / 2 - 1, y - 1);
}

}  // namespace

std::vector<SurfKeypoint> surf_detect(const cv::Mat1b& gray, const SurfParams& params) {
    std::vector<SurfKeypoint> keypoints;
    if (gray.empty()) return keypoints;
    const cv::Mat1d integral = integral_of(gray);

    for (int o = 0; o < params.octaves; ++o) {
        const int step = 1 << o;
        std::vector<int> sizes;
        for (int l = 0; l < params.layers; ++l) sizes.push_back(3 * ((1 << o) * (l + 1) + 1));

        const int gw = gray.cols / step, gh = gray.rows / step;
        std::vector<cv::Mat1d> response(sizes.size());
        for (size_t li = 0; li < sizes.size(); ++li) {
            response[li] = cv::Mat1d(gh, gw, 0.0);
            const int border = sizes[li] / 2 + 1;
            for (int gy = 0; gy < gh; ++gy) {
                const int y = gy * step;
                if (y < border || y >= gray.rows - border) continue;
                for (int gx = 0; gx < gw; ++gx) {
                    const int x = gx * step;
                    if (x < border || x >= gray.cols - border) continue;
                    response[li](gy, gx) = hessian_at(integral, x, y, sizes[li]).det;
                }
            }
        }

        // 3x3x3 non-max suppression over middle layers
        for (size_t li = 1; li + 1 < sizes.size(); ++li) {
            for (int gy = 1; gy < gh - 1; ++gy) {
                for (int gx = 1; gx < gw - 1; ++gx) {
                    const double v = response[li](gy, gx);
                    if (v < params.hessian_threshold) continue;
                    bool is_max = true;
                    for (int dl = -1; dl <= 1 && is_max; ++dl)
                        for (int dy = -1; dy <= 1 && is_max; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                if (dl == 0 && dy == 0 && dx == 0) continue;
                                if (response[size_t(int(li) + dl)](gy + dy, gx + dx) >= v) {
                                    is_max = false;
                                    break;
                                }
                            }
                    if (!is_max) continue;
                    SurfKeypoint kp;
                    kp.pt = {float(gx * step), float(gy * step)};
                    kp.scale = 1.2f * float(sizes[li]) / 9.f;
                    kp.response = float(v);
                    keypoints.push_back(kp);
                }
            }
        }
    }

    std::sort(keypoints.begin(), keypoints.end(), [](const SurfKeypoint& a, const SurfKeypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.pt.y != b.pt.y) return a.pt.y < b.pt.y;
        return a.pt.x < b.pt.x;
    });
    return keypoints;
}

namespace {

float assign_orientation(const cv::Mat1d& integral, const SurfKeypoint& kp, cv::Size img) {
    const int s = std::max(2, int(std::lround(kp.scale)));
    std::vector<std::array<double, 3>> samples;  // angle, dx, dy
    for (int j = -6; j <= 6; ++j) {
        for (int i = -6; i <= 6; ++i) {
            if (i * i + j * j > 36) continue;
            const int x = int(kp.pt.x) + i * s;
            const int y = int(kp.pt.y) + j * s;
            if (x < 2 * s || y < 2 * s || x >= img.width - 2 * s || y >= img.height - 2 * s)
                continue;
            const double g = std::exp(-(i * i + j * j) / (2.0 * 2.5 * 2.5));
            const double dx = g * haar_x(integral, x, y, 4 * s);
            const double dy = g * haar_y(integral, x, y, 4 * s);
            samples.push_back({std::atan2(dy, dx), dx, dy});
        }
    }
    if (samples.empty()) return 0.f;

    double best_len = -1.0, best_angle = 0.0;
    for (int w = 0; w < 36; ++w) {
        const double win = w * CV_PI / 18.0 - CV_PI;
        double sx = 0.0, sy = 0.0;
        for (const auto& s3 : samples) {
            double da = s3[0] - win;
            while (da > CV_PI) da -= 2.0 * CV_PI;
            while (da < -CV_PI) da += 2.0 * CV_PI;
            if (da >= 0.0 && da < CV_PI / 3.0) {
                sx += s3[1];
                sy += s3[2];
            }
        }
        const double len = sx * sx + sy * sy;
        if (len > best_len) {
            best_len = len;
            best_angle = std::atan2(sy, sx);
        }
    }
    return float(best_angle);
}

}  // namespace

std::vector<std::vector<float>> surf_describe(const cv::Mat1b& gray,
                                              const std::vector<SurfKeypoint>& keypoints,
                                              const SurfParams& params) {
    const cv::Mat1d integral = integral_of(gray);
    std::vector<std::vector<float>> descriptors;
    descriptors.reserve(keypoints.size());

    for (const SurfKeypoint& kp : keypoints) {
        const double s = std::max(1.2, double(kp.scale));
        const float angle =
            params.upright ? 0.f : assign_orientation(integral, kp, gray.size());
        const double ca = std::cos(angle), sa = std::sin(angle);

        std::vector<float> desc(kSurfDescriptorDim, 0.f);
        const int haar = std::max(2, int(std::lround(2.0 * s)));
        for (int sub = 0; sub < 16; ++sub) {
            const int sub_x = sub % 4, sub_y = sub / 4;
            double sum_dx = 0.0, sum_adx = 0.0, sum_dy = 0.0, sum_ady = 0.0;
            for (int sj = 0; sj < 5; ++sj) {
                for (int si = 0; si < 5; ++si) {
                    // sample position in the oriented 20s x 20s grid
                    const double u = (sub_x * 5 + si - 9.5) * s;
                    const double v = (sub_y * 5 + sj - 9.5) * s;
                    const double gx = kp.pt.x + u * ca - v * sa;
                    const double gy = kp.pt.y + u * sa + v * ca;
                    const int xi = int(std::lround(gx));
                    const int yi = int(std::lround(gy));
                    if (xi < haar || yi < haar || xi >= gray.cols - haar ||
                        yi >= gray.rows - haar)
                        continue;
                    const double w = std::exp(-(u * u + v * v) / (2.0 * 3.3 * 3.3 * s * s));
                    const double rx = w * haar_x(integral, xi, yi, 2 * haar);
                    const double ry = w * haar_y(integral, xi, yi, 2 * haar);
                    // rotate the responses into the keypoint frame
                    const double dx = rx * ca + ry * sa;
                    const double dy = -rx * sa + ry * ca;
                    sum_dx += dx;
                    sum_adx += std::abs(dx);
                    sum_dy += dy;
                    sum_ady += std::abs(dy);
                }
            }
            desc[size_t(sub * 4 + 0)] = float(sum_dx);
            desc[size_t(sub * 4 + 1)] = float(sum_adx);
            desc[size_t(sub * 4 + 2)] = float(sum_dy);
            desc[size_t(sub * 4 + 3)] = float(sum_ady);
        }
        double norm = 0.0;
        for (float d : desc) norm += double(d) * d;
        norm = std::sqrt(norm);
        if (norm > 1e-9)
            for (float& d : desc) d = float(d / norm);
        descriptors.push_back(std::move(desc));
    }
    return descriptors;
}

}  // namespace morphdet
