#include "morphdet/landmarks.hpp"

#include <algorithm>

namespace morphdet {

void LandmarkSet::validate() const {
    if (int(points.size()) != kLandmarkCount)
        throw ValidationError("landmark set must have exactly 68 points, got " +
                              std::to_string(points.size()));
    if (image_size.width <= 0 || image_size.height <= 0)
        throw ValidationError("landmark set has empty image size");
}

void LandmarkSet::clamp_to_bounds() {
    for (auto& p : points) {
        p.x = std::clamp(p.x, 0.0f, float(image_size.width - 1));
        p.y = std::clamp(p.y, 0.0f, float(image_size.height - 1));
    }
}

const std::array<int, kLandmarkCount>& mirror_index_map() {
    static const std::array<int, kLandmarkCount> map = [] {
        std::array<int, kLandmarkCount> m{};
        for (int i = 0; i < 17; ++i) m[i] = 16 - i;                   // jaw
        for (int i = 0; i < 5; ++i) m[17 + i] = 26 - i;               // left brow -> right
        for (int i = 0; i < 5; ++i) m[22 + i] = 21 - i;               // right brow -> left
        for (int i = 27; i <= 30; ++i) m[i] = i;                      // nose bridge
        m[31] = 35; m[32] = 34; m[33] = 33; m[34] = 32; m[35] = 31;   // lower nose
        m[36] = 45; m[37] = 44; m[38] = 43; m[39] = 42; m[40] = 47; m[41] = 46;
        m[42] = 39; m[43] = 38; m[44] = 37; m[45] = 36; m[46] = 41; m[47] = 40;
        m[48] = 54; m[49] = 53; m[50] = 52; m[51] = 51; m[52] = 50; m[53] = 49; m[54] = 48;
        m[55] = 59; m[56] = 58; m[57] = 57; m[58] = 56; m[59] = 55;
        m[60] = 64; m[61] = 63; m[62] = 62; m[63] = 61; m[64] = 60;
        m[65] = 67; m[66] = 66; m[67] = 65;
        return m;
    }();
    return map;
}

LandmarkSet mirror_landmarks(const LandmarkSet& lm) {
    lm.validate();
    const auto& map = mirror_index_map();
    LandmarkSet out;
    out.image_size = lm.image_size;
    out.points.resize(kLandmarkCount);
    const float w = float(lm.image_size.width - 1);
    for (int i = 0; i < kLandmarkCount; ++i) {
        const cv::Point2f& src = lm.points[size_t(map[i])];
        out.points[size_t(i)] = {w - src.x, src.y};
    }
    return out;
}

std::array<cv::Point2f, 5> five_points_from_68(const LandmarkSet& lm) {
    lm.validate();
    auto mean_of = [&](int begin, int end) {
        cv::Point2f c(0.f, 0.f);
        for (int i = begin; i < end; ++i) c += lm.points[size_t(i)];
        return c / float(end - begin);
    };
    return {mean_of(36, 42), mean_of(42, 48), lm.points[30], lm.points[48], lm.points[54]};
}

std::vector<cv::Point2f> border_anchor_points(cv::Size size) {
    const float w = float(size.width - 1);
    const float h = float(size.height - 1);
    return {
        {0.f, 0.f},     {w, 0.f},      {w, h},        {0.f, h},
        {w / 2.f, 0.f}, {w, h / 2.f},  {w / 2.f, h},  {0.f, h / 2.f},
    };
}

}  // namespace morphdet
