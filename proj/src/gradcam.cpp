#include "morphdet/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace morphdet {

namespace {

ActivationMap map_from_gradients(const SmallCnn& net, const ForwardCache& cache,
                                 const std::vector<float>& cam_grad, const std::string& layer_tag,
                                 const ImageRef& ref, bool zero_out) {
    const LayerShape shape = net.layer_shape(layer_tag);
    const int block = layer_tag.back() - '1';
    const std::vector<float>& act = cache.act[size_t(block)];
    const int hw = shape.h * shape.w;

    ActivationMap map;
    map.layer_tag = layer_tag;
    map.face_ref = ref;
    map.grid = cv::Mat1f(shape.h, shape.w, 0.f);

    if (!zero_out) {
        // channel weights: spatial mean of the distance gradient
        std::vector<double> weights(size_t(shape.c), 0.0);
        for (int c = 0; c < shape.c; ++c) {
            const float* plane = cam_grad.data() + size_t(c) * size_t(hw);
            double s = 0.0;
            for (int i = 0; i < hw; ++i) s += plane[i];
            weights[size_t(c)] = s / hw;
        }
        for (int y = 0; y < shape.h; ++y) {
            for (int x = 0; x < shape.w; ++x) {
                double v = 0.0;
                for (int c = 0; c < shape.c; ++c)
                    v += weights[size_t(c)] * act[size_t(c) * size_t(hw) + size_t(y * shape.w + x)];
                map.grid(y, x) = float(std::max(0.0, v));
            }
        }
        double min_v = 1e30, max_v = -1e30;
        for (int y = 0; y < shape.h; ++y)
            for (int x = 0; x < shape.w; ++x) {
                min_v = std::min(min_v, double(map.grid(y, x)));
                max_v = std::max(max_v, double(map.grid(y, x)));
            }
        if (max_v > min_v) {
            for (int y = 0; y < shape.h; ++y)
                for (int x = 0; x < shape.w; ++x)
                    map.grid(y, x) = float((map.grid(y, x) - min_v) / (max_v - min_v));
        } else {
            map.grid.setTo(0.f);
        }
    }

    cv::resize(map.grid, map.upsampled, {kAlignedSize, kAlignedSize}, 0, 0, cv::INTER_LINEAR);
    return map;
}

}  // namespace

std::pair<ActivationMap, ActivationMap> grad_cam_pair(const SmallCnn& net,
                                                      const AlignedFace& face_a,
                                                      const AlignedFace& face_b,
                                                      const std::string& layer_tag,
                                                      bool normalize_embeddings) {
    face_a.validate();
    face_b.validate();
    net.layer_shape(layer_tag);  // validates the tag up front

    ForwardCache cache_a, cache_b;
    const std::vector<float> raw_a = net.forward(SmallCnn::standardize(face_a.pixels), &cache_a);
    const std::vector<float> raw_b = net.forward(SmallCnn::standardize(face_b.pixels), &cache_b);

    const double d = raw_pair_distance(raw_a, raw_b, normalize_embeddings);
    std::vector<float> grad_a, grad_b;
    raw_pair_distance_backward(raw_a, raw_b, normalize_embeddings, 1.0, grad_a, grad_b);

    const bool degenerate = d < 1e-9;
    std::vector<float> cam_grad_a, cam_grad_b;
    if (!degenerate) {
        net.backward(cache_a, grad_a, nullptr, layer_tag, &cam_grad_a);
        net.backward(cache_b, grad_b, nullptr, layer_tag, &cam_grad_b);
    }

    return {map_from_gradients(net, cache_a, cam_grad_a, layer_tag, face_a.source, degenerate),
            map_from_gradients(net, cache_b, cam_grad_b, layer_tag, face_b.source, degenerate)};
}

double cam_distance(const ActivationMap& map_a, const ActivationMap& map_b,
                    double exclude_lower_fraction) {
    if (map_a.grid.size() != map_b.grid.size())
        throw ValidationError("cam_distance: activation map sizes differ");
    if (!(exclude_lower_fraction >= 0.0 && exclude_lower_fraction < 1.0))
        throw ValidationError("cam_distance: exclusion fraction must lie in [0,1)");
    const int h = map_a.grid.rows, w = map_a.grid.cols;
    const double row_limit = (1.0 - exclude_lower_fraction) * h;

    double sum = 0.0;
    size_t count = 0;
    for (int y = 0; y < h && y < row_limit; ++y) {
        for (int x = 0; x < w; ++x) {
            sum += std::abs(double(map_a.grid(y, x)) - double(map_b.grid(y, x)));
            ++count;
        }
    }
    return count == 0 ? 0.0 : sum / double(count);
}

void render_cam_overlay(const cv::Mat& face_pixels, const ActivationMap& map,
                        const std::string& png_path) {
    cv::Mat heat8;
    map.upsampled.convertTo(heat8, CV_8U, 255.0);
    cv::Mat colored;
    cv::applyColorMap(heat8, colored, cv::COLORMAP_JET);
    cv::Mat overlay;
    cv::addWeighted(face_pixels, 0.45, colored, 0.55, 0.0, overlay);
    if (!cv::imwrite(png_path, overlay))
        throw std::runtime_error("cannot write cam overlay: " + png_path);
}

}  // namespace morphdet
