#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "morphdet/types.hpp"

namespace morphdet {

// Fixed inference/training backbone for the desk-scale pipeline: four
// strided conv blocks with ReLU, global average pooling and a linear
// projection to a 128-d embedding. Input is a 160x160x3 crop standardized
// per channel with the pinned constants below.
inline constexpr int kNetInput = 160;
inline constexpr int kEmbeddingDim = 128;
inline constexpr float kInputMean = 0.5f;  // applied to pixel/255
inline constexpr float kInputStd = 0.5f;

struct ConvSpec {
    int in_c, out_c, k, stride, pad;
    int out_size(int in_size) const { return (in_size + 2 * pad - k) / stride + 1; }
};

inline constexpr std::array<ConvSpec, 4> kConvSpecs = {{
    {3, 12, 5, 4, 2},   // block1: 12 x 40 x 40
    {12, 24, 3, 2, 1},  // block2: 24 x 20 x 20
    {24, 48, 3, 2, 1},  // block3: 48 x 10 x 10
    {48, 96, 3, 2, 1},  // block4: 96 x 5 x 5
}};

struct LayerShape {
    int c, h, w;
};

// Gradient (or momentum) buffers shaped like the network parameters.
struct CnnGradients {
    std::array<std::vector<float>, 4> conv_w, conv_b;
    std::vector<float> fc_w, fc_b;

    void zero();
    void add_scaled(const CnnGradients& other, float factor);
};

// Post-ReLU activations kept for backward passes and Grad-CAM.
struct ForwardCache {
    std::vector<float> input;                  // standardized 3x160x160
    std::array<std::vector<float>, 4> act;     // block outputs
    std::vector<float> pooled;                 // 96
    std::vector<float> embedding;              // 128, pre-normalization
};

class SmallCnn {
public:
    SmallCnn();                          // zero-sized until init or load
    static SmallCnn random_init(uint64_t seed);

    const std::string& identifier() const { return identifier_; }
    int embedding_dim() const { return kEmbeddingDim; }

    // input: standardized CHW float buffer of size 3*160*160
    std::vector<float> forward(const std::vector<float>& input, ForwardCache* cache) const;

    // Backprop from an embedding gradient. Accumulates parameter gradients
    // into grads (when non-null). When cam_layer names a conv block
    // ("block1".."block4"), the gradient w.r.t. that block's post-ReLU
    // feature maps is written to cam_grad.
    void backward(const ForwardCache& cache, const std::vector<float>& grad_embedding,
                  CnnGradients* grads, const std::string& cam_layer = "",
                  std::vector<float>* cam_grad = nullptr) const;

    CnnGradients make_gradients() const;

    // plain SGD with momentum over all parameters, fixed order
    void sgd_step(const CnnGradients& grads, CnnGradients& momentum, float lr,
                  float momentum_factor);

    LayerShape layer_shape(const std::string& layer_tag) const;
    std::vector<std::string> layer_tags() const;

    std::string weights_fingerprint() const;

    void save(const std::string& path) const;
    static SmallCnn load(const std::string& path);

    // Converts an aligned 8UC3 crop to the standardized CHW input buffer
    // (BGR channel order, as stored by the alignment stage).
    static std::vector<float> standardize(const cv::Mat& aligned_pixels);

private:
    std::array<std::vector<float>, 4> conv_w_, conv_b_;
    std::vector<float> fc_w_, fc_b_;  // 128x96, 128
    std::string identifier_ = "smallcnn-v1";

    friend struct SmallCnnTestAccess;
};

}  // namespace morphdet
