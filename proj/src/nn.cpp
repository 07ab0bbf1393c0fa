#include "morphdet/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include "morphdet/hashing.hpp"

namespace morphdet {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

constexpr int kGapChannels = kConvSpecs[3].out_c;  // 96

int spatial_after(int blocks) {
    int s = kNetInput;
    for (int i = 0; i < blocks; ++i) s = kConvSpecs[size_t(i)].out_size(s);
    return s;
}

// im2col: [C*k*k, oH*oW] column-major
void im2col(const float* in, int C, int H, int W, const ConvSpec& spec, ColMat& cols) {
    const int oh = spec.out_size(H), ow = spec.out_size(W);
    cols.resize(C * spec.k * spec.k, oh * ow);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int col = oy * ow + ox;
            float* dst = cols.data() + size_t(col) * size_t(cols.rows());
            int r = 0;
            for (int c = 0; c < C; ++c) {
                const float* plane = in + size_t(c) * size_t(H) * size_t(W);
                for (int ky = 0; ky < spec.k; ++ky) {
                    const int y = oy * spec.stride - spec.pad + ky;
                    for (int kx = 0; kx < spec.k; ++kx, ++r) {
                        const int x = ox * spec.stride - spec.pad + kx;
                        dst[r] = (y >= 0 && y < H && x >= 0 && x < W)
                                     ? plane[size_t(y) * size_t(W) + size_t(x)]
                                     : 0.f;
                    }
                }
            }
        }
    }
}

void col2im_add(const ColMat& cols, int C, int H, int W, const ConvSpec& spec, float* grad_in) {
    const int oh = spec.out_size(H), ow = spec.out_size(W);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int col = oy * ow + ox;
            const float* src = cols.data() + size_t(col) * size_t(cols.rows());
            int r = 0;
            for (int c = 0; c < C; ++c) {
                float* plane = grad_in + size_t(c) * size_t(H) * size_t(W);
                for (int ky = 0; ky < spec.k; ++ky) {
                    const int y = oy * spec.stride - spec.pad + ky;
                    for (int kx = 0; kx < spec.k; ++kx, ++r) {
                        const int x = ox * spec.stride - spec.pad + kx;
                        if (y >= 0 && y < H && x >= 0 && x < W)
                            plane[size_t(y) * size_t(W) + size_t(x)] += src[r];
                    }
                }
            }
        }
    }
}

}  // namespace

void CnnGradients::zero() {
    for (auto& v : conv_w) std::fill(v.begin(), v.end(), 0.f);
    for (auto& v : conv_b) std::fill(v.begin(), v.end(), 0.f);
    std::fill(fc_w.begin(), fc_w.end(), 0.f);
    std::fill(fc_b.begin(), fc_b.end(), 0.f);
}

void CnnGradients::add_scaled(const CnnGradients& other, float factor) {
    auto axpy = [factor](std::vector<float>& dst, const std::vector<float>& src) {
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
    };
    for (int l = 0; l < 4; ++l) {
        axpy(conv_w[size_t(l)], other.conv_w[size_t(l)]);
        axpy(conv_b[size_t(l)], other.conv_b[size_t(l)]);
    }
    axpy(fc_w, other.fc_w);
    axpy(fc_b, other.fc_b);
}

SmallCnn::SmallCnn() = default;

SmallCnn SmallCnn::random_init(uint64_t seed) {
    SmallCnn net;
    std::mt19937_64 rng(seed);
    auto he_fill = [&rng](std::vector<float>& v, size_t n, int fan_in) {
        std::normal_distribution<float> dist(0.f, std::sqrt(2.f / float(fan_in)));
        v.resize(n);
        for (auto& x : v) x = dist(rng);
    };
    for (int l = 0; l < 4; ++l) {
        const ConvSpec& s = kConvSpecs[size_t(l)];
        he_fill(net.conv_w_[size_t(l)], size_t(s.out_c) * size_t(s.in_c) * size_t(s.k) * size_t(s.k),
                s.in_c * s.k * s.k);
        net.conv_b_[size_t(l)].assign(size_t(s.out_c), 0.f);
    }
    he_fill(net.fc_w_, size_t(kEmbeddingDim) * size_t(kGapChannels), kGapChannels);
    net.fc_b_.assign(kEmbeddingDim, 0.f);
    return net;
}

CnnGradients SmallCnn::make_gradients() const {
    CnnGradients g;
    for (int l = 0; l < 4; ++l) {
        g.conv_w[size_t(l)].assign(conv_w_[size_t(l)].size(), 0.f);
        g.conv_b[size_t(l)].assign(conv_b_[size_t(l)].size(), 0.f);
    }
    g.fc_w.assign(fc_w_.size(), 0.f);
    g.fc_b.assign(fc_b_.size(), 0.f);
    return g;
}

std::vector<float> SmallCnn::forward(const std::vector<float>& input, ForwardCache* cache) const {
    if (conv_w_[0].empty()) throw ValidationError("backbone has no weights loaded");
    if (input.size() != size_t(3) * kNetInput * kNetInput)
        throw ValidationError("backbone input must be 3x160x160");

    if (cache) cache->input = input;

    std::vector<float> cur = input;
    int size = kNetInput;
    for (int l = 0; l < 4; ++l) {
        const ConvSpec& spec = kConvSpecs[size_t(l)];
        const int out_size = spec.out_size(size);
        ColMat cols;
        im2col(cur.data(), spec.in_c, size, size, spec, cols);
        Eigen::Map<const RowMat> W(conv_w_[size_t(l)].data(), spec.out_c,
                                   spec.in_c * spec.k * spec.k);
        std::vector<float> out(size_t(spec.out_c) * size_t(out_size) * size_t(out_size));
        Eigen::Map<RowMat> O(out.data(), spec.out_c, out_size * out_size);
        O.noalias() = W * cols;
        for (int c = 0; c < spec.out_c; ++c) {
            const float b = conv_b_[size_t(l)][size_t(c)];
            float* row = out.data() + size_t(c) * size_t(out_size) * size_t(out_size);
            for (int i = 0; i < out_size * out_size; ++i) row[i] = std::max(0.f, row[i] + b);
        }
        cur = std::move(out);
        size = out_size;
        if (cache) cache->act[size_t(l)] = cur;
    }

    // global average pool
    const int hw = size * size;
    std::vector<float> pooled(kGapChannels);
    for (int c = 0; c < kGapChannels; ++c) {
        double s = 0.0;
        const float* plane = cur.data() + size_t(c) * size_t(hw);
        for (int i = 0; i < hw; ++i) s += plane[i];
        pooled[size_t(c)] = float(s / hw);
    }
    if (cache) cache->pooled = pooled;

    std::vector<float> emb(kEmbeddingDim);
    Eigen::Map<const RowMat> Wfc(fc_w_.data(), kEmbeddingDim, kGapChannels);
    Eigen::Map<Eigen::VectorXf> e(emb.data(), kEmbeddingDim);
    Eigen::Map<const Eigen::VectorXf> g(pooled.data(), kGapChannels);
    Eigen::Map<const Eigen::VectorXf> b(fc_b_.data(), kEmbeddingDim);
    e.noalias() = Wfc * g + b;
    if (cache) cache->embedding = emb;
    return emb;
}

void SmallCnn::backward(const ForwardCache& cache, const std::vector<float>& grad_embedding,
                        CnnGradients* grads, const std::string& cam_layer,
                        std::vector<float>* cam_grad) const {
    if (grad_embedding.size() != size_t(kEmbeddingDim))
        throw ValidationError("embedding gradient has wrong length");
    int cam_index = -1;
    if (!cam_layer.empty()) {
        if (!cam_grad) throw ValidationError("cam_layer given without output buffer");
        layer_shape(cam_layer);  // validates the tag
        cam_index = cam_layer.back() - '1';
    }

    // fc backward
    const int s4 = spatial_after(4);
    Eigen::Map<const Eigen::VectorXf> ge(grad_embedding.data(), kEmbeddingDim);
    Eigen::Map<const Eigen::VectorXf> pooled(cache.pooled.data(), kGapChannels);
    if (grads) {
        Eigen::Map<RowMat> gW(grads->fc_w.data(), kEmbeddingDim, kGapChannels);
        gW.noalias() += ge * pooled.transpose();
        Eigen::Map<Eigen::VectorXf> gb(grads->fc_b.data(), kEmbeddingDim);
        gb.noalias() += ge;
    }
    Eigen::VectorXf grad_pooled(kGapChannels);
    Eigen::Map<const RowMat> Wfc(fc_w_.data(), kEmbeddingDim, kGapChannels);
    grad_pooled.noalias() = Wfc.transpose() * ge;

    // GAP backward
    std::vector<float> grad_act(size_t(kGapChannels) * size_t(s4) * size_t(s4));
    for (int c = 0; c < kGapChannels; ++c) {
        const float v = grad_pooled(c) / float(s4 * s4);
        float* plane = grad_act.data() + size_t(c) * size_t(s4) * size_t(s4);
        for (int i = 0; i < s4 * s4; ++i) plane[i] = v;
    }

    for (int l = 3; l >= 0; --l) {
        const ConvSpec& spec = kConvSpecs[size_t(l)];
        const int in_size = spatial_after(l);
        const int out_size = spec.out_size(in_size);
        const int ohw = out_size * out_size;

        if (cam_index == l && cam_grad) *cam_grad = grad_act;  // d(out)/d(post-ReLU maps)

        // ReLU mask from the cached post-activation
        const std::vector<float>& act = cache.act[size_t(l)];
        for (size_t i = 0; i < grad_act.size(); ++i)
            if (act[i] <= 0.f) grad_act[i] = 0.f;

        const float* in_ptr = l == 0 ? cache.input.data() : cache.act[size_t(l - 1)].data();
        ColMat cols;
        im2col(in_ptr, spec.in_c, in_size, in_size, spec, cols);

        Eigen::Map<const RowMat> gO(grad_act.data(), spec.out_c, ohw);
        if (grads) {
            Eigen::Map<RowMat> gW(grads->conv_w[size_t(l)].data(), spec.out_c,
                                  spec.in_c * spec.k * spec.k);
            gW.noalias() += gO * cols.transpose();
            for (int c = 0; c < spec.out_c; ++c)
                grads->conv_b[size_t(l)][size_t(c)] += gO.row(c).sum();
        }

        if (l == 0) break;  // gradients below the first block are never needed

        Eigen::Map<const RowMat> W(conv_w_[size_t(l)].data(), spec.out_c,
                                   spec.in_c * spec.k * spec.k);
        ColMat grad_cols(spec.in_c * spec.k * spec.k, ohw);
        grad_cols.noalias() = W.transpose() * gO;

        std::vector<float> grad_in(size_t(spec.in_c) * size_t(in_size) * size_t(in_size), 0.f);
        col2im_add(grad_cols, spec.in_c, in_size, in_size, spec, grad_in.data());
        grad_act = std::move(grad_in);
    }
}

void SmallCnn::sgd_step(const CnnGradients& grads, CnnGradients& momentum, float lr,
                        float momentum_factor) {
    auto update = [lr, momentum_factor](std::vector<float>& w, const std::vector<float>& g,
                                        std::vector<float>& m) {
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = momentum_factor * m[i] + g[i];
            w[i] -= lr * m[i];
        }
    };
    for (int l = 0; l < 4; ++l) {
        update(conv_w_[size_t(l)], grads.conv_w[size_t(l)], momentum.conv_w[size_t(l)]);
        update(conv_b_[size_t(l)], grads.conv_b[size_t(l)], momentum.conv_b[size_t(l)]);
    }
    update(fc_w_, grads.fc_w, momentum.fc_w);
    update(fc_b_, grads.fc_b, momentum.fc_b);
}

LayerShape SmallCnn::layer_shape(const std::string& layer_tag) const {
    for (int l = 0; l < 4; ++l) {
        if (layer_tag == "block" + std::to_string(l + 1)) {
            const int s = spatial_after(l + 1);
            return {kConvSpecs[size_t(l)].out_c, s, s};
        }
    }
    std::string available;
    for (const auto& t : layer_tags()) available += (available.empty() ? "" : ", ") + t;
    throw ValidationError("unknown layer tag '" + layer_tag + "' (available: " + available + ")");
}

std::vector<std::string> SmallCnn::layer_tags() const {
    return {"block1", "block2", "block3", "block4"};
}

std::string SmallCnn::weights_fingerprint() const {
    Sha256 h;
    h.update(identifier_);
    for (int l = 0; l < 4; ++l) {
        h.update(conv_w_[size_t(l)].data(), conv_w_[size_t(l)].size() * sizeof(float));
        h.update(conv_b_[size_t(l)].data(), conv_b_[size_t(l)].size() * sizeof(float));
    }
    h.update(fc_w_.data(), fc_w_.size() * sizeof(float));
    h.update(fc_b_.data(), fc_b_.size() * sizeof(float));
    return h.hex_digest();
}

namespace {
constexpr char kCheckpointMagic[8] = {'M', 'D', 'N', 'E', 'T', '0', '0', '1'};
}

void SmallCnn::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const uint32_t id_len = uint32_t(identifier_.size());
    out.write(reinterpret_cast<const char*>(&id_len), sizeof(id_len));
    out.write(identifier_.data(), long(identifier_.size()));
    auto write_vec = [&out](const std::vector<float>& v) {
        const uint64_t n = v.size();
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(v.data()), long(v.size() * sizeof(float)));
    };
    for (int l = 0; l < 4; ++l) {
        write_vec(conv_w_[size_t(l)]);
        write_vec(conv_b_[size_t(l)]);
    }
    write_vec(fc_w_);
    write_vec(fc_b_);
}

SmallCnn SmallCnn::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw ValidationError("not a backbone checkpoint: " + path);
    uint32_t id_len = 0;
    in.read(reinterpret_cast<char*>(&id_len), sizeof(id_len));
    if (id_len > 256) throw ValidationError("corrupt checkpoint header: " + path);
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);

    SmallCnn net;
    if (id != net.identifier_)
        throw ValidationError("checkpoint architecture '" + id + "' does not match '" +
                              net.identifier_ + "'");
    auto read_vec = [&in, &path](std::vector<float>& v, size_t expect) {
        uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (n != expect) throw ValidationError("checkpoint tensor size mismatch in " + path);
        v.resize(n);
        in.read(reinterpret_cast<char*>(v.data()), long(n * sizeof(float)));
    };
    for (int l = 0; l < 4; ++l) {
        const ConvSpec& s = kConvSpecs[size_t(l)];
        read_vec(net.conv_w_[size_t(l)],
                 size_t(s.out_c) * size_t(s.in_c) * size_t(s.k) * size_t(s.k));
        read_vec(net.conv_b_[size_t(l)], size_t(s.out_c));
    }
    read_vec(net.fc_w_, size_t(kEmbeddingDim) * size_t(kGapChannels));
    read_vec(net.fc_b_, size_t(kEmbeddingDim));
    if (!in) throw ValidationError("truncated checkpoint: " + path);
    return net;
}

std::vector<float> SmallCnn::standardize(const cv::Mat& aligned_pixels) {
    if (aligned_pixels.rows != kNetInput || aligned_pixels.cols != kNetInput ||
        aligned_pixels.type() != CV_8UC3)
        throw ValidationError("backbone input must be a 160x160x3 8-bit image (no silent resize)");
    std::vector<float> out(size_t(3) * kNetInput * kNetInput);
    for (int c = 0; c < 3; ++c) {
        float* plane = out.data() + size_t(c) * kNetInput * kNetInput;
        for (int y = 0; y < kNetInput; ++y) {
            const cv::Vec3b* row = aligned_pixels.ptr<cv::Vec3b>(y);
            for (int x = 0; x < kNetInput; ++x)
                plane[y * kNetInput + x] = (float(row[x][c]) / 255.f - kInputMean) / kInputStd;
        }
    }
    return out;
}

}  // namespace morphdet
