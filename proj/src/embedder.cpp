#include "morphdet/embedder.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

namespace morphdet {

double pair_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size())
        throw ValidationError("pair_distance: embedding lengths differ (" +
                              std::to_string(a.values.size()) + " vs " +
                              std::to_string(b.values.size()) + ")");
    if (a.normalized != b.normalized)
        throw ValidationError("pair_distance: normalization flags differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = double(a.values[i]) - double(b.values[i]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

EmbeddingVector l2_normalize(EmbeddingVector v) {
    double norm = 0.0;
    for (float x : v.values) norm += double(x) * double(x);
    norm = std::sqrt(norm);
    if (norm > 1e-12)
        for (float& x : v.values) x = float(x / norm);
    v.normalized = true;
    return v;
}

double raw_pair_distance(const std::vector<float>& raw_a, const std::vector<float>& raw_b,
                         bool normalize) {
    if (raw_a.size() != raw_b.size())
        throw ValidationError("raw_pair_distance: lengths differ");
    double norm_a = 0.0, norm_b = 0.0;
    for (size_t i = 0; i < raw_a.size(); ++i) {
        norm_a += double(raw_a[i]) * raw_a[i];
        norm_b += double(raw_b[i]) * raw_b[i];
    }
    norm_a = normalize ? std::sqrt(std::max(norm_a, 1e-24)) : 1.0;
    norm_b = normalize ? std::sqrt(std::max(norm_b, 1e-24)) : 1.0;
    double d2 = 0.0;
    for (size_t i = 0; i < raw_a.size(); ++i) {
        const double d = double(raw_a[i]) / norm_a - double(raw_b[i]) / norm_b;
        d2 += d * d;
    }
    return std::sqrt(d2);
}

void raw_pair_distance_backward(const std::vector<float>& raw_a,
                                const std::vector<float>& raw_b, bool normalize,
                                double upstream, std::vector<float>& grad_a,
                                std::vector<float>& grad_b) {
    const size_t n = raw_a.size();
    if (raw_b.size() != n) throw ValidationError("raw_pair_distance_backward: lengths differ");

    double norm_a = 0.0, norm_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        norm_a += double(raw_a[i]) * raw_a[i];
        norm_b += double(raw_b[i]) * raw_b[i];
    }
    norm_a = normalize ? std::sqrt(std::max(norm_a, 1e-24)) : 1.0;
    norm_b = normalize ? std::sqrt(std::max(norm_b, 1e-24)) : 1.0;

    std::vector<double> na(n), nb(n);
    for (size_t i = 0; i < n; ++i) {
        na[i] = raw_a[i] / norm_a;
        nb[i] = raw_b[i] / norm_b;
    }
    double d2 = 0.0;
    for (size_t i = 0; i < n; ++i) d2 += (na[i] - nb[i]) * (na[i] - nb[i]);
    const double d = std::sqrt(d2);

    grad_a.assign(n, 0.f);
    grad_b.assign(n, 0.f);
    if (d < 1e-12) return;  // flat at coincident embeddings

    std::vector<double> ga(n), gb(n);
    for (size_t i = 0; i < n; ++i) {
        const double g = upstream * (na[i] - nb[i]) / d;
        ga[i] = g;
        gb[i] = -g;
    }
    if (!normalize) {
        for (size_t i = 0; i < n; ++i) {
            grad_a[i] = float(ga[i]);
            grad_b[i] = float(gb[i]);
        }
        return;
    }
    // through the normalization: project out the radial component
    double dot_a = 0.0, dot_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        dot_a += na[i] * ga[i];
        dot_b += nb[i] * gb[i];
    }
    for (size_t i = 0; i < n; ++i) {
        grad_a[i] = float((ga[i] - dot_a * na[i]) / norm_a);
        grad_b[i] = float((gb[i] - dot_b * nb[i]) / norm_b);
    }
}

Embedder::Embedder(SmallCnn net, bool normalize)
    : net_(std::move(net)), normalize_(normalize), fingerprint_(net_.weights_fingerprint()) {}

EmbeddingVector Embedder::embed(const AlignedFace& face) const {
    face.validate();
    EmbeddingVector v;
    v.values = net_.forward(SmallCnn::standardize(face.pixels), nullptr);
    for (float x : v.values)
        if (!std::isfinite(x)) throw ValidationError("non-finite embedding value");
    return normalize_ ? l2_normalize(std::move(v)) : v;
}

EmbeddingVector Embedder::flip_concat_embed(const AlignedFace& face) const {
    face.validate();
    EmbeddingVector v;
    v.values = net_.forward(SmallCnn::standardize(face.pixels), nullptr);
    cv::Mat mirrored;
    cv::flip(face.pixels, mirrored, 1);
    const std::vector<float> flipped = net_.forward(SmallCnn::standardize(mirrored), nullptr);
    v.values.insert(v.values.end(), flipped.begin(), flipped.end());
    return normalize_ ? l2_normalize(std::move(v)) : v;
}

const std::vector<float>& EmbeddingStore::at(const std::string& path) const {
    const auto it = by_path.find(path);
    if (it == by_path.end()) throw ValidationError("no embedding stored for " + path);
    return it->second;
}

EmbeddingVector EmbeddingStore::vector_for(const std::string& path) const {
    return {at(path), normalized};
}

void save_embedding_store(const EmbeddingStore& store, const std::string& bin_path,
                          const std::string& index_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write embedding store: " + bin_path);
    nlohmann::json index;
    index["dim"] = store.dim;
    index["normalized"] = store.normalized;
    index["fingerprint"] = store.fingerprint;
    index["rows"] = nlohmann::json::object();
    int64_t row = 0;
    for (const auto& [path, values] : store.by_path) {
        if (int(values.size()) != store.dim)
            throw ValidationError("embedding for " + path + " has wrong length");
        bin.write(reinterpret_cast<const char*>(values.data()),
                  long(values.size() * sizeof(float)));
        index["rows"][path] = row++;
    }
    std::ofstream idx(index_path);
    if (!idx) throw std::runtime_error("cannot write embedding index: " + index_path);
    idx << index.dump(2) << "\n";
}

EmbeddingStore load_embedding_store(const std::string& bin_path, const std::string& index_path) {
    std::ifstream idx(index_path);
    if (!idx) throw std::runtime_error("cannot open embedding index: " + index_path);
    nlohmann::json index;
    idx >> index;

    EmbeddingStore store;
    store.dim = index.at("dim").get<int>();
    store.normalized = index.at("normalized").get<bool>();
    store.fingerprint = index.value("fingerprint", "");

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open embedding store: " + bin_path);
    for (const auto& [path, row] : index.at("rows").items()) {
        std::vector<float> values(size_t(store.dim));
        bin.seekg(row.get<int64_t>() * int64_t(store.dim) * int64_t(sizeof(float)));
        bin.read(reinterpret_cast<char*>(values.data()), long(values.size() * sizeof(float)));
        if (!bin) throw std::runtime_error("truncated embedding store: " + bin_path);
        store.by_path[path] = std::move(values);
    }
    return store;
}

}  // namespace morphdet
