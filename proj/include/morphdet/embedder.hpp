#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "morphdet/face_prep.hpp"
#include "morphdet/nn.hpp"

namespace morphdet {

struct EmbeddingVector {
    std::vector<float> values;  // embedding_dim or 2x embedding_dim (flip-concat)
    bool normalized = false;
};

// Euclidean distance between two embeddings. Throws on length or
// normalization-flag mismatch.
double pair_distance(const EmbeddingVector& a, const EmbeddingVector& b);

EmbeddingVector l2_normalize(EmbeddingVector v);

// Distance between raw backbone outputs, optionally through L2
// normalization of each side first.
double raw_pair_distance(const std::vector<float>& raw_a, const std::vector<float>& raw_b,
                         bool normalize);

// Gradient of the above distance w.r.t. the raw outputs, scaled by
// upstream (dLoss/dd). Zero at coincident embeddings.
void raw_pair_distance_backward(const std::vector<float>& raw_a,
                                const std::vector<float>& raw_b, bool normalize,
                                double upstream, std::vector<float>& grad_a,
                                std::vector<float>& grad_b);

// Read-only inference handle around the backbone. Embeddings are
// L2-normalized by default (configurable); flip-concat embeddings are
// normalized after concatenation.
class Embedder {
public:
    Embedder(SmallCnn net, bool normalize = true);

    int embedding_dim() const { return net_.embedding_dim(); }
    bool normalizes() const { return normalize_; }
    const std::string& identifier() const { return net_.identifier(); }
    std::string weights_fingerprint() const { return fingerprint_; }
    const SmallCnn& net() const { return net_; }

    EmbeddingVector embed(const AlignedFace& face) const;

    // [embed(face), embed(mirror(face))], optionally L2-normalized after
    // concatenation
    EmbeddingVector flip_concat_embed(const AlignedFace& face) const;

private:
    SmallCnn net_;
    bool normalize_;
    std::string fingerprint_;
};

// Binary array file + JSON index keyed by image path.
struct EmbeddingStore {
    int dim = 0;
    bool normalized = false;
    std::string fingerprint;
    std::map<std::string, std::vector<float>> by_path;

    const std::vector<float>& at(const std::string& path) const;
    EmbeddingVector vector_for(const std::string& path) const;
};

void save_embedding_store(const EmbeddingStore& store, const std::string& bin_path,
                          const std::string& index_path);
EmbeddingStore load_embedding_store(const std::string& bin_path, const std::string& index_path);

}  // namespace morphdet
