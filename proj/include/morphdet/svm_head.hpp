#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <opencv2/ml.hpp>

#include "morphdet/embedder.hpp"

namespace morphdet {

enum class SvmInputMode { difference, concatenation };

std::string to_string(SvmInputMode m);
SvmInputMode svm_mode_from_string(const std::string& s);

struct SvmGrid {
    std::vector<double> c_values = {0.1, 1.0, 10.0, 100.0};
    // gamma = 2^k / feature_dim for k in -3..3
    std::vector<int> gamma_exponents = {-3, -2, -1, 0, 1, 2, 3};
};

// Euclidean decision head: the pair distance itself. Larger => morph.
double euclidean_score(const EmbeddingVector& trusted, const EmbeddingVector& questioned);

// RBF-SVM decision head over paired feature vectors. Features are
// e_trusted - e_questioned (difference mode, trusted-first order is part of
// the contract) or [e_trusted | e_questioned] (concatenation), standardized
// by train-set mean/std stored in the head. (C, gamma) are picked by grid
// search minimizing validation D-EER; scores are raw margins with polarity
// normalized so that larger => morph.
class SvmHead {
public:
    SvmHead() = default;

    bool fitted() const { return svm_ && svm_->isTrained(); }
    SvmInputMode mode() const { return mode_; }
    int feature_dim() const { return int(feature_mean_.size()); }
    double chosen_c() const { return c_; }
    double chosen_gamma() const { return gamma_; }

    static SvmHead fit(const std::vector<std::pair<std::vector<float>, std::vector<float>>>&
                           train_pairs,
                       const std::vector<int>& labels, SvmInputMode mode,
                       const SvmGrid& grid = {}, uint64_t seed = 0,
                       const std::vector<std::pair<std::vector<float>, std::vector<float>>>&
                           val_pairs = {},
                       const std::vector<int>& val_labels = {});

    double score(const std::vector<float>& trusted, const std::vector<float>& questioned) const;
    double score(const EmbeddingVector& trusted, const EmbeddingVector& questioned) const;

    void save(const std::string& model_path, const std::string& meta_path) const;
    static SvmHead load(const std::string& model_path, const std::string& meta_path);

    static std::vector<float> make_feature(const std::vector<float>& trusted,
                                           const std::vector<float>& questioned,
                                           SvmInputMode mode);

private:
    std::vector<float> standardized(const std::vector<float>& feature) const;

    cv::Ptr<cv::ml::SVM> svm_;
    SvmInputMode mode_ = SvmInputMode::difference;
    std::vector<float> feature_mean_, feature_std_;
    double c_ = 1.0, gamma_ = 1.0;
    double polarity_ = 1.0;  // flips raw margins so larger => morph
};

}  // namespace morphdet
