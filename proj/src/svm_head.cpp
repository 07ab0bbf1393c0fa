#include "morphdet/svm_head.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "morphdet/hashing.hpp"
#include "morphdet/metrics.hpp"

namespace morphdet {

std::string to_string(SvmInputMode m) {
    return m == SvmInputMode::difference ? "difference" : "concatenation";
}

SvmInputMode svm_mode_from_string(const std::string& s) {
    if (s == "difference") return SvmInputMode::difference;
    if (s == "concatenation") return SvmInputMode::concatenation;
    throw ValidationError("unknown svm input mode: " + s);
}

double euclidean_score(const EmbeddingVector& trusted, const EmbeddingVector& questioned) {
    return pair_distance(trusted, questioned);
}

std::vector<float> SvmHead::make_feature(const std::vector<float>& trusted,
                                         const std::vector<float>& questioned,
                                         SvmInputMode mode) {
    if (trusted.size() != questioned.size())
        throw ValidationError("svm feature: paired vectors have different lengths");
    if (mode == SvmInputMode::difference) {
        std::vector<float> f(trusted.size());
        for (size_t i = 0; i < f.size(); ++i) f[i] = trusted[i] - questioned[i];
        return f;
    }
    std::vector<float> f = trusted;
    f.insert(f.end(), questioned.begin(), questioned.end());
    return f;
}

namespace {

cv::Ptr<cv::ml::SVM> train_rbf_svm(const cv::Mat& features, const cv::Mat& labels, double c,
                                   double gamma) {
    auto svm = cv::ml::SVM::create();
    svm->setType(cv::ml::SVM::C_SVC);
    svm->setKernel(cv::ml::SVM::RBF);
    svm->setC(c);
    svm->setGamma(gamma);
    svm->setTermCriteria({cv::TermCriteria::MAX_ITER + cv::TermCriteria::EPS, 20000, 1e-6});
    svm->train(cv::ml::TrainData::create(features, cv::ml::ROW_SAMPLE, labels));
    return svm;
}

double raw_margin(const cv::Ptr<cv::ml::SVM>& svm, const cv::Mat& row) {
    cv::Mat out;
    svm->predict(row, out, cv::ml::StatModel::RAW_OUTPUT);
    return double(out.at<float>(0, 0));
}

}  // namespace

std::vector<float> SvmHead::standardized(const std::vector<float>& feature) const {
    if (feature.size() != feature_mean_.size())
        throw ValidationError("svm head: feature length " + std::to_string(feature.size()) +
                              " does not match fitted dimension " +
                              std::to_string(feature_mean_.size()));
    std::vector<float> out(feature.size());
    for (size_t i = 0; i < feature.size(); ++i)
        out[i] = (feature[i] - feature_mean_[i]) / feature_std_[i];
    return out;
}

SvmHead SvmHead::fit(
    const std::vector<std::pair<std::vector<float>, std::vector<float>>>& train_pairs,
    const std::vector<int>& labels, SvmInputMode mode, const SvmGrid& grid, uint64_t seed,
    const std::vector<std::pair<std::vector<float>, std::vector<float>>>& val_pairs,
    const std::vector<int>& val_labels) {
    if (train_pairs.empty() || train_pairs.size() != labels.size())
        throw ValidationError("svm fit: empty training data or label count mismatch");
    {
        bool has0 = false, has1 = false;
        for (int y : labels) (y == 0 ? has0 : has1) = true;
        if (!has0 || !has1) throw ValidationError("svm fit: both classes must be present");
    }

    SvmHead head;
    head.mode_ = mode;

    std::vector<std::vector<float>> features;
    features.reserve(train_pairs.size());
    for (const auto& [t, q] : train_pairs) features.push_back(make_feature(t, q, mode));
    const size_t dim = features.front().size();
    for (const auto& f : features) {
        if (f.size() != dim) throw ValidationError("svm fit: inconsistent feature lengths");
        for (float x : f)
            if (!std::isfinite(x)) throw ValidationError("svm fit: non-finite feature value");
    }

    // train-set standardization, stored in the head
    head.feature_mean_.assign(dim, 0.f);
    head.feature_std_.assign(dim, 0.f);
    for (const auto& f : features)
        for (size_t i = 0; i < dim; ++i) head.feature_mean_[i] += f[i];
    for (size_t i = 0; i < dim; ++i) head.feature_mean_[i] /= float(features.size());
    for (const auto& f : features)
        for (size_t i = 0; i < dim; ++i) {
            const float d = f[i] - head.feature_mean_[i];
            head.feature_std_[i] += d * d;
        }
    for (size_t i = 0; i < dim; ++i) {
        head.feature_std_[i] = std::sqrt(head.feature_std_[i] / float(features.size()));
        if (head.feature_std_[i] < 1e-8f) head.feature_std_[i] = 1.f;  // constant dimension
    }

    auto standardize_into = [&](const std::vector<std::vector<float>>& fs) {
        cv::Mat m(int(fs.size()), int(dim), CV_32F);
        for (int r = 0; r < m.rows; ++r) {
            const std::vector<float> s = head.standardized(fs[size_t(r)]);
            std::copy(s.begin(), s.end(), m.ptr<float>(r));
        }
        return m;
    };

    // selection split: explicit validation pairs if given, else a seeded
    // stratified 20% carve-out of the training set
    std::vector<int> fit_idx, sel_idx;
    std::vector<std::vector<float>> val_features;
    std::vector<int> sel_labels;
    if (!val_pairs.empty()) {
        if (val_pairs.size() != val_labels.size())
            throw ValidationError("svm fit: validation label count mismatch");
        for (size_t i = 0; i < train_pairs.size(); ++i) fit_idx.push_back(int(i));
        for (const auto& [t, q] : val_pairs) val_features.push_back(make_feature(t, q, mode));
        sel_labels = val_labels;
    } else {
        std::vector<int> by_class[2];
        for (size_t i = 0; i < labels.size(); ++i)
            by_class[labels[i] == 0 ? 0 : 1].push_back(int(i));
        std::mt19937_64 rng(derive_seed(seed, "svm/carve"));
        for (auto& cls : by_class) {
            std::shuffle(cls.begin(), cls.end(), rng);
            const size_t n_sel = std::max<size_t>(1, cls.size() / 5);
            for (size_t i = 0; i < cls.size(); ++i)
                (i < n_sel ? sel_idx : fit_idx).push_back(cls[i]);
        }
        std::sort(fit_idx.begin(), fit_idx.end());
        std::sort(sel_idx.begin(), sel_idx.end());
        for (int i : sel_idx) {
            val_features.push_back(features[size_t(i)]);
            sel_labels.push_back(labels[size_t(i)]);
        }
    }

    std::vector<std::vector<float>> fit_features;
    std::vector<int> fit_labels;
    for (int i : fit_idx) {
        fit_features.push_back(features[size_t(i)]);
        fit_labels.push_back(labels[size_t(i)]);
    }
    {
        bool has0 = false, has1 = false;
        for (int y : fit_labels) (y == 0 ? has0 : has1) = true;
        if (!has0 || !has1)
            throw ValidationError("svm fit: carve-out left a single-class training set");
    }

    const cv::Mat fit_mat = standardize_into(fit_features);
    cv::Mat fit_lab(int(fit_labels.size()), 1, CV_32S);
    for (int r = 0; r < fit_lab.rows; ++r) fit_lab.at<int>(r, 0) = fit_labels[size_t(r)];
    const cv::Mat sel_mat = standardize_into(val_features);

    double best_deer = std::numeric_limits<double>::infinity();
    double best_c = grid.c_values.front();
    double best_gamma = std::pow(2.0, grid.gamma_exponents.front()) / double(dim);
    for (double c : grid.c_values) {
        for (int k : grid.gamma_exponents) {
            const double gamma = std::pow(2.0, k) / double(dim);
            const auto svm = train_rbf_svm(fit_mat, fit_lab, c, gamma);

            // polarity on the candidate, then selection D-EER
            double mean_morph = 0.0, mean_bona = 0.0;
            int n_m = 0, n_b = 0;
            for (int r = 0; r < fit_mat.rows; ++r) {
                const double v = raw_margin(svm, fit_mat.row(r));
                if (fit_labels[size_t(r)] == 1) {
                    mean_morph += v;
                    ++n_m;
                } else {
                    mean_bona += v;
                    ++n_b;
                }
            }
            const double pol = mean_morph / n_m >= mean_bona / n_b ? 1.0 : -1.0;

            ScoreSet sel_scores;
            sel_scores.method_tag = "svm-grid";
            sel_scores.split_tag = "selection";
            for (int r = 0; r < sel_mat.rows; ++r)
                sel_scores.entries.push_back({"sel_" + std::to_string(r),
                                              pol * raw_margin(svm, sel_mat.row(r)),
                                              sel_labels[size_t(r)]});
            const double deer = d_eer(sel_scores).first;
            if (deer < best_deer) {
                best_deer = deer;
                best_c = c;
                best_gamma = gamma;
            }
        }
    }

    // final fit on every provided training pair with the chosen parameters
    const cv::Mat all_mat = standardize_into(features);
    cv::Mat all_lab(int(labels.size()), 1, CV_32S);
    for (int r = 0; r < all_lab.rows; ++r) all_lab.at<int>(r, 0) = labels[size_t(r)];
    head.svm_ = train_rbf_svm(all_mat, all_lab, best_c, best_gamma);
    head.c_ = best_c;
    head.gamma_ = best_gamma;

    double mean_morph = 0.0, mean_bona = 0.0;
    int n_m = 0, n_b = 0;
    for (int r = 0; r < all_mat.rows; ++r) {
        const double v = raw_margin(head.svm_, all_mat.row(r));
        if (labels[size_t(r)] == 1) {
            mean_morph += v;
            ++n_m;
        } else {
            mean_bona += v;
            ++n_b;
        }
    }
    head.polarity_ = mean_morph / n_m >= mean_bona / n_b ? 1.0 : -1.0;
    return head;
}

double SvmHead::score(const std::vector<float>& trusted,
                      const std::vector<float>& questioned) const {
    if (!fitted()) throw ValidationError("svm head: score called before fit");
    const std::vector<float> f = standardized(make_feature(trusted, questioned, mode_));
    cv::Mat row(1, int(f.size()), CV_32F);
    std::copy(f.begin(), f.end(), row.ptr<float>(0));
    return polarity_ * raw_margin(svm_, row);
}

double SvmHead::score(const EmbeddingVector& trusted, const EmbeddingVector& questioned) const {
    if (trusted.normalized != questioned.normalized)
        throw ValidationError("svm head: mixed normalization flags");
    return score(trusted.values, questioned.values);
}

void SvmHead::save(const std::string& model_path, const std::string& meta_path) const {
    if (!fitted()) throw ValidationError("svm head: save called before fit");
    svm_->save(model_path);
    nlohmann::json j;
    j["version"] = 1;
    j["mode"] = to_string(mode_);
    j["c"] = c_;
    j["gamma"] = gamma_;
    j["polarity"] = polarity_;
    j["feature_mean"] = feature_mean_;
    j["feature_std"] = feature_std_;
    j["model_sha256"] = sha256_file_hex(model_path);
    std::ofstream out(meta_path);
    if (!out) throw std::runtime_error("cannot write head metadata: " + meta_path);
    out << j.dump(2) << "\n";
}

SvmHead SvmHead::load(const std::string& model_path, const std::string& meta_path) {
    std::ifstream in(meta_path);
    if (!in) throw std::runtime_error("cannot open head metadata: " + meta_path);
    nlohmann::json j;
    in >> j;
    SvmHead head;
    head.mode_ = svm_mode_from_string(j.at("mode").get<std::string>());
    head.c_ = j.at("c").get<double>();
    head.gamma_ = j.at("gamma").get<double>();
    head.polarity_ = j.at("polarity").get<double>();
    head.feature_mean_ = j.at("feature_mean").get<std::vector<float>>();
    head.feature_std_ = j.at("feature_std").get<std::vector<float>>();
    const std::string expect = j.at("model_sha256").get<std::string>();
    const std::string actual = sha256_file_hex(model_path);
    if (expect != actual)
        throw ValidationError("svm model file hash mismatch for " + model_path + ": expected " +
                              expect + ", got " + actual);
    head.svm_ = cv::ml::SVM::load(model_path);
    if (!head.svm_ || !head.svm_->isTrained())
        throw ValidationError("svm model failed to load from " + model_path);
    return head;
}

}  // namespace morphdet
