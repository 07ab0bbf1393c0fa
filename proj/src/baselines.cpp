#include "morphdet/baselines.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>
#include <opencv2/features2d.hpp>

#include "morphdet/hashing.hpp"
#include "morphdet/surf_lite.hpp"

namespace morphdet {

cv::Mat1b to_grayscale(const cv::Mat& bgr) {
    if (bgr.type() == CV_8UC1) return bgr;
    if (bgr.type() != CV_8UC3) throw ValidationError("grayscale conversion expects 8UC3 input");
    cv::Mat1b gray(bgr.size());
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        uint8_t* grow = gray.ptr<uint8_t>(y);
        for (int x = 0; x < bgr.cols; ++x)
            grow[x] = uint8_t(std::lround(0.299 * row[x][2] + 0.587 * row[x][1] +
                                          0.114 * row[x][0]));
    }
    return gray;
}

TextureDescriptor lbp_histogram(const cv::Mat& face) {
    const cv::Mat1b gray = to_grayscale(face);
    if (gray.rows < 3 || gray.cols < 3)
        throw ValidationError("lbp needs an image of at least 3x3");

    std::vector<double> hist(256, 0.0);
    // neighbor order: clockwise starting at the top-left
    const int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
    const int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
    size_t count = 0;
    for (int y = 1; y < gray.rows - 1; ++y) {
        for (int x = 1; x < gray.cols - 1; ++x) {
            const uint8_t center = gray(y, x);
            int code = 0;
            for (int k = 0; k < 8; ++k)
                if (gray(y + dy[k], x + dx[k]) >= center) code |= 1 << k;
            hist[size_t(code)] += 1.0;
            ++count;
        }
    }
    for (double& h : hist) h /= double(count);
    return {TextureKind::lbp, std::move(hist)};
}

std::string bsif_bank_content_hash(const BsifFilterBank& bank) {
    Sha256 h;
    const int32_t header[2] = {int32_t(bank.size), int32_t(bank.bits)};
    h.update(header, sizeof(header));
    for (const auto& f : bank.filters)
        for (int y = 0; y < f.rows; ++y) h.update(f.ptr<double>(y), size_t(f.cols) * sizeof(double));
    return h.hex_digest();
}

BsifFilterBank load_bsif_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("bsif filter bank missing: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bsif filter bank unreadable: " + path + ": " + e.what());
    }
    BsifFilterBank bank;
    bank.size = j.at("size").get<int>();
    bank.bits = j.at("bits").get<int>();
    for (const auto& jf : j.at("filters")) {
        cv::Mat1d f(bank.size, bank.size);
        for (int y = 0; y < bank.size; ++y)
            for (int x = 0; x < bank.size; ++x) f(y, x) = jf.at(size_t(y)).at(size_t(x)).get<double>();
        bank.filters.push_back(std::move(f));
    }
    if (int(bank.filters.size()) != bank.bits)
        throw ValidationError("bsif filter bank has " + std::to_string(bank.filters.size()) +
                              " filters, expected " + std::to_string(bank.bits));
    bank.sha256 = j.at("sha256").get<std::string>();
    const std::string actual = bsif_bank_content_hash(bank);
    if (actual != bank.sha256)
        throw ValidationError("bsif filter bank hash mismatch for " + path + ": expected " +
                              bank.sha256 + ", got " + actual);
    return bank;
}

void save_bsif_bank(const BsifFilterBank& bank, const std::string& path) {
    nlohmann::json j;
    j["size"] = bank.size;
    j["bits"] = bank.bits;
    j["filters"] = nlohmann::json::array();
    for (const auto& f : bank.filters) {
        nlohmann::json jf = nlohmann::json::array();
        for (int y = 0; y < f.rows; ++y) {
            nlohmann::json row = nlohmann::json::array();
            for (int x = 0; x < f.cols; ++x) row.push_back(f(y, x));
            jf.push_back(std::move(row));
        }
        j["filters"].push_back(std::move(jf));
    }
    j["sha256"] = bsif_bank_content_hash(bank);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write filter bank: " + path);
    out << j.dump(2) << "\n";
}

TextureDescriptor bsif_histogram(const cv::Mat& face, const BsifFilterBank& bank) {
    const cv::Mat1b gray = to_grayscale(face);
    const int r = bank.size / 2;

    std::vector<double> hist(size_t(1) << bank.bits, 0.0);
    auto at_replicated = [&](int y, int x) {
        return double(gray(std::clamp(y, 0, gray.rows - 1), std::clamp(x, 0, gray.cols - 1)));
    };
    for (int y = 0; y < gray.rows; ++y) {
        for (int x = 0; x < gray.cols; ++x) {
            int code = 0;
            for (int b = 0; b < bank.bits; ++b) {
                const cv::Mat1d& f = bank.filters[size_t(b)];
                double resp = 0.0;
                for (int ky = -r; ky <= r; ++ky)
                    for (int kx = -r; kx <= r; ++kx)
                        resp += f(ky + r, kx + r) * at_replicated(y + ky, x + kx);
                if (resp > 0.0) code |= 1 << b;
            }
            hist[size_t(code)] += 1.0;
        }
    }
    const double total = double(gray.total());
    for (double& h : hist) h /= total;
    return {TextureKind::bsif, std::move(hist)};
}

KeypointDescriptor keypoint_vector(const cv::Mat& face, KeypointKind kind) {
    const cv::Mat1b gray = to_grayscale(face);
    if (kind == KeypointKind::sift) {
        auto sift = cv::SIFT::create();
        std::vector<cv::KeyPoint> kps;
        cv::Mat desc;
        sift->detectAndCompute(gray, cv::noArray(), kps, desc);
        std::vector<float> mean(128, 0.f);
        if (!desc.empty()) {
            for (int r = 0; r < desc.rows; ++r)
                for (int c = 0; c < desc.cols; ++c) mean[size_t(c)] += desc.at<float>(r, c);
            for (float& v : mean) v /= float(desc.rows);
        }
        return {KeypointKind::sift, std::move(mean)};
    }

    const auto kps = surf_detect(gray);
    const auto descs = surf_describe(gray, kps);
    std::vector<float> mean(kSurfDescriptorDim, 0.f);
    if (!descs.empty()) {
        for (const auto& d : descs)
            for (size_t c = 0; c < d.size(); ++c) mean[c] += d[c];
        for (float& v : mean) v /= float(descs.size());
    }
    return {KeypointKind::surf, std::move(mean)};
}

double differential_classify(const std::vector<float>& feature_trusted,
                             const std::vector<float>& feature_questioned, const SvmHead& svm) {
    if (svm.mode() != SvmInputMode::difference)
        throw ValidationError("differential_classify requires a difference-mode svm head");
    return svm.score(feature_trusted, feature_questioned);
}

std::vector<float> texture_feature(const TextureDescriptor& d) {
    return std::vector<float>(d.histogram.begin(), d.histogram.end());
}

}  // namespace morphdet
