// Derives the 3x3 8-filter ICA bank shipped under data/: samples patches
// from a deterministic procedural texture corpus, whitens them with the DC
// component removed, runs symmetric FastICA and writes the bank JSON with
// its content hash embedded. Rerunning with the same seed reproduces the
// committed file bit for bit.

#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>

#include "morphdet/baselines.hpp"

using namespace morphdet;

namespace {

cv::Mat1b procedural_texture(std::mt19937_64& rng, int size) {
    cv::Mat1f img(size, size, 0.f);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    // smooth ramp
    const double angle = uni(rng) * 2.0 * CV_PI;
    const double amp = 40.0 + 60.0 * uni(rng);
    const double wavelength = 8.0 + 40.0 * uni(rng);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            img(y, x) = float(128.0 + amp * std::sin((x * std::cos(angle) + y * std::sin(angle)) /
                                                     wavelength));

    // random blobs and bars
    const int n_shapes = 30;
    for (int i = 0; i < n_shapes; ++i) {
        const int cx = int(uni(rng) * size), cy = int(uni(rng) * size);
        const double level = 40.0 + 175.0 * uni(rng);
        if (uni(rng) < 0.5) {
            cv::circle(img, {cx, cy}, 2 + int(uni(rng) * 12), cv::Scalar(level), -1, cv::LINE_AA);
        } else {
            const int x2 = int(uni(rng) * size), y2 = int(uni(rng) * size);
            cv::line(img, {cx, cy}, {x2, y2}, cv::Scalar(level), 1 + int(uni(rng) * 3),
                     cv::LINE_AA);
        }
    }
    cv::GaussianBlur(img, img, {0, 0}, 0.8);

    std::normal_distribution<float> noise(0.f, 6.f);
    cv::Mat1b out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            out(y, x) = cv::saturate_cast<uint8_t>(img(y, x) + noise(rng));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"derive the pinned BSIF ICA filter bank"};
    std::string out_path = "data/bsif_3x3_8bit.json";
    uint64_t seed = 20240311;
    int n_patches = 60000;
    app.add_option("--out", out_path, "output bank json");
    app.add_option("--seed", seed, "derivation seed");
    app.add_option("--patches", n_patches, "number of sampled patches");
    CLI11_PARSE(app, argc, argv);

    constexpr int kPatch = 3, kDim = 9, kBits = 8;
    std::mt19937_64 rng(seed);

    // patch matrix, DC removed per patch
    Eigen::MatrixXd X(kDim, n_patches);
    {
        std::vector<cv::Mat1b> corpus;
        for (int i = 0; i < 24; ++i) corpus.push_back(procedural_texture(rng, 128));
        std::uniform_int_distribution<int> pick(0, int(corpus.size()) - 1);
        std::uniform_int_distribution<int> pos(0, 128 - kPatch - 1);
        for (int p = 0; p < n_patches; ++p) {
            const cv::Mat1b& img = corpus[size_t(pick(rng))];
            const int x0 = pos(rng), y0 = pos(rng);
            double mean = 0.0;
            for (int y = 0; y < kPatch; ++y)
                for (int x = 0; x < kPatch; ++x) mean += img(y0 + y, x0 + x);
            mean /= kDim;
            for (int y = 0; y < kPatch; ++y)
                for (int x = 0; x < kPatch; ++x)
                    X(y * kPatch + x, p) = img(y0 + y, x0 + x) - mean;
        }
    }

    // PCA whitening onto the kBits strongest directions
    const Eigen::VectorXd mu = X.rowwise().mean();
    X.colwise() -= mu;
    const Eigen::MatrixXd cov = X * X.transpose() / double(n_patches);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::VectorXd evals = eig.eigenvalues().reverse();
    Eigen::MatrixXd evecs = eig.eigenvectors().rowwise().reverse();
    Eigen::MatrixXd whitening(kBits, kDim);
    for (int i = 0; i < kBits; ++i)
        whitening.row(i) = evecs.col(i).transpose() / std::sqrt(std::max(evals(i), 1e-12));
    Eigen::MatrixXd Z = whitening * X;  // kBits x n_patches

    // symmetric FastICA with tanh nonlinearity
    Eigen::MatrixXd W(kBits, kBits);
    {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int i = 0; i < kBits; ++i)
            for (int j = 0; j < kBits; ++j) W(i, j) = gauss(rng);
    }
    auto orthogonalize = [](Eigen::MatrixXd& M) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M * M.transpose());
        const Eigen::MatrixXd inv_sqrt =
            es.eigenvectors() *
            es.eigenvalues().cwiseMax(1e-12).cwiseSqrt().cwiseInverse().asDiagonal() *
            es.eigenvectors().transpose();
        M = inv_sqrt * M;
    };
    orthogonalize(W);
    for (int iter = 0; iter < 200; ++iter) {
        const Eigen::MatrixXd WZ = W * Z;                       // kBits x n
        const Eigen::MatrixXd G = WZ.array().tanh().matrix();   // g
        const Eigen::VectorXd gp =
            (1.0 - WZ.array().tanh().square()).rowwise().mean();  // E[g']
        Eigen::MatrixXd W_new = G * Z.transpose() / double(n_patches) - gp.asDiagonal() * W;
        orthogonalize(W_new);
        const double delta = (W_new * W.transpose()).diagonal().cwiseAbs().minCoeff();
        W = W_new;
        if (1.0 - delta < 1e-10) break;
    }

    // filters in pixel space, zero-mean enforced exactly
    const Eigen::MatrixXd filters = W * whitening;  // kBits x kDim
    BsifFilterBank bank;
    bank.size = kPatch;
    bank.bits = kBits;
    for (int b = 0; b < kBits; ++b) {
        cv::Mat1d f(kPatch, kPatch);
        double sum = 0.0;
        for (int i = 0; i < kDim; ++i) sum += filters(b, i);
        const double adjust = sum / kDim;
        for (int y = 0; y < kPatch; ++y)
            for (int x = 0; x < kPatch; ++x) f(y, x) = filters(b, y * kPatch + x) - adjust;
        // force the residual float sum to exactly zero
        double residual = 0.0;
        for (int y = 0; y < kPatch; ++y)
            for (int x = 0; x < kPatch; ++x) residual += f(y, x);
        f(kPatch - 1, kPatch - 1) -= residual;
        bank.filters.push_back(std::move(f));
    }
    bank.sha256 = bsif_bank_content_hash(bank);
    save_bsif_bank(bank, out_path);
    std::cout << "wrote " << out_path << " sha256=" << bank.sha256 << "\n";
    return 0;
}
