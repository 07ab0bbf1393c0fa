#include "morphdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include "morphdet/contrastive.hpp"
#include "morphdet/embedder.hpp"
#include "morphdet/hashing.hpp"
#include "morphdet/metrics.hpp"

namespace morphdet {

void TrainConfig::validate() const {
    if (margin <= 0.0) throw ValidationError("train config: margin must be > 0");
    if (batch_pairs <= 0) throw ValidationError("train config: batch_pairs must be positive");
    if (!(lr_decay > 0.0 && lr_decay < 1.0))
        throw ValidationError("train config: lr_decay must lie in (0,1)");
    if (lr_floor > lr_initial)
        throw ValidationError("train config: lr_floor must not exceed lr_initial");
    if (decay_every_epochs <= 0)
        throw ValidationError("train config: decay_every_epochs must be positive");
    if (epochs < 0) throw ValidationError("train config: epochs must be >= 0");
}

double TrainConfig::lr_at_epoch(int epoch) const {
    const double lr = lr_initial * std::pow(lr_decay, double(epoch / decay_every_epochs));
    return std::max(lr_floor, lr);
}

TrainConfig TrainConfig::pretrain_defaults() {
    TrainConfig c;
    c.stage = TrainStage::pretrain;
    c.lr_initial = 0.1;
    return c;
}

TrainConfig TrainConfig::finetune_defaults() {
    TrainConfig c;
    c.stage = TrainStage::finetune;
    c.lr_initial = 1e-3;
    return c;
}

namespace {

struct PairBatchItem {
    const PairSample* pair;
    bool hflip, vflip;
};

cv::Mat apply_flips(const cv::Mat& img, bool hflip, bool vflip) {
    if (!hflip && !vflip) return img;
    cv::Mat out;
    cv::flip(img, out, hflip && vflip ? -1 : (hflip ? 1 : 0));
    return out;
}

void check_both_labels(const std::vector<PairSample>& pairs, const std::string& what) {
    bool has0 = false, has1 = false;
    for (const auto& p : pairs) (p.label == 0 ? has0 : has1) = true;
    if (!has0 || !has1)
        throw ValidationError(what + " pair list must contain both genuine and imposter pairs");
}

double validation_deer(const SmallCnn& net, const std::vector<PairSample>& val_pairs,
                       bool normalize, const CropProvider& crops) {
    if (val_pairs.empty()) return -1.0;
    Embedder embedder(net, normalize);

    std::map<std::string, EmbeddingVector> cache;
    auto embedding_for = [&](const std::string& path) -> const EmbeddingVector& {
        auto it = cache.find(path);
        if (it == cache.end()) {
            AlignedFace face;
            face.pixels = crops(path);
            face.transform = cv::Matx23d(1, 0, 0, 0, 1, 0);
            it = cache.emplace(path, embedder.flip_concat_embed(face)).first;
        }
        return it->second;
    };

    ScoreSet scores;
    scores.method_tag = "val";
    scores.split_tag = "val";
    int idx = 0;
    for (const auto& p : val_pairs) {
        const double d = pair_distance(embedding_for(p.trusted.path),
                                       embedding_for(p.questioned.path));
        scores.entries.push_back({"val_" + std::to_string(idx++), d, p.label});
    }
    return d_eer(scores).first;
}

}  // namespace

TrainState train_stage(const std::vector<PairSample>& train_pairs,
                       const std::vector<PairSample>& val_pairs, const TrainConfig& config,
                       SmallCnn initial, const CropProvider& crops,
                       const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    if (train_pairs.empty()) throw ValidationError("training pair list is empty");
    check_both_labels(train_pairs, "training");

    TrainState state;
    state.weights = initial;
    state.fingerprint = initial.weights_fingerprint();
    state.provenance.push_back(state.fingerprint);
    state.best_val_deer = -1.0;
    if (config.epochs == 0) {
        state.current_lr = config.lr_at_epoch(0);
        return state;
    }

    SmallCnn net = std::move(initial);
    CnnGradients momentum = net.make_gradients();
    SmallCnn best = net;
    double best_deer = std::numeric_limits<double>::infinity();

    // preload crops once; training touches them every epoch
    std::map<std::string, cv::Mat> crop_cache;
    for (const auto& p : train_pairs) {
        for (const std::string& path : {p.trusted.path, p.questioned.path})
            if (!crop_cache.count(path)) crop_cache[path] = crops(path);
    }

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at_epoch(epoch);
        std::mt19937_64 rng(derive_seed(config.seed, "train/epoch/" + std::to_string(epoch)));

        std::vector<size_t> order(train_pairs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);

        std::bernoulli_distribution coin(0.5);
        double epoch_loss = 0.0;
        size_t n_seen = 0;

        for (size_t start = 0; start < order.size(); start += size_t(config.batch_pairs)) {
            const size_t end = std::min(order.size(), start + size_t(config.batch_pairs));
            std::vector<PairBatchItem> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                PairBatchItem item{&train_pairs[order[i]], false, false};
                if (config.augment_horizontal_flip) item.hflip = coin(rng);
                if (config.augment_vertical_flip) item.vflip = coin(rng);
                batch.push_back(item);
            }

            std::vector<CnnGradients> pair_grads(batch.size());
            std::vector<double> pair_loss(batch.size(), 0.0);

#pragma omp parallel for schedule(dynamic)
            for (long bi = 0; bi < long(batch.size()); ++bi) {
                const PairBatchItem& item = batch[size_t(bi)];
                const cv::Mat crop1 =
                    apply_flips(crop_cache.at(item.pair->trusted.path), item.hflip, item.vflip);
                const cv::Mat crop2 =
                    apply_flips(crop_cache.at(item.pair->questioned.path), item.hflip, item.vflip);

                ForwardCache cache1, cache2;
                const std::vector<float> raw1 = net.forward(SmallCnn::standardize(crop1), &cache1);
                const std::vector<float> raw2 = net.forward(SmallCnn::standardize(crop2), &cache2);

                const double d = raw_pair_distance(raw1, raw2, config.normalize_embeddings);
                const double dloss_dd =
                    contrastive_loss_gradient(d, item.pair->label, config.margin);
                std::vector<float> grad1, grad2;
                raw_pair_distance_backward(raw1, raw2, config.normalize_embeddings, dloss_dd,
                                           grad1, grad2);
                pair_loss[size_t(bi)] = contrastive_loss(d, item.pair->label, config.margin);

                pair_grads[size_t(bi)] = net.make_gradients();
                // both towers accumulate into one shared-parameter gradient
                net.backward(cache1, grad1, &pair_grads[size_t(bi)]);
                net.backward(cache2, grad2, &pair_grads[size_t(bi)]);
            }

            CnnGradients batch_grads = net.make_gradients();
            const float inv = 1.f / float(batch.size());
            for (const auto& g : pair_grads) batch_grads.add_scaled(g, inv);

            double batch_loss = 0.0;
            for (double l : pair_loss) batch_loss += l;
            batch_loss /= double(batch.size());
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(start / size_t(config.batch_pairs)));
            epoch_loss += batch_loss * double(batch.size());
            n_seen += batch.size();

            net.sgd_step(batch_grads, momentum, float(lr), float(config.momentum));
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = epoch_loss / double(n_seen);
        entry.val_deer = validation_deer(net, val_pairs,
                                         config.normalize_embeddings,
                                         [&](const std::string& path) {
                                             auto it = crop_cache.find(path);
                                             if (it != crop_cache.end()) return it->second;
                                             return crops(path);
                                         });
        state.log.push_back(entry);
        if (on_epoch) on_epoch(entry);

        state.epoch = epoch;
        state.current_lr = lr;
        if (!val_pairs.empty()) {
            if (entry.val_deer < best_deer) {
                best_deer = entry.val_deer;
                best = net;
            }
        } else {
            best = net;
        }
    }

    state.weights = std::move(best);
    state.fingerprint = state.weights.weights_fingerprint();
    state.best_val_deer = val_pairs.empty() ? -1.0 : best_deer;
    state.provenance.push_back(state.fingerprint);
    return state;
}

TrainState finetune_on_morphs(const TrainState& pretrained,
                              const std::vector<PairSample>& morph_train_pairs,
                              const std::vector<PairSample>& val_pairs, TrainConfig config,
                              const CropProvider& crops,
                              const std::function<void(const EpochLog&)>& on_epoch) {
    config.stage = TrainStage::finetune;
    TrainState state =
        train_stage(morph_train_pairs, val_pairs, config, pretrained.weights, crops, on_epoch);
    // provenance: pretrain chain followed by the finetuned fingerprint
    std::vector<std::string> chain = pretrained.provenance;
    chain.push_back(state.fingerprint);
    state.provenance = std::move(chain);
    return state;
}

void save_train_log_json(const TrainState& state, const std::string& path) {
    nlohmann::json j;
    j["epoch"] = state.epoch;
    j["current_lr"] = state.current_lr;
    j["best_val_deer"] = state.best_val_deer;
    j["fingerprint"] = state.fingerprint;
    j["provenance"] = state.provenance;
    j["log"] = nlohmann::json::array();
    for (const auto& e : state.log)
        j["log"].push_back({{"epoch", e.epoch},
                            {"lr", e.lr},
                            {"train_loss", e.train_loss},
                            {"val_deer", e.val_deer}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write training log: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace morphdet
