#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "morphdet/nn.hpp"
#include "morphdet/types.hpp"

namespace morphdet {

enum class TrainStage { pretrain, finetune };

struct TrainConfig {
    double margin = 1.0;  // on L2-normalized embeddings
    int batch_pairs = 64;
    double lr_initial = 0.1;       // pretrain default; finetune uses 1e-3
    double lr_decay = 0.9;
    int decay_every_epochs = 5;
    double lr_floor = 1e-6;
    TrainStage stage = TrainStage::pretrain;
    int epochs = 15;
    uint64_t seed = 0;
    bool augment_horizontal_flip = true;
    bool augment_vertical_flip = true;
    double momentum = 0.0;  // plain SGD unless configured otherwise
    bool normalize_embeddings = true;

    void validate() const;
    double lr_at_epoch(int epoch) const;  // max(floor, initial * decay^floor(epoch/every))

    static TrainConfig pretrain_defaults();
    static TrainConfig finetune_defaults();
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_deer = -1.0;  // -1 when no validation pairs were given
};

struct TrainState {
    int epoch = 0;
    double current_lr = 0.0;
    double best_val_deer = -1.0;
    SmallCnn weights;  // best checkpoint by validation D-EER (last epoch without validation)
    std::string fingerprint;
    std::vector<std::string> provenance;  // fingerprint chain across stages
    std::vector<EpochLog> log;
};

// Supplies the aligned 160x160 crop for an original image path.
using CropProvider = std::function<cv::Mat(const std::string& path)>;

// SGD over shuffled fixed-size pair batches with shared tower weights.
// Augmentation flips (horizontal/vertical, independent coins) are applied
// jointly to both images of a pair. Fully reproducible given config.seed.
// Throws ValidationError when the pair list misses a class and
// std::runtime_error when the loss turns non-finite.
TrainState train_stage(const std::vector<PairSample>& train_pairs,
                       const std::vector<PairSample>& val_pairs, const TrainConfig& config,
                       SmallCnn initial, const CropProvider& crops,
                       const std::function<void(const EpochLog&)>& on_epoch = nullptr);

// Identical mechanics with the finetune schedule; the provenance chain
// (pretrain fingerprint -> finetune fingerprint) is recorded in the result.
TrainState finetune_on_morphs(const TrainState& pretrained,
                              const std::vector<PairSample>& morph_train_pairs,
                              const std::vector<PairSample>& val_pairs, TrainConfig config,
                              const CropProvider& crops,
                              const std::function<void(const EpochLog&)>& on_epoch = nullptr);

void save_train_log_json(const TrainState& state, const std::string& path);

}  // namespace morphdet
