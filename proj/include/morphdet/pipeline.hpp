#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "morphdet/trainer.hpp"
#include "morphdet/types.hpp"

namespace morphdet {

struct SynthSpecConfig {
    int subjects = 64;
    int images_per_subject = 4;
    double male_fraction = 0.5;
    bool siblings = false;
};

// Declarative experiment description. Parsed from JSON; the canonical JSON
// round-trip is also the basis for stage cache keys.
struct RunConfig {
    uint64_t seed = 7;
    std::string detector_backend = "geometric";
    std::string landmarker_backend = "geometric";

    // morph dataset source: generated or an existing manifest
    std::optional<SynthSpecConfig> dataset_synth;
    std::string dataset_manifest;

    // hard-pair pretraining source (optional)
    std::optional<SynthSpecConfig> pretrain_synth;
    std::string pretrain_manifest;

    double morph_alpha = 0.5;
    int morph_rounds = 1;  // circular pairings per split/gender group
    bool morph_complete = true;
    bool morph_splicing = true;

    double train_fraction = 0.5;
    double val_fraction_of_train = 0.2;

    TrainConfig pretrain_train = TrainConfig::pretrain_defaults();
    TrainConfig finetune_train = TrainConfig::finetune_defaults();

    std::vector<std::string> heads = {"euclidean", "svm_difference", "svm_concatenation"};
    std::vector<std::string> baselines = {"lbp", "bsif", "sift", "surf"};
    std::string bsif_bank_path = "data/bsif_3x3_8bit.json";

    std::string explain_layer = "block3";
    int explain_pairs = 60;
    double explain_exclude_lower = 0.45;

    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;  // canonical form
};

struct Finding {
    enum class Severity { error, warning };
    Severity severity = Severity::error;
    std::string path;     // config key the finding refers to
    std::string message;
};

// Side-effect-free config validation. Returns an empty list for a valid
// config. Throws ValidationError only for an unparseable document.
std::vector<Finding> validate_config(const nlohmann::json& raw);

nlohmann::json load_config_file(const std::string& path);  // parse errors carry location

struct RunManifest {
    std::string config_hash;
    std::map<std::string, std::string> stage_keys;        // stage -> cache key
    std::map<std::string, bool> stage_cached;             // stage -> reused?
    std::map<std::string, std::string> fingerprints;      // component fingerprints
    std::map<std::string, std::string> artifacts;         // relpath -> sha256
    std::string started_at, finished_at;
};

void save_run_manifest(const RunManifest& m, const std::string& path);

// Executes the stage graph (dataset -> split -> morph -> align -> pretrain
// -> finetune -> embed -> score -> baseline -> evaluate -> explain) under
// out_dir with content-addressed stage caching. Any stage failure rethrows
// with the stage name after persisting the partial manifest.
RunManifest run_experiment(const RunConfig& config, const std::string& out_dir,
                           std::ostream* log = nullptr);

}  // namespace morphdet
