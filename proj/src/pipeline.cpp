#include "morphdet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "morphdet/baselines.hpp"
#include "morphdet/dataset.hpp"
#include "morphdet/embedder.hpp"
#include "morphdet/face_prep.hpp"
#include "morphdet/gradcam.hpp"
#include "morphdet/hashing.hpp"
#include "morphdet/metrics.hpp"
#include "morphdet/morph.hpp"
#include "morphdet/svm_head.hpp"
#include "morphdet/synth_face.hpp"

namespace fs = std::filesystem;

namespace morphdet {

using nlohmann::json;

namespace {

SynthSpecConfig synth_from_json(const json& j) {
    SynthSpecConfig s;
    s.subjects = j.value("subjects", s.subjects);
    s.images_per_subject = j.value("images_per_subject", s.images_per_subject);
    s.male_fraction = j.value("male_fraction", s.male_fraction);
    s.siblings = j.value("siblings", s.siblings);
    return s;
}

json synth_to_json(const SynthSpecConfig& s) {
    return {{"subjects", s.subjects},
            {"images_per_subject", s.images_per_subject},
            {"male_fraction", s.male_fraction},
            {"siblings", s.siblings}};
}

TrainConfig train_from_json(const json& j, TrainConfig base) {
    base.margin = j.value("margin", base.margin);
    base.batch_pairs = j.value("batch_pairs", base.batch_pairs);
    base.lr_initial = j.value("lr_initial", base.lr_initial);
    base.lr_decay = j.value("lr_decay", base.lr_decay);
    base.decay_every_epochs = j.value("decay_every_epochs", base.decay_every_epochs);
    base.lr_floor = j.value("lr_floor", base.lr_floor);
    base.epochs = j.value("epochs", base.epochs);
    base.momentum = j.value("momentum", base.momentum);
    base.augment_horizontal_flip = j.value("augment_horizontal_flip", base.augment_horizontal_flip);
    base.augment_vertical_flip = j.value("augment_vertical_flip", base.augment_vertical_flip);
    base.normalize_embeddings = j.value("normalize_embeddings", base.normalize_embeddings);
    return base;
}

json train_to_json(const TrainConfig& c) {
    return {{"margin", c.margin},
            {"batch_pairs", c.batch_pairs},
            {"lr_initial", c.lr_initial},
            {"lr_decay", c.lr_decay},
            {"decay_every_epochs", c.decay_every_epochs},
            {"lr_floor", c.lr_floor},
            {"epochs", c.epochs},
            {"momentum", c.momentum},
            {"augment_horizontal_flip", c.augment_horizontal_flip},
            {"augment_vertical_flip", c.augment_vertical_flip},
            {"normalize_embeddings", c.normalize_embeddings}};
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.detector_backend = j.value("detector", c.detector_backend);
    c.landmarker_backend = j.value("landmarker", c.landmarker_backend);

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (d.contains("synth")) c.dataset_synth = synth_from_json(d.at("synth"));
        c.dataset_manifest = d.value("manifest", "");
    }
    if (j.contains("pretrain_dataset")) {
        const json& d = j.at("pretrain_dataset");
        if (d.contains("synth")) {
            c.pretrain_synth = synth_from_json(d.at("synth"));
            c.pretrain_synth->siblings = true;  // hard pairs need the sibling structure
        }
        c.pretrain_manifest = d.value("manifest", "");
    }
    if (j.contains("morphs")) {
        const json& m = j.at("morphs");
        c.morph_alpha = m.value("alpha", c.morph_alpha);
        c.morph_rounds = m.value("rounds", c.morph_rounds);
        if (m.contains("modes")) {
            c.morph_complete = false;
            c.morph_splicing = false;
            for (const auto& mode : m.at("modes")) {
                if (mode == "complete") c.morph_complete = true;
                if (mode == "splicing") c.morph_splicing = true;
            }
        }
    }
    if (j.contains("split")) {
        c.train_fraction = j.at("split").value("train_fraction", c.train_fraction);
        c.val_fraction_of_train =
            j.at("split").value("val_fraction_of_train", c.val_fraction_of_train);
    }
    if (j.contains("train")) {
        if (j.at("train").contains("pretrain"))
            c.pretrain_train = train_from_json(j.at("train").at("pretrain"), c.pretrain_train);
        if (j.at("train").contains("finetune"))
            c.finetune_train = train_from_json(j.at("train").at("finetune"), c.finetune_train);
    }
    if (j.contains("heads")) c.heads = j.at("heads").get<std::vector<std::string>>();
    if (j.contains("baselines")) c.baselines = j.at("baselines").get<std::vector<std::string>>();
    c.bsif_bank_path = j.value("bsif_bank", c.bsif_bank_path);
    if (j.contains("explain")) {
        const json& e = j.at("explain");
        c.explain_layer = e.value("layer", c.explain_layer);
        c.explain_pairs = e.value("pairs", c.explain_pairs);
        c.explain_exclude_lower = e.value("exclude_lower_fraction", c.explain_exclude_lower);
    }
    return c;
}

json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["detector"] = detector_backend;
    j["landmarker"] = landmarker_backend;
    if (dataset_synth) j["dataset"]["synth"] = synth_to_json(*dataset_synth);
    if (!dataset_manifest.empty()) j["dataset"]["manifest"] = dataset_manifest;
    if (pretrain_synth) j["pretrain_dataset"]["synth"] = synth_to_json(*pretrain_synth);
    if (!pretrain_manifest.empty()) j["pretrain_dataset"]["manifest"] = pretrain_manifest;
    j["morphs"]["alpha"] = morph_alpha;
    j["morphs"]["rounds"] = morph_rounds;
    json modes = json::array();
    if (morph_complete) modes.push_back("complete");
    if (morph_splicing) modes.push_back("splicing");
    j["morphs"]["modes"] = modes;
    j["split"]["train_fraction"] = train_fraction;
    j["split"]["val_fraction_of_train"] = val_fraction_of_train;
    j["train"]["pretrain"] = train_to_json(pretrain_train);
    j["train"]["finetune"] = train_to_json(finetune_train);
    j["heads"] = heads;
    j["baselines"] = baselines;
    j["bsif_bank"] = bsif_bank_path;
    j["explain"]["layer"] = explain_layer;
    j["explain"]["pairs"] = explain_pairs;
    j["explain"]["exclude_lower_fraction"] = explain_exclude_lower;
    return j;
}

nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config parse error in " + path + " at byte " +
                              std::to_string(e.byte) + ": " + e.what());
    }
}

std::vector<Finding> validate_config(const json& raw) {
    std::vector<Finding> findings;
    auto error = [&](const std::string& path, const std::string& msg) {
        findings.push_back({Finding::Severity::error, path, msg});
    };
    auto warn = [&](const std::string& path, const std::string& msg) {
        findings.push_back({Finding::Severity::warning, path, msg});
    };

    RunConfig c;
    try {
        c = RunConfig::from_json(raw);
    } catch (const std::exception& e) {
        error("", std::string("config does not deserialize: ") + e.what());
        return findings;
    }

    if (!c.dataset_synth && c.dataset_manifest.empty())
        error("dataset", "either dataset.synth or dataset.manifest is required");
    if (c.dataset_synth && !c.dataset_manifest.empty())
        error("dataset", "dataset.synth and dataset.manifest are mutually exclusive");
    if (!c.dataset_manifest.empty() && !fs::exists(c.dataset_manifest))
        error("dataset.manifest", "manifest file does not exist: " + c.dataset_manifest);
    if (!c.pretrain_manifest.empty() && !fs::exists(c.pretrain_manifest))
        error("pretrain_dataset.manifest", "manifest file does not exist: " + c.pretrain_manifest);
    if (c.dataset_synth) {
        if (c.dataset_synth->subjects < 4)
            error("dataset.synth.subjects", "need at least 4 subjects");
        if (c.dataset_synth->images_per_subject < 2)
            error("dataset.synth.images_per_subject", "need at least 2 images per subject");
        if (!(c.dataset_synth->male_fraction >= 0.0 && c.dataset_synth->male_fraction <= 1.0))
            error("dataset.synth.male_fraction", "must lie in [0,1]");
    }
    if (!(c.morph_alpha >= 0.0 && c.morph_alpha <= 1.0))
        error("morphs.alpha", "alpha must lie in [0,1]");
    if (c.morph_rounds < 1) error("morphs.rounds", "must be >= 1");
    if (!c.morph_complete && !c.morph_splicing)
        error("morphs.modes", "at least one of complete/splicing is required");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        error("split.train_fraction", "must lie in (0,1)");
    if (!(c.val_fraction_of_train >= 0.0 && c.val_fraction_of_train < 1.0))
        error("split.val_fraction_of_train", "must lie in [0,1)");
    for (const TrainConfig* tc : {&c.pretrain_train, &c.finetune_train}) {
        try {
            tc->validate();
        } catch (const std::exception& e) {
            error(tc == &c.pretrain_train ? "train.pretrain" : "train.finetune", e.what());
        }
    }
    const std::set<std::string> known_heads = {"euclidean", "svm_difference",
                                               "svm_concatenation"};
    for (const auto& h : c.heads)
        if (!known_heads.count(h)) error("heads", "unknown head: " + h);
    const std::set<std::string> known_baselines = {"lbp", "bsif", "sift", "surf"};
    for (const auto& b : c.baselines)
        if (!known_baselines.count(b)) error("baselines", "unknown baseline: " + b);
    const bool needs_bank =
        std::find(c.baselines.begin(), c.baselines.end(), "bsif") != c.baselines.end();
    if (needs_bank && !fs::exists(c.bsif_bank_path))
        error("bsif_bank", "BSIF filter bank file does not exist: " + c.bsif_bank_path);
    if (c.detector_backend != "geometric")
        error("detector", "unknown detector backend: " + c.detector_backend);
    if (c.landmarker_backend != "geometric")
        error("landmarker", "unknown landmarker backend: " + c.landmarker_backend);
    const std::set<std::string> tags = {"block1", "block2", "block3", "block4"};
    if (!tags.count(c.explain_layer))
        error("explain.layer", "unknown layer tag: " + c.explain_layer);
    if (c.explain_pairs < 1) error("explain.pairs", "must be >= 1");
    if (!(c.explain_exclude_lower >= 0.0 && c.explain_exclude_lower < 1.0))
        error("explain.exclude_lower_fraction", "must lie in [0,1)");
    if (c.pretrain_synth && c.pretrain_train.epochs == 0)
        warn("train.pretrain.epochs", "pretrain dataset configured but 0 pretrain epochs");

    // referential integrity of a user-provided manifest
    if (!c.dataset_manifest.empty() && fs::exists(c.dataset_manifest)) {
        try {
            load_manifest(c.dataset_manifest);
        } catch (const std::exception& e) {
            error("dataset.manifest", e.what());
        }
    }
    return findings;
}

void save_run_manifest(const RunManifest& m, const std::string& path) {
    json j;
    j["config_hash"] = m.config_hash;
    j["stage_keys"] = m.stage_keys;
    j["stage_cached"] = m.stage_cached;
    j["fingerprints"] = m.fingerprints;
    j["artifacts"] = m.artifacts;
    j["started_at"] = m.started_at;
    j["finished_at"] = m.finished_at;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write run manifest: " + path);
    out << j.dump(2) << "\n";
}

namespace {

std::string now_string() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// stage cache: a stage directory is reusable when its recorded key matches
// and every recorded output still hashes to the recorded value
class StageRunner {
public:
    StageRunner(const std::string& out_dir, RunManifest& manifest, std::ostream* log)
        : out_dir_(out_dir), manifest_(manifest), log_(log) {}

    // fn must write all its outputs under dir and return the list of
    // relative output paths
    void run(const std::string& name, const std::string& key,
             const std::function<std::vector<std::string>(const std::string& dir)>& fn) {
        const fs::path dir = fs::path(out_dir_) / name;
        const fs::path stage_manifest = dir / "stage_manifest.json";
        manifest_.stage_keys[name] = key;

        if (fs::exists(stage_manifest)) {
            try {
                json j;
                std::ifstream in(stage_manifest);
                in >> j;
                if (j.at("key").get<std::string>() == key) {
                    bool ok = true;
                    for (const auto& [rel, hash] : j.at("outputs").items()) {
                        const fs::path p = dir / rel;
                        if (!fs::exists(p) || sha256_file_hex(p.string()) != hash.get<std::string>()) {
                            ok = false;
                            break;
                        }
                    }
                    if (ok) {
                        manifest_.stage_cached[name] = true;
                        if (log_) *log_ << "[" << name << "] cache hit\n";
                        return;
                    }
                }
            } catch (...) {
                // fall through to a fresh run
            }
        }

        if (log_) *log_ << "[" << name << "] running...\n";
        std::error_code ec;
        fs::remove_all(dir, ec);
        fs::create_directories(dir);
        std::vector<std::string> outputs;
        try {
            outputs = fn(dir.string());
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + name + "' failed: " + e.what());
        }
        json j;
        j["key"] = key;
        j["outputs"] = json::object();
        for (const auto& rel : outputs)
            j["outputs"][rel] = sha256_file_hex((dir / rel).string());
        std::ofstream out(stage_manifest);
        out << j.dump(2) << "\n";
        manifest_.stage_cached[name] = false;
    }

private:
    std::string out_dir_;
    RunManifest& manifest_;
    std::ostream* log_;
};

std::vector<std::string> list_outputs(const std::string& dir) {
    std::vector<std::string> rels;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), dir).string();
        if (rel == "stage_manifest.json") continue;
        rels.push_back(rel);
    }
    std::sort(rels.begin(), rels.end());
    return rels;
}

struct MorphPlan {
    std::string subject_a, subject_b;
    std::string image_a, image_b;  // reference images
    MorphMode mode;
    char splice_recipient;
    std::string out_name;
};

// circular pairings of subjects inside one split side and gender group
std::vector<MorphPlan> plan_morphs(const Manifest& manifest, const SplitSpec& split,
                                   const RunConfig& cfg) {
    std::vector<MorphPlan> plans;
    for (const std::string which : {"train", "val", "test"}) {
        const auto& members = split.subjects_of(which);
        std::map<Gender, std::vector<const SubjectRecord*>> groups;
        for (const auto& s : manifest.subjects)
            if (members.count(s.subject_id)) groups[s.gender].push_back(&s);
        for (auto& [gender, subjects] : groups) {
            std::sort(subjects.begin(), subjects.end(),
                      [](const SubjectRecord* a, const SubjectRecord* b) {
                          return a->subject_id < b->subject_id;
                      });
            const int n = int(subjects.size());
            if (n < 2) continue;
            std::set<std::pair<int, int>> used;
            for (int round = 1; round <= cfg.morph_rounds; ++round) {
                for (int i = 0; i < n; ++i) {
                    const int a = i, b = (i + round) % n;
                    if (a == b) continue;
                    const auto key = std::minmax(a, b);
                    if (!used.insert(key).second) continue;
                    const SubjectRecord* sa = subjects[size_t(key.first)];
                    const SubjectRecord* sb = subjects[size_t(key.second)];
                    if (sa->images.empty() || sb->images.empty()) continue;

                    auto reference_image = [](const SubjectRecord* s) {
                        for (const auto& img : s->images)
                            if (img.kind == ImageKind::bona_fide_reference) return img.path;
                        return s->images.front().path;
                    };
                    const std::string base =
                        "morph_" + sa->subject_id + "_" + sb->subject_id;
                    if (cfg.morph_complete) {
                        MorphPlan p;
                        p.subject_a = sa->subject_id;
                        p.subject_b = sb->subject_id;
                        p.image_a = reference_image(sa);
                        p.image_b = reference_image(sb);
                        p.mode = MorphMode::complete;
                        p.splice_recipient = 'a';
                        p.out_name = base + "_c.png";
                        plans.push_back(p);
                    }
                    if (cfg.morph_splicing) {
                        MorphPlan p;
                        p.subject_a = sa->subject_id;
                        p.subject_b = sb->subject_id;
                        p.image_a = reference_image(sa);
                        p.image_b = reference_image(sb);
                        p.mode = MorphMode::splicing;
                        // alternate the recipient deterministically
                        p.splice_recipient = (key.first + key.second) % 2 == 0 ? 'a' : 'b';
                        p.out_name = base + "_s.png";
                        plans.push_back(p);
                    }
                }
            }
        }
    }
    std::sort(plans.begin(), plans.end(),
              [](const MorphPlan& a, const MorphPlan& b) { return a.out_name < b.out_name; });
    return plans;
}

std::string pair_id_of(const PairSample& p) {
    return stem_of(p.trusted.path) + "__" + stem_of(p.questioned.path);
}

}  // namespace

RunManifest run_experiment(const RunConfig& config, const std::string& out_dir,
                           std::ostream* log) {
    {
        const auto findings = validate_config(config.to_json());
        for (const auto& f : findings)
            if (f.severity == Finding::Severity::error)
                throw ValidationError("invalid config at '" + f.path + "': " + f.message);
    }

    fs::create_directories(out_dir);
    RunManifest run;
    run.started_at = now_string();
    const std::string config_canon = config.to_json().dump();
    run.config_hash = sha256_hex(config_canon);

    StageRunner stages(out_dir, run, log);
    const auto key_for = [&](const std::string& stage, const json& subtree,
                             const std::vector<std::string>& input_hashes = {}) {
        Sha256 h;
        h.update(stage);
        h.update(subtree.dump());
        h.update(std::to_string(config.seed));
        for (const auto& ih : input_hashes) h.update(ih);
        return h.hex_digest();
    };

    const auto persist_partial = [&] {
        run.finished_at = now_string();
        save_run_manifest(run, (fs::path(out_dir) / "run_manifest.json").string());
    };

    try {
        // ---------------- dataset ----------------
        json dataset_cfg;
        if (config.dataset_synth) dataset_cfg["synth"] = synth_to_json(*config.dataset_synth);
        dataset_cfg["manifest"] = config.dataset_manifest;
        std::vector<std::string> dataset_inputs;
        if (!config.dataset_manifest.empty())
            dataset_inputs.push_back(sha256_file_hex(config.dataset_manifest));
        stages.run("dataset", key_for("dataset", dataset_cfg, dataset_inputs),
                   [&](const std::string& dir) {
                       if (config.dataset_synth) {
                           SynthDatasetSpec spec;
                           spec.n_subjects = config.dataset_synth->subjects;
                           spec.images_per_subject = config.dataset_synth->images_per_subject;
                           spec.male_fraction = config.dataset_synth->male_fraction;
                           spec.siblings = false;
                           spec.seed = derive_seed(config.seed, "dataset");
                           spec.name = "synth-morph-testbed";
                           generate_synth_dataset(spec, dir);
                       } else {
                           // normalize an external manifest into the run directory
                           const Manifest m = load_manifest(config.dataset_manifest);
                           save_manifest(m, (fs::path(dir) / "manifest.json").string());
                       }
                       return list_outputs(dir);
                   });
        const std::string dataset_manifest_path =
            (fs::path(out_dir) / "dataset" / "manifest.json").string();
        Manifest dataset = load_manifest(dataset_manifest_path);

        // ---------------- split ----------------
        json split_cfg;
        split_cfg["train_fraction"] = config.train_fraction;
        split_cfg["val_fraction_of_train"] = config.val_fraction_of_train;
        stages.run("split",
                   key_for("split", split_cfg, {sha256_file_hex(dataset_manifest_path)}),
                   [&](const std::string& dir) {
                       const SplitSpec split =
                           make_split(dataset, config.train_fraction,
                                      config.val_fraction_of_train, derive_seed(config.seed, "split"));
                       save_split(split, (fs::path(dir) / "split.json").string());
                       return list_outputs(dir);
                   });
        const SplitSpec split = load_split((fs::path(out_dir) / "split" / "split.json").string());

        // ---------------- morph ----------------
        const FaceLandmarker& landmarker = face_landmarker(config.landmarker_backend);
        json morph_cfg;
        morph_cfg["alpha"] = config.morph_alpha;
        morph_cfg["rounds"] = config.morph_rounds;
        morph_cfg["complete"] = config.morph_complete;
        morph_cfg["splicing"] = config.morph_splicing;
        morph_cfg["landmarker"] = config.landmarker_backend;
        stages.run(
            "morph",
            key_for("morph", morph_cfg,
                    {sha256_file_hex(dataset_manifest_path),
                     sha256_file_hex((fs::path(out_dir) / "split" / "split.json").string())}),
            [&](const std::string& dir) {
                fs::create_directories(fs::path(dir) / "images");
                Manifest augmented = dataset;
                std::map<std::string, LandmarkSet> lm_cache;
                auto landmarks_of = [&](const std::string& path) -> const LandmarkSet& {
                    auto it = lm_cache.find(path);
                    if (it == lm_cache.end()) {
                        const cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
                        if (img.empty()) throw ValidationError("cannot read image: " + path);
                        it = lm_cache.emplace(path, landmarker.locate(img)).first;
                    }
                    return it->second;
                };

                for (const MorphPlan& plan : plan_morphs(dataset, split, config)) {
                    const cv::Mat img_a = cv::imread(plan.image_a, cv::IMREAD_COLOR);
                    const cv::Mat img_b = cv::imread(plan.image_b, cv::IMREAD_COLOR);
                    if (img_a.empty() || img_b.empty())
                        throw ValidationError("cannot read morph sources for " + plan.out_name);
                    const LandmarkSet& lm_a = landmarks_of(plan.image_a);
                    const LandmarkSet& lm_b = landmarks_of(plan.image_b);

                    cv::Mat morph =
                        warp_blend(img_a, lm_a, img_b, lm_b, config.morph_alpha);
                    if (plan.mode == MorphMode::splicing) {
                        const bool into_a = plan.splice_recipient == 'a';
                        morph = splice_morph(morph, into_a ? img_a : img_b,
                                             into_a ? lm_a : lm_b);
                    }
                    const std::string out_path =
                        (fs::path(dir) / "images" / plan.out_name).string();
                    if (!cv::imwrite(out_path, morph))
                        throw std::runtime_error("cannot write morph: " + out_path);
                    ImageRef ref;
                    ref.path = out_path;
                    ref.kind = ImageKind::morph;
                    ref.contributors = {plan.subject_a, plan.subject_b};
                    augmented.morphs.push_back(std::move(ref));
                }
                save_manifest(augmented, (fs::path(dir) / "manifest.json").string());
                return list_outputs(dir);
            });
        const std::string morphed_manifest_path =
            (fs::path(out_dir) / "morph" / "manifest.json").string();
        Manifest morphed = load_manifest(morphed_manifest_path);

        // ---------------- pretrain dataset ----------------
        bool have_pretrain = config.pretrain_synth || !config.pretrain_manifest.empty();
        if (have_pretrain) {
            json pre_cfg;
            if (config.pretrain_synth) pre_cfg["synth"] = synth_to_json(*config.pretrain_synth);
            pre_cfg["manifest"] = config.pretrain_manifest;
            std::vector<std::string> inputs;
            if (!config.pretrain_manifest.empty())
                inputs.push_back(sha256_file_hex(config.pretrain_manifest));
            stages.run("pretrain_dataset", key_for("pretrain_dataset", pre_cfg, inputs),
                       [&](const std::string& dir) {
                           if (config.pretrain_synth) {
                               SynthDatasetSpec spec;
                               spec.n_subjects = config.pretrain_synth->subjects;
                               spec.images_per_subject =
                                   config.pretrain_synth->images_per_subject;
                               spec.male_fraction = config.pretrain_synth->male_fraction;
                               spec.siblings = true;
                               spec.seed = derive_seed(config.seed, "pretrain_dataset");
                               spec.name = "synth-hardpair-testbed";
                               generate_synth_dataset(spec, dir);
                           } else {
                               const Manifest m = load_manifest(config.pretrain_manifest);
                               save_manifest(m, (fs::path(dir) / "manifest.json").string());
                           }
                           return list_outputs(dir);
                       });
        }

        // ---------------- align ----------------
        const FaceDetector& detector = face_detector(config.detector_backend);
        json align_cfg;
        align_cfg["detector"] = config.detector_backend;
        std::vector<std::string> align_inputs = {sha256_file_hex(morphed_manifest_path)};
        if (have_pretrain)
            align_inputs.push_back(sha256_file_hex(
                (fs::path(out_dir) / "pretrain_dataset" / "manifest.json").string()));
        stages.run("align", key_for("align", align_cfg, align_inputs),
                   [&](const std::string& dir) {
                       auto align_set = [&](const Manifest& m, const std::string& sub) {
                           fs::create_directories(fs::path(dir) / sub);
                           std::vector<std::string> paths;
                           for (const auto& s : m.subjects)
                               for (const auto& img : s.images) paths.push_back(img.path);
                           for (const auto& img : m.morphs) paths.push_back(img.path);
                           std::sort(paths.begin(), paths.end());

                           std::vector<std::string> failures(paths.size());
#pragma omp parallel for schedule(dynamic)
                           for (long i = 0; i < long(paths.size()); ++i) {
                               const std::string& path = paths[size_t(i)];
                               try {
                                   const cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
                                   if (img.empty())
                                       throw ValidationError("cannot read image: " + path);
                                   ImageRef ref;
                                   ref.path = path;
                                   const AlignedFace aligned = prepare_face(img, detector, ref);
                                   const std::string stem = stem_of(path);
                                   cv::imwrite(
                                       (fs::path(dir) / sub / (stem + ".png")).string(),
                                       aligned.pixels);
                                   save_transform_json(
                                       aligned.transform,
                                       (fs::path(dir) / sub / (stem + ".transform.json"))
                                           .string());
                               } catch (const std::exception& e) {
                                   failures[size_t(i)] = e.what();
                               }
                           }
                           for (const auto& f : failures)
                               if (!f.empty()) throw std::runtime_error(f);
                       };
                       align_set(morphed, "dataset");
                       if (have_pretrain) {
                           const Manifest pre = load_manifest(
                               (fs::path(out_dir) / "pretrain_dataset" / "manifest.json")
                                   .string());
                           align_set(pre, "pretrain");
                       }
                       return list_outputs(dir);
                   });

        auto aligned_crop = [&](const std::string& sub) {
            return [sub, out_dir](const std::string& original_path) {
                const std::string p = (fs::path(out_dir) / "align" / sub /
                                       (stem_of(original_path) + ".png"))
                                          .string();
                cv::Mat img = cv::imread(p, cv::IMREAD_COLOR);
                if (img.empty()) throw ValidationError("missing aligned crop: " + p);
                return img;
            };
        };

        // ---------------- pretrain ----------------
        const std::string pretrain_ckpt =
            (fs::path(out_dir) / "pretrain" / "checkpoint.bin").string();
        {
            json cfg = train_to_json(config.pretrain_train);
            cfg["enabled"] = have_pretrain;
            std::vector<std::string> inputs;
            if (have_pretrain)
                inputs.push_back(sha256_file_hex(
                    (fs::path(out_dir) / "pretrain_dataset" / "manifest.json").string()));
            stages.run("pretrain", key_for("pretrain", cfg, inputs),
                       [&](const std::string& dir) {
                           SmallCnn net =
                               SmallCnn::random_init(derive_seed(config.seed, "init"));
                           if (have_pretrain && config.pretrain_train.epochs > 0) {
                               const Manifest pre = load_manifest(
                                   (fs::path(out_dir) / "pretrain_dataset" / "manifest.json")
                                       .string());
                               // group base+sibling together, 80/20 by group
                               std::vector<std::string> bases;
                               for (const auto& s : pre.subjects)
                                   if (s.sibling_of.empty()) bases.push_back(s.subject_id);
                               std::sort(bases.begin(), bases.end());
                               std::mt19937_64 rng(derive_seed(config.seed, "pretrain_split"));
                               std::shuffle(bases.begin(), bases.end(), rng);
                               SplitSpec pre_split;
                               pre_split.seed = config.seed;
                               const size_t n_train = bases.size() - std::max<size_t>(
                                                          1, bases.size() / 5);
                               for (size_t i = 0; i < bases.size(); ++i) {
                                   auto& dst = i < n_train ? pre_split.train_subjects
                                                           : pre_split.val_subjects;
                                   dst.insert(bases[i]);
                                   dst.insert(bases[i] + "s");
                               }
                               TrainConfig tc = config.pretrain_train;
                               tc.seed = derive_seed(config.seed, "pretrain");
                               const auto train_pairs =
                                   build_hard_pairs(pre, pre_split, "train");
                               const auto val_pairs = build_hard_pairs(pre, pre_split, "val");
                               const TrainState state = train_stage(
                                   train_pairs, val_pairs, tc, std::move(net),
                                   aligned_crop("pretrain"),
                                   [&](const EpochLog& e) {
                                       if (log)
                                           *log << "  pretrain epoch " << e.epoch
                                                << " lr=" << e.lr << " loss=" << e.train_loss
                                                << " val_deer=" << e.val_deer << "\n";
                                   });
                               state.weights.save((fs::path(dir) / "checkpoint.bin").string());
                               save_train_log_json(state,
                                                   (fs::path(dir) / "train_log.json").string());
                           } else {
                               net.save((fs::path(dir) / "checkpoint.bin").string());
                           }
                           return list_outputs(dir);
                       });
        }

        // ---------------- finetune ----------------
        {
            json cfg = train_to_json(config.finetune_train);
            stages.run("finetune",
                       key_for("finetune", cfg,
                               {sha256_file_hex(pretrain_ckpt),
                                sha256_file_hex(morphed_manifest_path),
                                sha256_file_hex(
                                    (fs::path(out_dir) / "split" / "split.json").string())}),
                       [&](const std::string& dir) {
                           TrainState pre_state;
                           pre_state.weights = SmallCnn::load(pretrain_ckpt);
                           pre_state.fingerprint = pre_state.weights.weights_fingerprint();
                           pre_state.provenance = {pre_state.fingerprint};

                           TrainConfig tc = config.finetune_train;
                           tc.seed = derive_seed(config.seed, "finetune");
                           const auto train_pairs = build_pairs(morphed, split, "train");
                           const auto val_pairs = build_pairs(morphed, split, "val");
                           const TrainState state = finetune_on_morphs(
                               pre_state, train_pairs, val_pairs, tc, aligned_crop("dataset"),
                               [&](const EpochLog& e) {
                                   if (log)
                                       *log << "  finetune epoch " << e.epoch << " lr=" << e.lr
                                            << " loss=" << e.train_loss
                                            << " val_deer=" << e.val_deer << "\n";
                               });
                           state.weights.save((fs::path(dir) / "checkpoint.bin").string());
                           save_train_log_json(state,
                                               (fs::path(dir) / "train_log.json").string());
                           return list_outputs(dir);
                       });
        }
        const std::string finetune_ckpt =
            (fs::path(out_dir) / "finetune" / "checkpoint.bin").string();

        // ---------------- embed ----------------
        {
            json cfg;
            cfg["normalize"] = true;
            stages.run(
                "embed",
                key_for("embed", cfg,
                        {sha256_file_hex(pretrain_ckpt), sha256_file_hex(finetune_ckpt),
                         sha256_file_hex(morphed_manifest_path)}),
                [&](const std::string& dir) {
                    std::vector<std::string> paths;
                    for (const auto& s : morphed.subjects)
                        for (const auto& img : s.images) paths.push_back(img.path);
                    for (const auto& img : morphed.morphs) paths.push_back(img.path);
                    std::sort(paths.begin(), paths.end());

                    auto crops = aligned_crop("dataset");
                    for (const auto& [tag, ckpt] :
                         std::vector<std::pair<std::string, std::string>>{
                             {"frozen", pretrain_ckpt}, {"finetuned", finetune_ckpt}}) {
                        const Embedder embedder(SmallCnn::load(ckpt), true);
                        EmbeddingStore store;
                        store.dim = 2 * embedder.embedding_dim();
                        store.normalized = true;
                        store.fingerprint = embedder.weights_fingerprint();

                        std::vector<std::vector<float>> rows(paths.size());
#pragma omp parallel for schedule(dynamic)
                        for (long i = 0; i < long(paths.size()); ++i) {
                            AlignedFace face;
                            face.pixels = crops(paths[size_t(i)]);
                            face.transform = cv::Matx23d(1, 0, 0, 0, 1, 0);
                            face.source.path = paths[size_t(i)];
                            rows[size_t(i)] = embedder.flip_concat_embed(face).values;
                        }
                        for (size_t i = 0; i < paths.size(); ++i)
                            store.by_path[paths[i]] = std::move(rows[i]);
                        save_embedding_store(store, (fs::path(dir) / (tag + ".bin")).string(),
                                             (fs::path(dir) / (tag + ".json")).string());
                    }
                    return list_outputs(dir);
                });
        }

        const auto load_store = [&](const std::string& tag) {
            return load_embedding_store((fs::path(out_dir) / "embed" / (tag + ".bin")).string(),
                                        (fs::path(out_dir) / "embed" / (tag + ".json")).string());
        };

        // ---------------- score (deep heads) ----------------
        {
            json cfg;
            cfg["heads"] = config.heads;
            stages.run(
                "score",
                key_for("score", cfg,
                        {sha256_file_hex(
                             (fs::path(out_dir) / "embed" / "finetuned.json").string()),
                         sha256_file_hex((fs::path(out_dir) / "embed" / "frozen.json").string())}),
                [&](const std::string& dir) {
                    const EmbeddingStore frozen = load_store("frozen");
                    const EmbeddingStore finetuned = load_store("finetuned");
                    const auto train_pairs = build_pairs(morphed, split, "train");
                    const auto val_pairs = build_pairs(morphed, split, "val");
                    const auto test_pairs = build_pairs(morphed, split, "test");

                    auto emit = [&](const std::string& method, auto scorer) {
                        ScoreSet set;
                        set.method_tag = method;
                        set.split_tag = "test";
                        for (const auto& p : test_pairs)
                            set.entries.push_back({pair_id_of(p), scorer(p), p.label});
                        save_scores_csv(set, (fs::path(dir) / (method + ".csv")).string());
                    };

                    // frozen-backbone euclidean baseline
                    emit("frozen_euclidean", [&](const PairSample& p) {
                        return pair_distance(frozen.vector_for(p.trusted.path),
                                             frozen.vector_for(p.questioned.path));
                    });

                    for (const std::string& head : config.heads) {
                        if (head == "euclidean") {
                            emit("siamese_euclidean", [&](const PairSample& p) {
                                return pair_distance(finetuned.vector_for(p.trusted.path),
                                                     finetuned.vector_for(p.questioned.path));
                            });
                            continue;
                        }
                        const SvmInputMode mode = head == "svm_difference"
                                                      ? SvmInputMode::difference
                                                      : SvmInputMode::concatenation;
                        std::vector<std::pair<std::vector<float>, std::vector<float>>> tr, va;
                        std::vector<int> trl, val;
                        for (const auto& p : train_pairs) {
                            tr.emplace_back(finetuned.at(p.trusted.path),
                                            finetuned.at(p.questioned.path));
                            trl.push_back(p.label);
                        }
                        for (const auto& p : val_pairs) {
                            va.emplace_back(finetuned.at(p.trusted.path),
                                            finetuned.at(p.questioned.path));
                            val.push_back(p.label);
                        }
                        const SvmHead svm =
                            SvmHead::fit(tr, trl, mode, SvmGrid{},
                                         derive_seed(config.seed, "head/" + head), va, val);
                        svm.save((fs::path(dir) / (head + ".yml")).string(),
                                 (fs::path(dir) / (head + ".meta.json")).string());
                        emit("siamese_" + head, [&](const PairSample& p) {
                            return svm.score(finetuned.at(p.trusted.path),
                                             finetuned.at(p.questioned.path));
                        });
                    }
                    return list_outputs(dir);
                });
        }

        // ---------------- baseline ----------------
        {
            json cfg;
            cfg["baselines"] = config.baselines;
            std::vector<std::string> inputs = {sha256_file_hex(morphed_manifest_path)};
            if (std::find(config.baselines.begin(), config.baselines.end(), "bsif") !=
                config.baselines.end())
                inputs.push_back(sha256_file_hex(config.bsif_bank_path));
            stages.run("baseline", key_for("baseline", cfg, inputs), [&](const std::string& dir) {
                const auto train_pairs = build_pairs(morphed, split, "train");
                const auto val_pairs = build_pairs(morphed, split, "val");
                const auto test_pairs = build_pairs(morphed, split, "test");

                std::vector<std::string> paths;
                for (const auto& s : morphed.subjects)
                    for (const auto& img : s.images) paths.push_back(img.path);
                for (const auto& img : morphed.morphs) paths.push_back(img.path);
                std::sort(paths.begin(), paths.end());
                auto crops = aligned_crop("dataset");

                std::optional<BsifFilterBank> bank;
                for (const std::string& kind : config.baselines) {
                    if (kind == "bsif" && !bank) bank = load_bsif_bank(config.bsif_bank_path);

                    std::vector<std::vector<float>> features(paths.size());
#pragma omp parallel for schedule(dynamic)
                    for (long i = 0; i < long(paths.size()); ++i) {
                        const cv::Mat crop = crops(paths[size_t(i)]);
                        if (kind == "lbp")
                            features[size_t(i)] = texture_feature(lbp_histogram(crop));
                        else if (kind == "bsif")
                            features[size_t(i)] = texture_feature(bsif_histogram(crop, *bank));
                        else if (kind == "sift")
                            features[size_t(i)] =
                                keypoint_vector(crop, KeypointKind::sift).aggregated;
                        else
                            features[size_t(i)] =
                                keypoint_vector(crop, KeypointKind::surf).aggregated;
                    }
                    std::map<std::string, const std::vector<float>*> by_path;
                    for (size_t i = 0; i < paths.size(); ++i) by_path[paths[i]] = &features[i];

                    std::vector<std::pair<std::vector<float>, std::vector<float>>> tr, va;
                    std::vector<int> trl, val;
                    for (const auto& p : train_pairs) {
                        tr.emplace_back(*by_path.at(p.trusted.path),
                                        *by_path.at(p.questioned.path));
                        trl.push_back(p.label);
                    }
                    for (const auto& p : val_pairs) {
                        va.emplace_back(*by_path.at(p.trusted.path),
                                        *by_path.at(p.questioned.path));
                        val.push_back(p.label);
                    }
                    const SvmHead svm =
                        SvmHead::fit(tr, trl, SvmInputMode::difference, SvmGrid{},
                                     derive_seed(config.seed, "baseline/" + kind), va, val);
                    ScoreSet set;
                    set.method_tag = "baseline_" + kind;
                    set.split_tag = "test";
                    for (const auto& p : test_pairs)
                        set.entries.push_back(
                            {pair_id_of(p),
                             differential_classify(*by_path.at(p.trusted.path),
                                                   *by_path.at(p.questioned.path), svm),
                             p.label});
                    save_scores_csv(set,
                                    (fs::path(dir) / ("baseline_" + kind + ".csv")).string());
                }
                return list_outputs(dir);
            });
        }

        // ---------------- explain ----------------
        {
            json cfg;
            cfg["layer"] = config.explain_layer;
            cfg["pairs"] = config.explain_pairs;
            cfg["exclude_lower_fraction"] = config.explain_exclude_lower;
            stages.run("explain", key_for("explain", cfg, {sha256_file_hex(finetune_ckpt)}),
                       [&](const std::string& dir) {
                           const SmallCnn net = SmallCnn::load(finetune_ckpt);
                           auto crops = aligned_crop("dataset");
                           auto test_pairs = build_pairs(morphed, split, "test");

                           std::vector<const PairSample*> genuine, imposter;
                           for (const auto& p : test_pairs)
                               (p.label == 0 ? genuine : imposter).push_back(&p);
                           std::mt19937_64 rng(derive_seed(config.seed, "explain"));
                           std::shuffle(genuine.begin(), genuine.end(), rng);
                           std::shuffle(imposter.begin(), imposter.end(), rng);
                           const size_t n = size_t(config.explain_pairs);
                           if (genuine.size() > n) genuine.resize(n);
                           if (imposter.size() > n) imposter.resize(n);

                           std::ofstream csv(fs::path(dir) / "cam_distances.csv");
                           csv << "pair_id,label,cam_distance\n";
                           double sum_g = 0.0, sum_i = 0.0;
                           int overlays = 0;
                           for (const auto* list : {&genuine, &imposter}) {
                               for (const PairSample* p : *list) {
                                   AlignedFace fa, fb;
                                   fa.pixels = crops(p->trusted.path);
                                   fb.pixels = crops(p->questioned.path);
                                   fa.transform = fb.transform = cv::Matx23d(1, 0, 0, 0, 1, 0);
                                   const auto [ma, mb] = grad_cam_pair(
                                       net, fa, fb, config.explain_layer, true);
                                   const double cd = cam_distance(
                                       ma, mb, config.explain_exclude_lower);
                                   csv << pair_id_of(*p) << "," << p->label << "," << cd
                                       << "\n";
                                   (p->label == 0 ? sum_g : sum_i) += cd;
                                   if (overlays < 4) {
                                       render_cam_overlay(
                                           fa.pixels, ma,
                                           (fs::path(dir) / ("cam_" + pair_id_of(*p) +
                                                             "_trusted.png"))
                                               .string());
                                       render_cam_overlay(
                                           fb.pixels, mb,
                                           (fs::path(dir) / ("cam_" + pair_id_of(*p) +
                                                             "_questioned.png"))
                                               .string());
                                       ++overlays;
                                   }
                               }
                           }
                           csv.close();
                           json summary;
                           summary["layer"] = config.explain_layer;
                           summary["exclude_lower_fraction"] = config.explain_exclude_lower;
                           summary["n_genuine"] = genuine.size();
                           summary["n_imposter"] = imposter.size();
                           summary["mean_cam_distance_genuine"] =
                               genuine.empty() ? 0.0 : sum_g / double(genuine.size());
                           summary["mean_cam_distance_imposter"] =
                               imposter.empty() ? 0.0 : sum_i / double(imposter.size());
                           std::ofstream js(fs::path(dir) / "cam_summary.json");
                           js << summary.dump(2) << "\n";
                           return list_outputs(dir);
                       });
        }

        // ---------------- evaluate ----------------
        {
            json cfg;
            cfg["det_points"] = 200;
            std::vector<std::string> score_files;
            for (const auto& entry :
                 fs::directory_iterator(fs::path(out_dir) / "score"))
                if (entry.path().extension() == ".csv")
                    score_files.push_back(entry.path().string());
            for (const auto& entry :
                 fs::directory_iterator(fs::path(out_dir) / "baseline"))
                if (entry.path().extension() == ".csv")
                    score_files.push_back(entry.path().string());
            std::sort(score_files.begin(), score_files.end());
            std::vector<std::string> hashes;
            for (const auto& f : score_files) hashes.push_back(sha256_file_hex(f));

            stages.run("evaluate", key_for("evaluate", cfg, hashes),
                       [&](const std::string& dir) {
                           json report;
                           report["methods"] = json::object();
                           ScoreSet combined;
                           for (const auto& file : score_files) {
                               const ScoreSet scores = load_scores_csv(file);
                               const EvalReport rep = evaluate_scores(scores);
                               json row;
                               row["d_eer"] = rep.d_eer;
                               row["threshold_at_eer"] = rep.threshold_at_eer;
                               row["constraint_warning"] = rep.constraint_warning;
                               for (const auto& [k, v] : rep.apcer_at_bpcer)
                                   row["apcer_at_bpcer"][std::to_string(int(k * 100)) + "%"] = v;
                               for (const auto& [k, v] : rep.bpcer_at_apcer)
                                   row["bpcer_at_apcer"][std::to_string(int(k * 100)) + "%"] = v;
                               report["methods"][scores.method_tag] = row;
                               save_det_csv(rep.det_samples,
                                            (fs::path(dir) / (scores.method_tag + ".det.csv"))
                                                .string());
                               render_det_plot(rep.det_samples,
                                               (fs::path(dir) / (scores.method_tag + ".det.png"))
                                                   .string(),
                                               scores.method_tag);
                               // one combined scores.csv for reproducibility checks
                               for (const auto& e : scores.entries)
                                   combined.entries.push_back(
                                       {scores.method_tag + "/" + e.pair_id, e.score, e.label});
                           }
                           combined.method_tag = "all";
                           combined.split_tag = "test";
                           save_scores_csv(combined, (fs::path(dir) / "scores.csv").string());
                           std::ofstream out(fs::path(dir) / "report.json");
                           out << report.dump(2) << "\n";
                           return list_outputs(dir);
                       });
        }

        // fingerprints + artifact index over the whole output directory
        run.fingerprints["pretrain_checkpoint"] = sha256_file_hex(pretrain_ckpt);
        run.fingerprints["finetune_checkpoint"] = sha256_file_hex(finetune_ckpt);
        if (fs::exists(config.bsif_bank_path))
            run.fingerprints["bsif_bank"] = sha256_file_hex(config.bsif_bank_path);
        for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string rel = fs::relative(entry.path(), out_dir).string();
            if (rel == "run_manifest.json") continue;
            run.artifacts[rel] = sha256_file_hex(entry.path().string());
        }
        run.finished_at = now_string();
        save_run_manifest(run, (fs::path(out_dir) / "run_manifest.json").string());
        return run;
    } catch (...) {
        persist_partial();
        throw;
    }
}

}  // namespace morphdet
