#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "morphdet/baselines.hpp"
#include "morphdet/dataset.hpp"
#include "morphdet/embedder.hpp"
#include "morphdet/face_prep.hpp"
#include "morphdet/gradcam.hpp"
#include "morphdet/hashing.hpp"
#include "morphdet/metrics.hpp"
#include "morphdet/morph.hpp"
#include "morphdet/pipeline.hpp"
#include "morphdet/svm_head.hpp"
#include "morphdet/synth_face.hpp"
#include "morphdet/trainer.hpp"

namespace fs = std::filesystem;
using namespace morphdet;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

// Model/checkpoint files given as bare names are searched here as well.
std::string model_cache_dir() {
    const char* env = std::getenv("MORPHDET_MODEL_CACHE");
    return env ? env : "";
}

std::string resolve_model_path(const std::string& path) {
    if (fs::exists(path)) return path;
    const std::string cache = model_cache_dir();
    if (!cache.empty() && fs::exists(fs::path(cache) / path))
        return (fs::path(cache) / path).string();
    return path;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

CropProvider aligned_crop_provider(const std::string& aligned_dir) {
    return [aligned_dir](const std::string& original_path) {
        const std::string p =
            (fs::path(aligned_dir) / (stem_of(original_path) + ".png")).string();
        cv::Mat img = cv::imread(p, cv::IMREAD_COLOR);
        if (img.empty()) throw ValidationError("missing aligned crop: " + p);
        return img;
    };
}

std::string pair_id_of(const PairSample& p) {
    return stem_of(p.trusted.path) + "__" + stem_of(p.questioned.path);
}

void collect_paths(const Manifest& m, std::vector<std::string>& paths) {
    for (const auto& s : m.subjects)
        for (const auto& img : s.images) paths.push_back(img.path);
    for (const auto& img : m.morphs) paths.push_back(img.path);
    std::sort(paths.begin(), paths.end());
}

int run_cli(int argc, char** argv) {
    CLI::App app{"differential morph detection toolkit"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate the synthetic portrait testbed");
    std::string synth_out = "synth_data";
    SynthDatasetSpec synth_spec;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--subjects", synth_spec.n_subjects, "number of subjects");
    synth->add_option("--images", synth_spec.images_per_subject, "images per subject");
    synth->add_option("--male-fraction", synth_spec.male_fraction, "fraction of male subjects");
    synth->add_flag("--siblings", synth_spec.siblings, "emit a look-alike sibling per subject");
    synth->add_option("--seed", synth_spec.seed, "generator seed");
    synth->callback([&] {
        generate_synth_dataset(synth_spec, synth_out);
        std::cout << "wrote " << synth_out << "/manifest.json\n";
    });

    // ---- align ----
    auto* align = app.add_subcommand("align", "detect and align faces to 160x160 crops");
    std::string align_manifest, align_out = "aligned", align_backend = "geometric";
    align->add_option("--manifest", align_manifest, "dataset manifest")->required();
    align->add_option("--out", align_out, "output directory");
    align->add_option("--detector", align_backend, "detector backend");
    align->callback([&] {
        const Manifest m = load_manifest(align_manifest);
        const FaceDetector& detector = face_detector(align_backend);
        fs::create_directories(align_out);
        std::vector<std::string> paths;
        collect_paths(m, paths);
        for (const auto& path : paths) {
            const cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
            if (img.empty()) throw ValidationError("cannot read image: " + path);
            ImageRef ref;
            ref.path = path;
            const AlignedFace face = prepare_face(img, detector, ref);
            const std::string stem = stem_of(path);
            cv::imwrite((fs::path(align_out) / (stem + ".png")).string(), face.pixels);
            save_transform_json(face.transform,
                                (fs::path(align_out) / (stem + ".transform.json")).string());
        }
        std::cout << "aligned " << paths.size() << " images into " << align_out << "\n";
    });

    // ---- morph ----
    auto* morph = app.add_subcommand("morph", "generate landmark morphs from a recipe list");
    std::string morph_recipes, morph_out = "morphs", morph_backend = "geometric";
    morph->add_option("--recipes", morph_recipes, "recipe JSON (list of entries)")->required();
    morph->add_option("--out", morph_out, "output directory");
    morph->add_option("--landmarker", morph_backend, "landmarker backend");
    morph->callback([&] {
        std::ifstream in(morph_recipes);
        if (!in) throw ValidationError("cannot open recipes: " + morph_recipes);
        json recipes;
        in >> recipes;
        const FaceLandmarker& landmarker = face_landmarker(morph_backend);
        fs::create_directories(morph_out);
        json manifest_entries = json::array();
        for (const auto& r : recipes) {
            const std::string image_a = r.at("image_a").get<std::string>();
            const std::string image_b = r.at("image_b").get<std::string>();
            MorphRecipe recipe;
            recipe.source_a = r.value("subject_a", stem_of(image_a));
            recipe.source_b = r.value("subject_b", stem_of(image_b));
            recipe.alpha = r.value("alpha", 0.5);
            recipe.mode = r.value("mode", std::string("complete")) == "splicing"
                              ? MorphMode::splicing
                              : MorphMode::complete;
            recipe.splice_recipient = r.value("splice_recipient", std::string("a"))[0];
            recipe.validate();

            const cv::Mat img_a = cv::imread(image_a, cv::IMREAD_COLOR);
            const cv::Mat img_b = cv::imread(image_b, cv::IMREAD_COLOR);
            if (img_a.empty() || img_b.empty())
                throw ValidationError("cannot read morph sources " + image_a + ", " + image_b);
            const LandmarkSet lm_a = landmarker.locate(img_a);
            const LandmarkSet lm_b = landmarker.locate(img_b);
            cv::Mat out = warp_blend(img_a, lm_a, img_b, lm_b, recipe.alpha);
            if (recipe.mode == MorphMode::splicing) {
                const bool into_a = recipe.splice_recipient == 'a';
                out = splice_morph(out, into_a ? img_a : img_b, into_a ? lm_a : lm_b);
            }
            const std::string name = r.value(
                "out", "morph_" + recipe.source_a + "_" + recipe.source_b +
                           (recipe.mode == MorphMode::splicing ? "_s.png" : "_c.png"));
            const std::string out_path = (fs::path(morph_out) / name).string();
            if (!cv::imwrite(out_path, out))
                throw std::runtime_error("cannot write morph: " + out_path);
            manifest_entries.push_back({{"path", out_path},
                                        {"kind", "morph"},
                                        {"contributors", {recipe.source_a, recipe.source_b}}});
        }
        std::ofstream entries((fs::path(morph_out) / "morphs.json").string());
        entries << manifest_entries.dump(2) << "\n";
        std::cout << "wrote " << manifest_entries.size() << " morphs into " << morph_out << "\n";
    });

    // ---- split ----
    auto* split_cmd = app.add_subcommand("split", "make a subject-disjoint stratified split");
    std::string split_manifest, split_out = "split.json";
    double split_train = 0.5, split_val = 0.2;
    uint64_t split_seed = 7;
    split_cmd->add_option("--manifest", split_manifest, "dataset manifest")->required();
    split_cmd->add_option("--train-fraction", split_train, "train fraction of subjects");
    split_cmd->add_option("--val-fraction", split_val, "validation fraction of the train set");
    split_cmd->add_option("--seed", split_seed, "split seed");
    split_cmd->add_option("--out", split_out, "output split json");
    split_cmd->callback([&] {
        const Manifest m = load_manifest(split_manifest);
        const SplitSpec s = make_split(m, split_train, split_val, split_seed);
        save_split(s, split_out);
        std::cout << "wrote " << split_out << " (" << s.train_subjects.size() << " train, "
                  << s.val_subjects.size() << " val, " << s.test_subjects.size() << " test)\n";
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "train or fine-tune the siamese backbone");
    std::string train_manifest, train_split, train_aligned, train_out = "checkpoint";
    std::string train_stage_name = "pretrain", train_from;
    TrainConfig train_cfg;
    int train_epochs = -1;
    train->add_option("--manifest", train_manifest, "dataset manifest")->required();
    train->add_option("--split", train_split, "split json")->required();
    train->add_option("--aligned", train_aligned, "directory of aligned crops")->required();
    train->add_option("--stage", train_stage_name, "pretrain|finetune");
    train->add_option("--from", train_from, "initial checkpoint (finetune)");
    train->add_option("--epochs", train_epochs, "number of epochs");
    train->add_option("--batch-pairs", train_cfg.batch_pairs, "pairs per batch");
    train->add_option("--margin", train_cfg.margin, "contrastive margin");
    train->add_option("--seed", train_cfg.seed, "training seed");
    train->add_option("--out", train_out, "output directory");
    train->callback([&] {
        const Manifest m = load_manifest(train_manifest);
        const SplitSpec s = load_split(train_split);
        TrainConfig cfg = train_stage_name == "finetune" ? TrainConfig::finetune_defaults()
                                                         : TrainConfig::pretrain_defaults();
        cfg.batch_pairs = train_cfg.batch_pairs;
        cfg.margin = train_cfg.margin;
        cfg.seed = train_cfg.seed;
        if (train_epochs >= 0) cfg.epochs = train_epochs;

        const bool hard_pairs = train_stage_name == "pretrain";
        const auto train_pairs = hard_pairs ? build_hard_pairs(m, s, "train")
                                            : build_pairs(m, s, "train");
        const auto val_pairs =
            hard_pairs ? build_hard_pairs(m, s, "val") : build_pairs(m, s, "val");

        SmallCnn initial = train_from.empty()
                               ? SmallCnn::random_init(derive_seed(cfg.seed, "init"))
                               : SmallCnn::load(resolve_model_path(train_from));
        fs::create_directories(train_out);
        const TrainState state = train_stage(
            train_pairs, val_pairs, cfg, std::move(initial),
            aligned_crop_provider(train_aligned), [](const EpochLog& e) {
                std::cout << "epoch " << e.epoch << " lr=" << e.lr << " loss=" << e.train_loss
                          << " val_deer=" << e.val_deer << "\n";
            });
        state.weights.save((fs::path(train_out) / "checkpoint.bin").string());
        save_train_log_json(state, (fs::path(train_out) / "train_log.json").string());
        std::cout << "checkpoint fingerprint " << state.fingerprint << "\n";
    });

    // ---- embed ----
    auto* embed = app.add_subcommand("embed", "compute flip-concat embeddings for a manifest");
    std::string embed_manifest, embed_aligned, embed_ckpt, embed_out = "embeddings";
    embed->add_option("--manifest", embed_manifest, "dataset manifest")->required();
    embed->add_option("--aligned", embed_aligned, "directory of aligned crops")->required();
    embed->add_option("--checkpoint", embed_ckpt, "backbone checkpoint")->required();
    embed->add_option("--out", embed_out, "output prefix (.bin/.json)");
    embed->callback([&] {
        const Manifest m = load_manifest(embed_manifest);
        const Embedder embedder(SmallCnn::load(resolve_model_path(embed_ckpt)), true);
        auto crops = aligned_crop_provider(embed_aligned);
        EmbeddingStore store;
        store.dim = 2 * embedder.embedding_dim();
        store.normalized = true;
        store.fingerprint = embedder.weights_fingerprint();
        std::vector<std::string> paths;
        collect_paths(m, paths);
        for (const auto& path : paths) {
            AlignedFace face;
            face.pixels = crops(path);
            face.transform = cv::Matx23d(1, 0, 0, 0, 1, 0);
            face.source.path = path;
            store.by_path[path] = embedder.flip_concat_embed(face).values;
        }
        save_embedding_store(store, embed_out + ".bin", embed_out + ".json");
        std::cout << "embedded " << paths.size() << " images -> " << embed_out << ".bin\n";
    });

    // ---- score ----
    auto* score = app.add_subcommand("score", "score pairs with a decision head");
    std::string score_manifest, score_split, score_embeddings, score_head = "euclidean";
    std::string score_out = "scores.csv", score_head_dir;
    uint64_t score_seed = 7;
    score->add_option("--manifest", score_manifest, "dataset manifest")->required();
    score->add_option("--split", score_split, "split json")->required();
    score->add_option("--embeddings", score_embeddings, "embedding store prefix")->required();
    score->add_option("--head", score_head, "euclidean|svm_difference|svm_concatenation");
    score->add_option("--out", score_out, "output scores csv");
    score->add_option("--head-dir", score_head_dir, "directory to persist a fitted svm head");
    score->add_option("--seed", score_seed, "seed for head fitting");
    score->callback([&] {
        const Manifest m = load_manifest(score_manifest);
        const SplitSpec s = load_split(score_split);
        const EmbeddingStore store =
            load_embedding_store(score_embeddings + ".bin", score_embeddings + ".json");
        const auto test_pairs = build_pairs(m, s, "test");

        ScoreSet set;
        set.split_tag = "test";
        if (score_head == "euclidean") {
            set.method_tag = "siamese_euclidean";
            for (const auto& p : test_pairs)
                set.entries.push_back({pair_id_of(p),
                                       pair_distance(store.vector_for(p.trusted.path),
                                                     store.vector_for(p.questioned.path)),
                                       p.label});
        } else {
            const SvmInputMode mode = score_head == "svm_difference"
                                          ? SvmInputMode::difference
                                          : SvmInputMode::concatenation;
            const auto train_pairs = build_pairs(m, s, "train");
            const auto val_pairs = build_pairs(m, s, "val");
            std::vector<std::pair<std::vector<float>, std::vector<float>>> tr, va;
            std::vector<int> trl, val;
            for (const auto& p : train_pairs) {
                tr.emplace_back(store.at(p.trusted.path), store.at(p.questioned.path));
                trl.push_back(p.label);
            }
            for (const auto& p : val_pairs) {
                va.emplace_back(store.at(p.trusted.path), store.at(p.questioned.path));
                val.push_back(p.label);
            }
            const SvmHead head = SvmHead::fit(tr, trl, mode, SvmGrid{},
                                              derive_seed(score_seed, "head/" + score_head), va,
                                              val);
            if (!score_head_dir.empty()) {
                fs::create_directories(score_head_dir);
                head.save((fs::path(score_head_dir) / (score_head + ".yml")).string(),
                          (fs::path(score_head_dir) / (score_head + ".meta.json")).string());
            }
            set.method_tag = "siamese_" + score_head;
            for (const auto& p : test_pairs)
                set.entries.push_back(
                    {pair_id_of(p),
                     head.score(store.at(p.trusted.path), store.at(p.questioned.path)),
                     p.label});
        }
        save_scores_csv(set, score_out);
        std::cout << "wrote " << set.entries.size() << " scores -> " << score_out << "\n";
    });

    // ---- baseline ----
    auto* baseline = app.add_subcommand("baseline", "classical differential baseline scores");
    std::string base_manifest, base_split, base_aligned, base_kind = "lbp";
    std::string base_out = "baseline_scores.csv", base_bank = "data/bsif_3x3_8bit.json";
    uint64_t base_seed = 7;
    baseline->add_option("--manifest", base_manifest, "dataset manifest")->required();
    baseline->add_option("--split", base_split, "split json")->required();
    baseline->add_option("--aligned", base_aligned, "directory of aligned crops")->required();
    baseline->add_option("--kind", base_kind, "lbp|bsif|sift|surf");
    baseline->add_option("--bsif-bank", base_bank, "bsif filter bank json");
    baseline->add_option("--out", base_out, "output scores csv");
    baseline->add_option("--seed", base_seed, "seed for svm fitting");
    baseline->callback([&] {
        const Manifest m = load_manifest(base_manifest);
        const SplitSpec s = load_split(base_split);
        auto crops = aligned_crop_provider(base_aligned);
        std::optional<BsifFilterBank> bank;
        if (base_kind == "bsif") bank = load_bsif_bank(base_bank);

        std::vector<std::string> paths;
        collect_paths(m, paths);
        std::map<std::string, std::vector<float>> features;
        for (const auto& path : paths) {
            const cv::Mat crop = crops(path);
            if (base_kind == "lbp")
                features[path] = texture_feature(lbp_histogram(crop));
            else if (base_kind == "bsif")
                features[path] = texture_feature(bsif_histogram(crop, *bank));
            else if (base_kind == "sift")
                features[path] = keypoint_vector(crop, KeypointKind::sift).aggregated;
            else if (base_kind == "surf")
                features[path] = keypoint_vector(crop, KeypointKind::surf).aggregated;
            else
                throw ValidationError("unknown baseline kind: " + base_kind);
        }
        const auto train_pairs = build_pairs(m, s, "train");
        const auto val_pairs = build_pairs(m, s, "val");
        const auto test_pairs = build_pairs(m, s, "test");
        std::vector<std::pair<std::vector<float>, std::vector<float>>> tr, va;
        std::vector<int> trl, val;
        for (const auto& p : train_pairs) {
            tr.emplace_back(features.at(p.trusted.path), features.at(p.questioned.path));
            trl.push_back(p.label);
        }
        for (const auto& p : val_pairs) {
            va.emplace_back(features.at(p.trusted.path), features.at(p.questioned.path));
            val.push_back(p.label);
        }
        const SvmHead head =
            SvmHead::fit(tr, trl, SvmInputMode::difference, SvmGrid{},
                         derive_seed(base_seed, "baseline/" + base_kind), va, val);
        ScoreSet set;
        set.method_tag = "baseline_" + base_kind;
        set.split_tag = "test";
        for (const auto& p : test_pairs)
            set.entries.push_back({pair_id_of(p),
                                   differential_classify(features.at(p.trusted.path),
                                                         features.at(p.questioned.path), head),
                                   p.label});
        save_scores_csv(set, base_out);
        std::cout << "wrote " << set.entries.size() << " scores -> " << base_out << "\n";
    });

    // ---- evaluate ----
    auto* evaluate = app.add_subcommand("evaluate", "metrics, DET curve and report artifacts");
    std::string eval_scores, eval_out = "eval";
    evaluate->add_option("--scores", eval_scores, "scores csv")->required();
    evaluate->add_option("--out", eval_out, "output directory");
    evaluate->callback([&] {
        const ScoreSet scores = load_scores_csv(eval_scores);
        const EvalReport rep = evaluate_scores(scores);
        fs::create_directories(eval_out);
        save_report_json(rep, (fs::path(eval_out) / "report.json").string());
        save_det_csv(rep.det_samples, (fs::path(eval_out) / "det.csv").string());
        render_det_plot(rep.det_samples, (fs::path(eval_out) / "det.png").string(),
                        scores.method_tag);
        std::cout << scores.method_tag << ": d_eer=" << rep.d_eer << " at t=" << rep.threshold_at_eer
                  << "\n";
    });

    // ---- explain ----
    auto* explain = app.add_subcommand("explain", "grad-cam maps and per-pair cam distances");
    std::string exp_manifest, exp_split, exp_aligned, exp_ckpt, exp_out = "explain";
    std::string exp_layer = "block3";
    int exp_pairs = 50;
    double exp_exclude = kCamLowerExclusion;
    uint64_t exp_seed = 7;
    explain->add_option("--manifest", exp_manifest, "dataset manifest")->required();
    explain->add_option("--split", exp_split, "split json")->required();
    explain->add_option("--aligned", exp_aligned, "directory of aligned crops")->required();
    explain->add_option("--checkpoint", exp_ckpt, "backbone checkpoint")->required();
    explain->add_option("--layer", exp_layer, "conv block tag");
    explain->add_option("--pairs", exp_pairs, "pairs per class");
    explain->add_option("--exclude-lower", exp_exclude, "lower-face exclusion fraction");
    explain->add_option("--seed", exp_seed, "sampling seed");
    explain->add_option("--out", exp_out, "output directory");
    explain->callback([&] {
        const Manifest m = load_manifest(exp_manifest);
        const SplitSpec s = load_split(exp_split);
        const SmallCnn net = SmallCnn::load(resolve_model_path(exp_ckpt));
        auto crops = aligned_crop_provider(exp_aligned);
        auto test_pairs = build_pairs(m, s, "test");
        std::vector<const PairSample*> genuine, imposter;
        for (const auto& p : test_pairs) (p.label == 0 ? genuine : imposter).push_back(&p);
        std::mt19937_64 rng(derive_seed(exp_seed, "explain"));
        std::shuffle(genuine.begin(), genuine.end(), rng);
        std::shuffle(imposter.begin(), imposter.end(), rng);
        if (int(genuine.size()) > exp_pairs) genuine.resize(size_t(exp_pairs));
        if (int(imposter.size()) > exp_pairs) imposter.resize(size_t(exp_pairs));

        fs::create_directories(exp_out);
        std::ofstream csv((fs::path(exp_out) / "cam_distances.csv").string());
        csv << "pair_id,label,cam_distance\n";
        int overlays = 0;
        for (const auto* list : {&genuine, &imposter}) {
            for (const PairSample* p : *list) {
                AlignedFace fa, fb;
                fa.pixels = crops(p->trusted.path);
                fb.pixels = crops(p->questioned.path);
                fa.transform = fb.transform = cv::Matx23d(1, 0, 0, 0, 1, 0);
                const auto [ma, mb] = grad_cam_pair(net, fa, fb, exp_layer, true);
                csv << pair_id_of(*p) << "," << p->label << ","
                    << cam_distance(ma, mb, exp_exclude) << "\n";
                if (overlays < 6) {
                    render_cam_overlay(fa.pixels, ma,
                                       (fs::path(exp_out) /
                                        ("cam_" + pair_id_of(*p) + "_trusted.png"))
                                           .string());
                    render_cam_overlay(fb.pixels, mb,
                                       (fs::path(exp_out) /
                                        ("cam_" + pair_id_of(*p) + "_questioned.png"))
                                           .string());
                    ++overlays;
                }
            }
        }
        std::cout << "wrote cam distances for " << genuine.size() + imposter.size()
                  << " pairs -> " << exp_out << "\n";
    });

    // ---- validate ----
    auto* validate = app.add_subcommand("validate", "validate a run config without side effects");
    std::string validate_config_path;
    validate->add_option("--config", validate_config_path, "run config json")->required();
    validate->callback([&] {
        const json raw = load_config_file(validate_config_path);
        const auto findings = validate_config(raw);
        bool has_error = false;
        for (const auto& f : findings) {
            const bool is_error = f.severity == Finding::Severity::error;
            has_error = has_error || is_error;
            std::cout << (is_error ? "error" : "warning") << " [" << f.path << "] " << f.message
                      << "\n";
        }
        if (findings.empty()) std::cout << "config ok\n";
        if (has_error) throw ValidationError("config validation failed");
    });

    // ---- run ----
    auto* run = app.add_subcommand("run", "execute the full pipeline with stage caching");
    std::string run_config_path, run_out = "run_out";
    run->add_option("--config", run_config_path, "run config json")->required();
    run->add_option("--out", run_out, "output directory");
    run->callback([&] {
        const json raw = load_config_file(run_config_path);
        const auto findings = validate_config(raw);
        bool has_error = false;
        for (const auto& f : findings) {
            const bool is_error = f.severity == Finding::Severity::error;
            has_error = has_error || is_error;
            std::cerr << (is_error ? "error" : "warning") << " [" << f.path << "] " << f.message
                      << "\n";
        }
        if (has_error) throw ValidationError("config validation failed");
        const RunConfig config = RunConfig::from_json(raw);
        run_experiment(config, run_out, &std::cout);
        std::cout << "run complete -> " << run_out << "/run_manifest.json\n";
    });

    CLI11_PARSE(app, argc, argv);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NoFaceError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
}
