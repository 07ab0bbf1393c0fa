#include "morphdet/dataset.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <random>

#include "morphdet/hashing.hpp"

namespace morphdet {

namespace {

void split_stratum(std::vector<std::string> ids, double train_fraction,
                   double val_fraction_of_train, std::mt19937_64& rng, SplitSpec& out) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);

    const size_t n_train = size_t(std::llround(train_fraction * double(ids.size())));
    std::vector<std::string> train(ids.begin(), ids.begin() + n_train);
    out.test_subjects.insert(ids.begin() + n_train, ids.end());

    const size_t n_val = size_t(std::llround(val_fraction_of_train * double(train.size())));
    // validation subjects come from the tail of the shuffled training block
    for (size_t i = 0; i < train.size(); ++i) {
        if (i + n_val >= train.size())
            out.val_subjects.insert(train[i]);
        else
            out.train_subjects.insert(train[i]);
    }
}

}  // namespace

SplitSpec make_split(const Manifest& manifest, double train_fraction,
                     double val_fraction_of_train, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("train_fraction must lie in (0,1)");
    if (!(val_fraction_of_train >= 0.0 && val_fraction_of_train < 1.0))
        throw ValidationError("val_fraction_of_train must lie in [0,1)");

    std::map<Gender, std::vector<std::string>> strata;
    for (const auto& s : manifest.subjects) strata[s.gender].push_back(s.subject_id);

    for (const auto& [gender, ids] : strata)
        if (ids.size() < 2)
            throw ValidationError("cannot split: fewer than 2 subjects of gender '" +
                                  to_string(gender) + "'");

    SplitSpec spec;
    spec.seed = seed;
    for (auto& [gender, ids] : strata) {
        std::mt19937_64 rng(derive_seed(seed, "split/" + to_string(gender)));
        split_stratum(std::move(ids), train_fraction, val_fraction_of_train, rng, spec);
    }
    return spec;
}

std::vector<PairSample> build_pairs(const Manifest& manifest, const SplitSpec& split,
                                    const std::string& which, WarnSink warn) {
    manifest.validate();
    const auto& members = split.subjects_of(which);
    const auto emit = [&](const std::string& msg) {
        if (warn) warn(msg);
    };

    std::vector<PairSample> pairs;

    // Genuine pairs: unordered combinations of two distinct bona fide images
    // of one subject, in canonical path order.
    for (const auto& subject : manifest.subjects) {
        if (!members.count(subject.subject_id)) continue;
        std::vector<ImageRef> bona = subject.images;
        std::sort(bona.begin(), bona.end(),
                  [](const ImageRef& a, const ImageRef& b) { return a.path < b.path; });
        if (bona.size() < 2)
            emit("subject '" + subject.subject_id + "' has fewer than 2 bona fide images; no genuine pairs");
        for (size_t i = 0; i < bona.size(); ++i)
            for (size_t j = i + 1; j < bona.size(); ++j)
                pairs.push_back({bona[i], bona[j], 0});
    }

    // Imposter pairs: bona fide image of a contributing subject vs the morph.
    std::vector<ImageRef> morphs = manifest.morphs;
    std::sort(morphs.begin(), morphs.end(),
              [](const ImageRef& a, const ImageRef& b) { return a.path < b.path; });
    for (const auto& morph : morphs) {
        bool all_in = true;
        bool any_in = false;
        for (const auto& c : morph.contributors) {
            if (members.count(c))
                any_in = true;
            else
                all_in = false;
        }
        if (!any_in) continue;
        if (!all_in) {
            emit("morph '" + morph.path + "' has contributors outside split '" + which +
                 "'; excluded to keep splits disjoint");
            continue;
        }
        std::vector<std::string> contributors = morph.contributors;
        std::sort(contributors.begin(), contributors.end());
        contributors.erase(std::unique(contributors.begin(), contributors.end()),
                           contributors.end());
        for (const auto& cid : contributors) {
            const SubjectRecord* subject = manifest.find_subject(cid);
            if (!subject) continue;
            std::vector<ImageRef> bona = subject->images;
            std::sort(bona.begin(), bona.end(),
                      [](const ImageRef& a, const ImageRef& b) { return a.path < b.path; });
            for (const auto& img : bona) pairs.push_back({img, morph, 1});
        }
    }
    return pairs;
}

std::vector<PairSample> build_hard_pairs(const Manifest& manifest, const SplitSpec& split,
                                         const std::string& which, WarnSink warn) {
    manifest.validate();
    const auto& members = split.subjects_of(which);
    std::vector<PairSample> pairs;

    for (const auto& subject : manifest.subjects) {
        if (!members.count(subject.subject_id)) continue;
        std::vector<ImageRef> bona = subject.images;
        std::sort(bona.begin(), bona.end(),
                  [](const ImageRef& a, const ImageRef& b) { return a.path < b.path; });
        for (size_t i = 0; i < bona.size(); ++i)
            for (size_t j = i + 1; j < bona.size(); ++j)
                pairs.push_back({bona[i], bona[j], 0});

        if (subject.sibling_of.empty()) continue;
        if (!members.count(subject.sibling_of)) {
            if (warn)
                warn("sibling pair (" + subject.sibling_of + ", " + subject.subject_id +
                     ") straddles split '" + which + "'; dropped");
            continue;
        }
        const SubjectRecord* base = manifest.find_subject(subject.sibling_of);
        if (!base) continue;
        std::vector<ImageRef> base_imgs = base->images;
        std::sort(base_imgs.begin(), base_imgs.end(),
                  [](const ImageRef& a, const ImageRef& b) { return a.path < b.path; });
        for (const auto& bi : base_imgs)
            for (const auto& si : bona) pairs.push_back({bi, si, 1});
    }
    return pairs;
}

}  // namespace morphdet
