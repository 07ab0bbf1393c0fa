#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphdet {

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoFaceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Gender { male, female, unknown };

std::string to_string(Gender g);
Gender gender_from_string(const std::string& s);

enum class ImageKind { bona_fide_reference, bona_fide_probe, morph };

std::string to_string(ImageKind k);
ImageKind image_kind_from_string(const std::string& s);

struct ImageRef {
    std::string path;
    ImageKind kind = ImageKind::bona_fide_reference;
    std::vector<std::string> contributors;  // 1 subject for bona fide, >=2 for a morph

    bool is_bona_fide() const { return kind != ImageKind::morph; }
    bool operator==(const ImageRef& o) const { return path == o.path; }
};

struct SubjectRecord {
    std::string subject_id;
    Gender gender = Gender::unknown;
    std::vector<ImageRef> images;
    // set when this subject is the deliberately look-alike sibling of
    // another subject (hard-pair pretraining data)
    std::string sibling_of;
};

// A dataset manifest: subjects with their bona fide images, plus morphs,
// which belong to several subjects and are therefore listed separately.
struct Manifest {
    std::string name;
    std::vector<SubjectRecord> subjects;
    std::vector<ImageRef> morphs;

    const SubjectRecord* find_subject(const std::string& id) const;
    void validate() const;  // throws ValidationError on a broken invariant
};

// Pair of a trusted bona fide capture and a questioned image.
// y_g = 0 for a genuine pair, 1 for an imposter (morph) pair.
struct PairSample {
    ImageRef trusted;
    ImageRef questioned;
    int label = 0;
};

struct SplitSpec {
    std::set<std::string> train_subjects;
    std::set<std::string> val_subjects;
    std::set<std::string> test_subjects;
    uint64_t seed = 0;

    bool disjoint() const;
    const std::set<std::string>& subjects_of(const std::string& which) const;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

SplitSpec load_split(const std::string& path);
void save_split(const SplitSpec& s, const std::string& path);

}  // namespace morphdet
