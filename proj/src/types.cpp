#include "morphdet/types.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace morphdet {

using nlohmann::json;

std::string to_string(Gender g) {
    switch (g) {
        case Gender::male: return "male";
        case Gender::female: return "female";
        default: return "unknown";
    }
}

Gender gender_from_string(const std::string& s) {
    if (s == "male") return Gender::male;
    if (s == "female") return Gender::female;
    if (s == "unknown") return Gender::unknown;
    throw ValidationError("unknown gender: " + s);
}

std::string to_string(ImageKind k) {
    switch (k) {
        case ImageKind::bona_fide_reference: return "bona_fide_reference";
        case ImageKind::bona_fide_probe: return "bona_fide_probe";
        default: return "morph";
    }
}

ImageKind image_kind_from_string(const std::string& s) {
    if (s == "bona_fide_reference") return ImageKind::bona_fide_reference;
    if (s == "bona_fide_probe") return ImageKind::bona_fide_probe;
    if (s == "morph") return ImageKind::morph;
    throw ValidationError("unknown image kind: " + s);
}

const SubjectRecord* Manifest::find_subject(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.subject_id == id) return &s;
    return nullptr;
}

void Manifest::validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& s : subjects) {
        if (s.subject_id.empty()) throw ValidationError("empty subject_id in manifest '" + name + "'");
        if (!ids.insert(s.subject_id).second)
            throw ValidationError("duplicate subject_id '" + s.subject_id + "' in manifest '" + name + "'");
        for (const auto& img : s.images) {
            if (img.kind == ImageKind::morph)
                throw ValidationError("morph image '" + img.path + "' listed under subject '" +
                                      s.subject_id + "'; morphs belong in the top-level morph list");
            if (img.contributors.size() != 1 || img.contributors[0] != s.subject_id)
                throw ValidationError("bona fide image '" + img.path +
                                      "' must list exactly its subject as contributor");
        }
    }
    for (const auto& m : morphs) {
        if (m.kind != ImageKind::morph)
            throw ValidationError("non-morph image '" + m.path + "' in morph list");
        std::unordered_set<std::string> distinct(m.contributors.begin(), m.contributors.end());
        if (distinct.size() < 2)
            throw ValidationError("morph '" + m.path + "' needs >=2 distinct contributors");
        for (const auto& c : m.contributors)
            if (!ids.count(c))
                throw ValidationError("morph '" + m.path + "' references unknown subject '" + c + "'");
    }
}

namespace {

json image_to_json(const ImageRef& r) {
    return json{{"path", r.path}, {"kind", to_string(r.kind)}, {"contributors", r.contributors}};
}

ImageRef image_from_json(const json& j) {
    ImageRef r;
    r.path = j.at("path").get<std::string>();
    r.kind = image_kind_from_string(j.at("kind").get<std::string>());
    r.contributors = j.at("contributors").get<std::vector<std::string>>();
    return r;
}

}  // namespace

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("manifest parse error in " + path + ": " + e.what());
    }
    Manifest m;
    m.name = j.value("name", "");
    for (const auto& js : j.at("subjects")) {
        SubjectRecord s;
        s.subject_id = js.at("subject_id").get<std::string>();
        s.gender = gender_from_string(js.value("gender", "unknown"));
        s.sibling_of = js.value("sibling_of", "");
        for (const auto& ji : js.at("images")) s.images.push_back(image_from_json(ji));
        m.subjects.push_back(std::move(s));
    }
    if (j.contains("morphs"))
        for (const auto& jm : j.at("morphs")) m.morphs.push_back(image_from_json(jm));
    m.validate();
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    json j;
    j["name"] = m.name;
    j["subjects"] = json::array();
    for (const auto& s : m.subjects) {
        json js;
        js["subject_id"] = s.subject_id;
        js["gender"] = to_string(s.gender);
        if (!s.sibling_of.empty()) js["sibling_of"] = s.sibling_of;
        js["images"] = json::array();
        for (const auto& img : s.images) js["images"].push_back(image_to_json(img));
        j["subjects"].push_back(std::move(js));
    }
    j["morphs"] = json::array();
    for (const auto& img : m.morphs) j["morphs"].push_back(image_to_json(img));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

bool SplitSpec::disjoint() const {
    for (const auto& id : train_subjects)
        if (val_subjects.count(id) || test_subjects.count(id)) return false;
    for (const auto& id : val_subjects)
        if (test_subjects.count(id)) return false;
    return true;
}

const std::set<std::string>& SplitSpec::subjects_of(const std::string& which) const {
    if (which == "train") return train_subjects;
    if (which == "val") return val_subjects;
    if (which == "test") return test_subjects;
    throw ValidationError("unknown split name: " + which + " (want train|val|test)");
}

SplitSpec load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open split: " + path);
    json j;
    in >> j;
    SplitSpec s;
    s.seed = j.at("seed").get<uint64_t>();
    for (const auto& id : j.at("train")) s.train_subjects.insert(id.get<std::string>());
    for (const auto& id : j.at("val")) s.val_subjects.insert(id.get<std::string>());
    for (const auto& id : j.at("test")) s.test_subjects.insert(id.get<std::string>());
    if (!s.disjoint()) throw ValidationError("split file has overlapping subject sets: " + path);
    return s;
}

void save_split(const SplitSpec& s, const std::string& path) {
    json j;
    j["seed"] = s.seed;
    j["train"] = std::vector<std::string>(s.train_subjects.begin(), s.train_subjects.end());
    j["val"] = std::vector<std::string>(s.val_subjects.begin(), s.val_subjects.end());
    j["test"] = std::vector<std::string>(s.test_subjects.begin(), s.test_subjects.end());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write split: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace morphdet
