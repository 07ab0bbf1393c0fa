#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "morphdet/dataset.hpp"

using namespace morphdet;

namespace {

ImageRef bona(const std::string& path, const std::string& subject) {
    ImageRef r;
    r.path = path;
    r.kind = ImageKind::bona_fide_probe;
    r.contributors = {subject};
    return r;
}

ImageRef morph_ref(const std::string& path, const std::vector<std::string>& contributors) {
    ImageRef r;
    r.path = path;
    r.kind = ImageKind::morph;
    r.contributors = contributors;
    return r;
}

Manifest two_subject_manifest() {
    Manifest m;
    m.name = "tiny";
    SubjectRecord s, t;
    s.subject_id = "S";
    s.gender = Gender::male;
    s.images = {bona("g1.png", "S"), bona("g2.png", "S")};
    t.subject_id = "T";
    t.gender = Gender::male;
    t.images = {bona("t1.png", "T")};
    m.subjects = {s, t};
    m.morphs = {morph_ref("m.png", {"S", "T"})};
    return m;
}

SplitSpec all_in_train(const Manifest& m) {
    SplitSpec split;
    for (const auto& s : m.subjects) split.train_subjects.insert(s.subject_id);
    return split;
}

}  // namespace

TEST_CASE("build_pairs enumerates the only legal pairs") {
    const Manifest m = two_subject_manifest();
    const auto pairs = build_pairs(m, all_in_train(m), "train");

    // genuine: (g1,g2); imposter: (g1,m), (g2,m), (t1,m)
    int genuine = 0, imposter = 0;
    for (const auto& p : pairs) {
        if (p.label == 0) {
            ++genuine;
            CHECK(p.trusted.path == "g1.png");
            CHECK(p.questioned.path == "g2.png");
        } else {
            ++imposter;
            CHECK(p.questioned.path == "m.png");
            CHECK(p.trusted.is_bona_fide());
        }
    }
    CHECK(genuine == 1);
    CHECK(imposter == 3);
}

TEST_CASE("subject with one image and no morphs yields nothing") {
    Manifest m;
    SubjectRecord s;
    s.subject_id = "solo";
    s.gender = Gender::female;
    s.images = {bona("only.png", "solo")};
    m.subjects = {s};
    SplitSpec split;
    split.train_subjects = {"solo"};
    std::vector<std::string> warnings;
    const auto pairs =
        build_pairs(m, split, "train", [&](const std::string& w) { warnings.push_back(w); });
    CHECK(pairs.empty());
    CHECK(warnings.size() == 1);
}

TEST_CASE("straddling morph is excluded with a warning") {
    const Manifest m = two_subject_manifest();
    SplitSpec split;
    split.train_subjects = {"S"};
    split.test_subjects = {"T"};
    std::vector<std::string> warnings;
    const auto pairs =
        build_pairs(m, split, "train", [&](const std::string& w) { warnings.push_back(w); });
    for (const auto& p : pairs) CHECK(p.label == 0);
    CHECK(!warnings.empty());
}

TEST_CASE("pair count matches a combinatorial oracle on a 10-subject manifest") {
    Manifest m;
    m.name = "ten";
    std::mt19937_64 rng(13);
    for (int i = 0; i < 10; ++i) {
        SubjectRecord s;
        s.subject_id = "s" + std::to_string(i);
        s.gender = i % 2 ? Gender::male : Gender::female;
        const int n_imgs = 1 + int(rng() % 4);
        for (int k = 0; k < n_imgs; ++k)
            s.images.push_back(bona(s.subject_id + "_" + std::to_string(k) + ".png", s.subject_id));
        m.subjects.push_back(s);
    }
    for (int j = 0; j < 7; ++j) {
        const std::string a = "s" + std::to_string(rng() % 10);
        std::string b = a;
        while (b == a) b = "s" + std::to_string(rng() % 10);
        m.morphs.push_back(morph_ref("morph" + std::to_string(j) + ".png", {a, b}));
    }
    const SplitSpec split = all_in_train(m);
    const auto pairs = build_pairs(m, split, "train");

    // independent brute-force enumeration
    size_t expected = 0;
    for (const auto& s : m.subjects) expected += s.images.size() * (s.images.size() - 1) / 2;
    for (const auto& mo : m.morphs) {
        std::set<std::string> contributors(mo.contributors.begin(), mo.contributors.end());
        for (const auto& c : contributors) {
            const SubjectRecord* s = m.find_subject(c);
            expected += s->images.size();
        }
    }
    CHECK(pairs.size() == expected);

    // every pair satisfies its label invariant
    for (const auto& p : pairs) {
        if (p.label == 0) {
            CHECK(p.trusted.is_bona_fide());
            CHECK(p.questioned.is_bona_fide());
            CHECK(p.trusted.contributors == p.questioned.contributors);
            CHECK(p.trusted.path != p.questioned.path);
        } else {
            CHECK(p.questioned.kind == ImageKind::morph);
            const auto& cs = p.questioned.contributors;
            CHECK(std::find(cs.begin(), cs.end(), p.trusted.contributors[0]) != cs.end());
        }
    }
}

TEST_CASE("make_split honors stratified fractions") {
    Manifest m;
    for (int i = 0; i < 100; ++i) {
        SubjectRecord s;
        s.subject_id = (i < 50 ? "m" : "f") + std::to_string(i);
        s.gender = i < 50 ? Gender::male : Gender::female;
        s.images = {bona(s.subject_id + ".png", s.subject_id)};
        m.subjects.push_back(s);
    }
    const SplitSpec split = make_split(m, 0.5, 0.0, 42);
    int train_m = 0, train_f = 0, test_m = 0, test_f = 0;
    for (const auto& s : m.subjects) {
        const bool male = s.gender == Gender::male;
        if (split.train_subjects.count(s.subject_id)) (male ? train_m : train_f)++;
        if (split.test_subjects.count(s.subject_id)) (male ? test_m : test_f)++;
    }
    CHECK(train_m == 25);
    CHECK(train_f == 25);
    CHECK(test_m == 25);
    CHECK(test_f == 25);
    CHECK(split.disjoint());
}

TEST_CASE("validation carved from the training subjects only") {
    Manifest m;
    for (int i = 0; i < 80; ++i) {
        SubjectRecord s;
        s.subject_id = "s" + std::to_string(i);
        s.gender = i % 2 ? Gender::male : Gender::female;
        s.images = {bona(s.subject_id + ".png", s.subject_id)};
        m.subjects.push_back(s);
    }
    const SplitSpec split = make_split(m, 0.5, 0.2, 1);
    CHECK(split.train_subjects.size() + split.val_subjects.size() == 40);
    CHECK(split.val_subjects.size() == 8);
    CHECK(split.test_subjects.size() == 40);
    CHECK(split.disjoint());
}

TEST_CASE("same seed gives an identical split, different seed differs") {
    Manifest m;
    for (int i = 0; i < 30; ++i) {
        SubjectRecord s;
        s.subject_id = "s" + std::to_string(i);
        s.gender = i % 2 ? Gender::male : Gender::female;
        s.images = {bona(s.subject_id + ".png", s.subject_id)};
        m.subjects.push_back(s);
    }
    const SplitSpec a = make_split(m, 0.5, 0.2, 99);
    const SplitSpec b = make_split(m, 0.5, 0.2, 99);
    const SplitSpec c = make_split(m, 0.5, 0.2, 100);
    CHECK(a.train_subjects == b.train_subjects);
    CHECK(a.val_subjects == b.val_subjects);
    CHECK(a.test_subjects == b.test_subjects);
    CHECK(a.train_subjects != c.train_subjects);
}

TEST_CASE("split errors when a present gender has fewer than 2 subjects") {
    Manifest m;
    SubjectRecord a, b, c;
    a.subject_id = "a";
    a.gender = Gender::male;
    a.images = {bona("a.png", "a")};
    b.subject_id = "b";
    b.gender = Gender::male;
    b.images = {bona("b.png", "b")};
    c.subject_id = "c";
    c.gender = Gender::female;
    c.images = {bona("c.png", "c")};
    m.subjects = {a, b, c};
    CHECK_THROWS_WITH_AS(make_split(m, 0.5, 0.0, 1),
                         doctest::Contains("female"), ValidationError);
}

TEST_CASE("hard pairs join siblings as imposters") {
    Manifest m;
    SubjectRecord base, sib;
    base.subject_id = "x";
    base.gender = Gender::male;
    base.images = {bona("x0.png", "x"), bona("x1.png", "x")};
    sib.subject_id = "xs";
    sib.gender = Gender::male;
    sib.sibling_of = "x";
    sib.images = {bona("xs0.png", "xs"), bona("xs1.png", "xs")};
    m.subjects = {base, sib};
    SplitSpec split;
    split.train_subjects = {"x", "xs"};
    const auto pairs = build_hard_pairs(m, split, "train");
    int genuine = 0, imposter = 0;
    for (const auto& p : pairs) (p.label == 0 ? genuine : imposter)++;
    CHECK(genuine == 2);   // one per subject
    CHECK(imposter == 4);  // 2x2 cross product
}
