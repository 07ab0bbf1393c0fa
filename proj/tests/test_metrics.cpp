#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "morphdet/metrics.hpp"

using namespace morphdet;

namespace {

ScoreSet hand_set() {
    // morphs: 0.9, 0.7, 0.4; bona fide: 0.3, 0.2, 0.8
    ScoreSet s;
    s.method_tag = "hand";
    s.split_tag = "test";
    s.entries = {{"m1", 0.9, 1}, {"m2", 0.7, 1}, {"m3", 0.4, 1},
                 {"b1", 0.3, 0}, {"b2", 0.2, 0}, {"b3", 0.8, 0}};
    return s;
}

ScoreSet random_set(std::mt19937_64& rng, size_t n) {
    ScoreSet s;
    s.method_tag = "rand";
    s.split_tag = "test";
    std::normal_distribution<double> genuine(0.0, 1.0), morph(1.0, 1.2);
    std::bernoulli_distribution label(0.5);
    for (size_t i = 0; i < n; ++i) {
        const int y = label(rng) ? 1 : 0;
        s.entries.push_back({"p" + std::to_string(i), y ? morph(rng) : genuine(rng), y});
    }
    // guarantee both classes
    s.entries.push_back({"g", genuine(rng), 0});
    s.entries.push_back({"m", morph(rng), 1});
    return s;
}

// independent: candidate thresholds recomputed from scratch, rates counted
// with a plain O(n) loop per threshold
std::vector<double> oracle_candidates(const ScoreSet& s) {
    std::vector<double> u;
    for (const auto& e : s.entries) u.push_back(e.score);
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    std::vector<double> t{-std::numeric_limits<double>::infinity()};
    for (size_t i = 0; i + 1 < u.size(); ++i) t.push_back(0.5 * (u[i] + u[i + 1]));
    t.push_back(std::numeric_limits<double>::infinity());
    return t;
}

std::pair<double, double> oracle_rates(const ScoreSet& s, double t) {
    double nm = 0, nb = 0, miss = 0, flag = 0;
    for (const auto& e : s.entries) {
        if (e.label == 1) {
            nm += 1;
            if (e.score < t) miss += 1;
        } else {
            nb += 1;
            if (e.score >= t) flag += 1;
        }
    }
    return {miss / nm, flag / nb};
}

std::pair<double, double> oracle_deer(const ScoreSet& s) {
    double best_gap = std::numeric_limits<double>::infinity(), best_rate = 0.5, best_t = 0;
    for (double t : oracle_candidates(s)) {
        const auto [a, b] = oracle_rates(s, t);
        if (std::abs(a - b) < best_gap) {
            best_gap = std::abs(a - b);
            best_rate = 0.5 * (a + b);
            best_t = t;
        }
    }
    return {best_rate, best_t};
}

double oracle_rate_at_fixed(const ScoreSet& s, FixedKind kind, double v) {
    double best_fixed = -1.0, best_other = 1.0;
    for (double t : oracle_candidates(s)) {
        const auto [a, b] = oracle_rates(s, t);
        const double fixed = kind == FixedKind::apcer ? a : b;
        const double other = kind == FixedKind::apcer ? b : a;
        if (fixed > v) continue;
        if (fixed > best_fixed || (fixed == best_fixed && other < best_other)) {
            best_fixed = fixed;
            best_other = other;
        }
    }
    return best_fixed < 0.0 ? 1.0 : best_other;
}

// rank-sum AUC: P(morph score > bona score), ties counted half
double oracle_auc(const ScoreSet& s) {
    double num = 0.0, den = 0.0;
    for (const auto& m : s.entries) {
        if (m.label != 1) continue;
        for (const auto& b : s.entries) {
            if (b.label != 0) continue;
            den += 1.0;
            if (m.score > b.score)
                num += 1.0;
            else if (m.score == b.score)
                num += 0.5;
        }
    }
    return num / den;
}

}  // namespace

TEST_CASE("rates at extreme thresholds") {
    const ScoreSet s = hand_set();
    const auto lo = rates_at_threshold(s, -std::numeric_limits<double>::infinity());
    CHECK(lo.apcer == 0.0);
    CHECK(lo.bpcer == 1.0);
    const auto hi = rates_at_threshold(s, std::numeric_limits<double>::infinity());
    CHECK(hi.apcer == 1.0);
    CHECK(hi.bpcer == 0.0);
}

TEST_CASE("hand-counted rates at t=0.5") {
    const auto r = rates_at_threshold(hand_set(), 0.5);
    CHECK(r.apcer == doctest::Approx(1.0 / 3.0));
    CHECK(r.bpcer == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("d_eer on the hand set") {
    const auto [rate, threshold] = d_eer(hand_set());
    CHECK(rate == doctest::Approx(1.0 / 3.0));
    CHECK(threshold > 0.4);
    CHECK(threshold < 0.8);
}

TEST_CASE("d_eer separable and uninformative cases") {
    ScoreSet sep;
    sep.method_tag = "sep";
    for (int i = 0; i < 50; ++i) {
        sep.entries.push_back({"b" + std::to_string(i), double(i) * 0.01, 0});
        sep.entries.push_back({"m" + std::to_string(i), 1.0 + double(i) * 0.01, 1});
    }
    CHECK(d_eer(sep).first == 0.0);

    ScoreSet flat;
    flat.method_tag = "flat";
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < 10000; ++i)
        flat.entries.push_back({"p" + std::to_string(i), 0.7, coin(rng) ? 1 : 0});
    CHECK(d_eer(flat).first == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("single-class set is rejected") {
    ScoreSet s;
    s.entries = {{"a", 0.1, 0}, {"b", 0.2, 0}};
    CHECK_THROWS_AS(d_eer(s), ValidationError);
    CHECK_THROWS_AS(rates_at_threshold(s, 0.0), ValidationError);
}

TEST_CASE("rate_at_fixed matches the exhaustive oracle on random sets") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        const ScoreSet s = random_set(rng, 300);
        for (double v : {0.05, 0.1, 0.3}) {
            CHECK(rate_at_fixed(s, FixedKind::apcer, v) ==
                  oracle_rate_at_fixed(s, FixedKind::apcer, v));
            CHECK(rate_at_fixed(s, FixedKind::bpcer, v) ==
                  oracle_rate_at_fixed(s, FixedKind::bpcer, v));
        }
        const auto [rate, threshold] = d_eer(s);
        const auto [orate, othreshold] = oracle_deer(s);
        CHECK(rate == orate);
        CHECK(threshold == othreshold);
    }
}

TEST_CASE("rate_at_fixed separable gives zero everywhere") {
    ScoreSet sep;
    for (int i = 0; i < 40; ++i) {
        sep.entries.push_back({"b" + std::to_string(i), double(i), 0});
        sep.entries.push_back({"m" + std::to_string(i), 100.0 + i, 1});
    }
    for (double v : {0.05, 0.1, 0.3}) {
        CHECK(rate_at_fixed(sep, FixedKind::apcer, v) == 0.0);
        CHECK(rate_at_fixed(sep, FixedKind::bpcer, v) == 0.0);
    }
}

TEST_CASE("det curve endpoints and EER crossing") {
    std::mt19937_64 rng(23);
    const ScoreSet s = random_set(rng, 400);
    const auto det = det_curve(s, 1 << 20);  // full sweep
    REQUIRE(!det.empty());
    CHECK(det.front().apcer == 0.0);
    CHECK(det.front().bpcer == 1.0);
    CHECK(det.back().apcer == 1.0);
    CHECK(det.back().bpcer == 0.0);

    // monotone: apcer non-decreasing, bpcer non-increasing along the sweep
    for (size_t i = 1; i < det.size(); ++i) {
        CHECK(det[i].apcer >= det[i - 1].apcer);
        CHECK(det[i].bpcer <= det[i - 1].bpcer);
    }

    // passes within one step of (D-EER, D-EER)
    const double deer = d_eer(s).first;
    double best = 1e9;
    for (const auto& p : det)
        best = std::min(best, std::abs(p.apcer - deer) + std::abs(p.bpcer - deer));
    CHECK(best < 0.02);
}

TEST_CASE("ROC area from the DET sweep matches the rank-sum oracle") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const ScoreSet s = random_set(rng, 500);
        const auto det = det_curve(s, 1 << 20);
        // ROC: x = bpcer (fpr), y = 1 - apcer (tpr); trapezoid over the sweep
        double auc = 0.0;
        for (size_t i = 1; i < det.size(); ++i) {
            const double x0 = det[i - 1].bpcer, x1 = det[i].bpcer;
            const double y0 = 1.0 - det[i - 1].apcer, y1 = 1.0 - det[i].apcer;
            auc += (x0 - x1) * 0.5 * (y0 + y1);
        }
        CHECK(auc == doctest::Approx(oracle_auc(s)).epsilon(1e-9));
    }
}

TEST_CASE("reported rates are invariant under strictly increasing transforms") {
    std::mt19937_64 rng(41);
    const ScoreSet s = random_set(rng, 300);
    ScoreSet warped = s;
    for (auto& e : warped.entries) e.score = std::exp(0.5 * e.score) + 3.0;
    CHECK(d_eer(s).first == d_eer(warped).first);
    for (double v : {0.05, 0.1, 0.3})
        CHECK(rate_at_fixed(s, FixedKind::apcer, v) ==
              rate_at_fixed(warped, FixedKind::apcer, v));
}

TEST_CASE("d_eer invariant under duplication of the whole set") {
    std::mt19937_64 rng(43);
    const ScoreSet s = random_set(rng, 200);
    ScoreSet doubled = s;
    for (const auto& e : s.entries)
        doubled.entries.push_back({e.pair_id + "_dup", e.score, e.label});
    CHECK(d_eer(s).first == d_eer(doubled).first);
    CHECK(d_eer(s).second == d_eer(doubled).second);
}

TEST_CASE("scores csv round trip") {
    const ScoreSet s = hand_set();
    const std::string path = "/tmp/morphdet_test_scores.csv";
    save_scores_csv(s, path);
    const ScoreSet loaded = load_scores_csv(path);
    REQUIRE(loaded.entries.size() == s.entries.size());
    CHECK(loaded.method_tag == s.method_tag);
    CHECK(loaded.split_tag == s.split_tag);
    for (size_t i = 0; i < s.entries.size(); ++i) {
        CHECK(loaded.entries[i].pair_id == s.entries[i].pair_id);
        CHECK(loaded.entries[i].score == s.entries[i].score);
        CHECK(loaded.entries[i].label == s.entries[i].label);
    }
}

TEST_CASE("evaluate_scores fills the report") {
    std::mt19937_64 rng(47);
    const ScoreSet s = random_set(rng, 400);
    const EvalReport rep = evaluate_scores(s);
    CHECK(rep.d_eer >= 0.0);
    CHECK(rep.d_eer <= 1.0);
    CHECK(rep.apcer_at_bpcer.size() == 3);
    CHECK(rep.bpcer_at_apcer.size() == 3);
    CHECK(!rep.det_samples.empty());
    for (const auto& [k, v] : rep.bpcer_at_apcer) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}
