#pragma once

#include <map>
#include <string>
#include <vector>

#include "morphdet/types.hpp"

namespace morphdet {

// Per-pair decision scores. Polarity convention across the whole toolkit:
// larger score => more likely morph (imposter).
struct ScoreEntry {
    std::string pair_id;
    double score = 0.0;
    int label = 0;  // y_g: 0 genuine, 1 morph
};

struct ScoreSet {
    std::vector<ScoreEntry> entries;
    std::string method_tag;
    std::string split_tag;

    void require_both_classes() const;  // throws ValidationError
};

struct OperatingPoint {
    double apcer = 0.0;
    double bpcer = 0.0;
};

struct EvalReport {
    std::string method_tag;
    std::string split_tag;
    double d_eer = 0.0;
    double threshold_at_eer = 0.0;
    std::map<double, double> apcer_at_bpcer;  // keyed by the fixed BPCER value
    std::map<double, double> bpcer_at_apcer;  // keyed by the fixed APCER value
    std::vector<OperatingPoint> det_samples;
    bool constraint_warning = false;  // a fixed operating point was unachievable
};

// Classification rule at threshold t: morph iff score >= t.
// APCER: fraction of morphs with score < t.  BPCER: fraction of bona fide
// entries with score >= t.
OperatingPoint rates_at_threshold(const ScoreSet& scores, double t);

// Candidate thresholds: -inf, midpoints between adjacent sorted unique
// scores, +inf. Returns the threshold minimizing |apcer - bpcer|, ties
// broken toward the lower threshold; .first is (apcer+bpcer)/2 there.
std::pair<double, double> d_eer(const ScoreSet& scores);

enum class FixedKind { apcer, bpcer };

// Largest achievable fixed-rate <= fixed_value over the candidate sweep;
// returns the complementary rate at that operating point (no interpolation).
// Sets *warning when the complementary rate degenerates to 1.
double rate_at_fixed(const ScoreSet& scores, FixedKind fixed_kind, double fixed_value,
                     bool* warning = nullptr);

// Full sweep over candidate thresholds, deduplicated and downsampled to at
// most n_points while keeping both endpoints (0,1) and (1,0).
std::vector<OperatingPoint> det_curve(const ScoreSet& scores, size_t n_points);

EvalReport evaluate_scores(const ScoreSet& scores, size_t det_points = 200);

// scores.csv columns, in order: pair_id, score, label, method_tag, split_tag
void save_scores_csv(const ScoreSet& scores, const std::string& path);
ScoreSet load_scores_csv(const std::string& path);

void save_det_csv(const std::vector<OperatingPoint>& det, const std::string& path);
void save_report_json(const EvalReport& report, const std::string& path);

// DET plot rendered as a PNG (axes in error-rate units, log-free).
void render_det_plot(const std::vector<OperatingPoint>& det, const std::string& png_path,
                     const std::string& title);

}  // namespace morphdet
