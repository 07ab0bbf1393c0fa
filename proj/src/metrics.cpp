#include "morphdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace morphdet {

using nlohmann::json;

void ScoreSet::require_both_classes() const {
    bool has_genuine = false, has_morph = false;
    for (const auto& e : entries) {
        if (!std::isfinite(e.score))
            throw ValidationError("non-finite score for pair '" + e.pair_id + "'");
        (e.label == 0 ? has_genuine : has_morph) = true;
    }
    if (!has_genuine || !has_morph)
        throw ValidationError("score set '" + method_tag + "' needs both classes present");
}

OperatingPoint rates_at_threshold(const ScoreSet& scores, double t) {
    scores.require_both_classes();
    size_t n_morph = 0, n_bona = 0, missed_morph = 0, flagged_bona = 0;
    for (const auto& e : scores.entries) {
        if (e.label == 1) {
            ++n_morph;
            if (e.score < t) ++missed_morph;
        } else {
            ++n_bona;
            if (e.score >= t) ++flagged_bona;
        }
    }
    return {double(missed_morph) / double(n_morph), double(flagged_bona) / double(n_bona)};
}

namespace {

std::vector<double> candidate_thresholds(const ScoreSet& scores) {
    std::vector<double> s;
    s.reserve(scores.entries.size());
    for (const auto& e : scores.entries) s.push_back(e.score);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());

    std::vector<double> t;
    t.reserve(s.size() + 1);
    t.push_back(-std::numeric_limits<double>::infinity());
    for (size_t i = 0; i + 1 < s.size(); ++i) t.push_back(0.5 * (s[i] + s[i + 1]));
    t.push_back(std::numeric_limits<double>::infinity());
    return t;
}

// Rates at every candidate threshold in one sorted pass.
struct Sweep {
    std::vector<double> thresholds;
    std::vector<OperatingPoint> rates;
};

Sweep sweep_rates(const ScoreSet& scores) {
    scores.require_both_classes();
    Sweep sw;
    sw.thresholds = candidate_thresholds(scores);
    sw.rates.reserve(sw.thresholds.size());

    std::vector<std::pair<double, int>> sorted;
    sorted.reserve(scores.entries.size());
    size_t n_morph = 0, n_bona = 0;
    for (const auto& e : scores.entries) {
        sorted.emplace_back(e.score, e.label);
        (e.label == 1 ? n_morph : n_bona)++;
    }
    std::sort(sorted.begin(), sorted.end());

    // walk thresholds in increasing order, counting entries below each
    size_t idx = 0, morph_below = 0, bona_below = 0;
    for (double t : sw.thresholds) {
        while (idx < sorted.size() && sorted[idx].first < t) {
            (sorted[idx].second == 1 ? morph_below : bona_below)++;
            ++idx;
        }
        const double apcer = double(morph_below) / double(n_morph);
        const double bpcer = double(n_bona - bona_below) / double(n_bona);
        sw.rates.push_back({apcer, bpcer});
    }
    return sw;
}

}  // namespace

std::pair<double, double> d_eer(const ScoreSet& scores) {
    const Sweep sw = sweep_rates(scores);
    double best_gap = std::numeric_limits<double>::infinity();
    double best_rate = 0.5;
    double best_t = 0.0;
    for (size_t i = 0; i < sw.thresholds.size(); ++i) {
        const double gap = std::abs(sw.rates[i].apcer - sw.rates[i].bpcer);
        if (gap < best_gap) {
            best_gap = gap;
            best_rate = 0.5 * (sw.rates[i].apcer + sw.rates[i].bpcer);
            best_t = sw.thresholds[i];
        }
    }
    return {best_rate, best_t};
}

double rate_at_fixed(const ScoreSet& scores, FixedKind fixed_kind, double fixed_value,
                     bool* warning) {
    if (!(fixed_value > 0.0 && fixed_value < 1.0))
        throw ValidationError("fixed operating value must lie in (0,1)");
    const Sweep sw = sweep_rates(scores);

    double best_fixed = -1.0;
    double best_other = 1.0;
    for (size_t i = 0; i < sw.thresholds.size(); ++i) {
        const double fixed = fixed_kind == FixedKind::apcer ? sw.rates[i].apcer : sw.rates[i].bpcer;
        const double other = fixed_kind == FixedKind::apcer ? sw.rates[i].bpcer : sw.rates[i].apcer;
        if (fixed > fixed_value) continue;
        if (fixed > best_fixed || (fixed == best_fixed && other < best_other)) {
            best_fixed = fixed;
            best_other = other;
        }
    }
    const bool degenerate = best_fixed < 0.0 || best_other >= 1.0;
    if (warning) *warning = degenerate;
    return best_fixed < 0.0 ? 1.0 : best_other;
}

std::vector<OperatingPoint> det_curve(const ScoreSet& scores, size_t n_points) {
    const Sweep sw = sweep_rates(scores);
    std::vector<OperatingPoint> full;
    full.reserve(sw.rates.size());
    for (const auto& r : sw.rates) {
        if (!full.empty() && full.back().apcer == r.apcer && full.back().bpcer == r.bpcer) continue;
        full.push_back(r);
    }
    if (n_points < 2) n_points = 2;
    if (full.size() <= n_points) return full;

    std::vector<OperatingPoint> out;
    out.reserve(n_points);
    for (size_t k = 0; k < n_points; ++k) {
        const size_t idx = k * (full.size() - 1) / (n_points - 1);
        if (!out.empty() && out.back().apcer == full[idx].apcer &&
            out.back().bpcer == full[idx].bpcer)
            continue;
        out.push_back(full[idx]);
    }
    return out;
}

EvalReport evaluate_scores(const ScoreSet& scores, size_t det_points) {
    EvalReport rep;
    rep.method_tag = scores.method_tag;
    rep.split_tag = scores.split_tag;
    const auto [rate, threshold] = d_eer(scores);
    rep.d_eer = rate;
    rep.threshold_at_eer = threshold;
    for (double v : {0.05, 0.10, 0.30}) {
        bool warn_a = false, warn_b = false;
        rep.bpcer_at_apcer[v] = rate_at_fixed(scores, FixedKind::apcer, v, &warn_a);
        rep.apcer_at_bpcer[v] = rate_at_fixed(scores, FixedKind::bpcer, v, &warn_b);
        rep.constraint_warning = rep.constraint_warning || warn_a || warn_b;
    }
    rep.det_samples = det_curve(scores, det_points);
    return rep;
}

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void save_scores_csv(const ScoreSet& scores, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scores csv: " + path);
    out << "pair_id,score,label,method_tag,split_tag\n";
    for (const auto& e : scores.entries)
        out << e.pair_id << "," << format_double(e.score) << "," << e.label << ","
            << scores.method_tag << "," << scores.split_tag << "\n";
}

ScoreSet load_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scores csv: " + path);
    std::string line;
    std::getline(in, line);  // header
    ScoreSet set;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string pair_id, score, label, method, split;
        std::getline(ss, pair_id, ',');
        std::getline(ss, score, ',');
        std::getline(ss, label, ',');
        std::getline(ss, method, ',');
        std::getline(ss, split, ',');
        set.entries.push_back({pair_id, std::stod(score), std::stoi(label)});
        set.method_tag = method;
        set.split_tag = split;
    }
    return set;
}

void save_det_csv(const std::vector<OperatingPoint>& det, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write det csv: " + path);
    out << "apcer,bpcer\n";
    for (const auto& p : det) out << format_double(p.apcer) << "," << format_double(p.bpcer) << "\n";
}

void save_report_json(const EvalReport& report, const std::string& path) {
    json j;
    j["method_tag"] = report.method_tag;
    j["split_tag"] = report.split_tag;
    j["d_eer"] = report.d_eer;
    j["threshold_at_eer"] = report.threshold_at_eer;
    auto rates_to_json = [](const std::map<double, double>& m) {
        json o = json::object();
        for (const auto& [k, v] : m) {
            std::ostringstream key;
            key << int(std::lround(k * 100)) << "%";
            o[key.str()] = v;
        }
        return o;
    };
    j["apcer_at_bpcer"] = rates_to_json(report.apcer_at_bpcer);
    j["bpcer_at_apcer"] = rates_to_json(report.bpcer_at_apcer);
    j["constraint_warning"] = report.constraint_warning;
    j["det_samples"] = json::array();
    for (const auto& p : report.det_samples) j["det_samples"].push_back({p.apcer, p.bpcer});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report json: " + path);
    out << j.dump(2) << "\n";
}

void render_det_plot(const std::vector<OperatingPoint>& det, const std::string& png_path,
                     const std::string& title) {
    const int size = 480, margin = 48;
    cv::Mat canvas(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
    const int span = size - 2 * margin;
    auto to_px = [&](const OperatingPoint& p) {
        return cv::Point(margin + int(std::lround(p.apcer * span)),
                         size - margin - int(std::lround(p.bpcer * span)));
    };
    cv::rectangle(canvas, {margin, margin}, {size - margin, size - margin}, {0, 0, 0});
    for (int tick = 0; tick <= 10; tick += 2) {
        const int x = margin + tick * span / 10;
        const int y = size - margin - tick * span / 10;
        cv::line(canvas, {x, size - margin}, {x, size - margin + 4}, {0, 0, 0});
        cv::line(canvas, {margin - 4, y}, {margin, y}, {0, 0, 0});
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%.1f", tick / 10.0);
        cv::putText(canvas, buf, {x - 10, size - margin + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                    {0, 0, 0});
        cv::putText(canvas, buf, {margin - 34, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, {0, 0, 0});
    }
    for (size_t i = 0; i + 1 < det.size(); ++i)
        cv::line(canvas, to_px(det[i]), to_px(det[i + 1]), {180, 80, 0}, 2, cv::LINE_AA);
    cv::putText(canvas, title, {margin, margin - 14}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
    cv::putText(canvas, "APCER", {size / 2 - 24, size - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                {0, 0, 0});
    cv::putText(canvas, "BPCER", {6, size / 2}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0});
    if (!cv::imwrite(png_path, canvas))
        throw std::runtime_error("cannot write det plot: " + png_path);
}

}  // namespace morphdet
