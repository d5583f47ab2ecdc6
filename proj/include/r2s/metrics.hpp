// Copyright 2026 The R2SNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// @file metrics.hpp
/// Pascal-VOC all-point average precision, the TP / FP / BFD detection
/// indicators, CSV reports and small SVG plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "r2s/geometry.hpp"

namespace r2s {

/// Detections and ground truths of one image.
struct EvalImage {
    std::string image_id;
    std::vector<Proposal> detections;
    std::vector<GroundTruth> ground_truths;
};

struct PrPoint {
    double recall = 0;
    double precision = 0;
};

namespace detail {

struct RankedDetection {
    double confidence;
    std::size_t image;
    std::size_t index;
};

/// Detections of one class in descending confidence; ties keep input order.
inline std::vector<RankedDetection> rank_class(const std::vector<EvalImage>& images, int class_id) {
    std::vector<RankedDetection> out;
    for (std::size_t i = 0; i < images.size(); ++i)
        for (std::size_t j = 0; j < images[i].detections.size(); ++j)
            if (images[i].detections[j].class_id == class_id)
                out.push_back({images[i].detections[j].confidence, i, j});
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedDetection& a, const RankedDetection& b) { return a.confidence > b.confidence; });
    return out;
}

}  // namespace detail

/// True-positive flags of the class's detections in rank order. Each
/// detection takes the unmatched same-class ground truth of highest IoU,
/// provided that IoU reaches the threshold.
inline std::vector<bool> match_detections(const std::vector<EvalImage>& images, int class_id, double iou_threshold,
                                          std::size_t* positives = nullptr) {
    std::vector<std::vector<bool>> taken(images.size());
    std::size_t npos = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        taken[i].assign(images[i].ground_truths.size(), false);
        for (const auto& g : images[i].ground_truths) npos += g.class_id == class_id;
    }
    std::vector<bool> tp;
    for (const auto& r : detail::rank_class(images, class_id)) {
        const auto& img = images[r.image];
        const BBox& box = img.detections[r.index].bbox;
        double best = -1;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < img.ground_truths.size(); ++g) {
            if (img.ground_truths[g].class_id != class_id || taken[r.image][g]) continue;
            const double v = iou(box, img.ground_truths[g].bbox);
            if (v > best) {
                best = v;
                best_g = g;
            }
        }
        const bool hit = best >= iou_threshold;
        if (hit) taken[r.image][best_g] = true;
        tp.push_back(hit);
    }
    if (positives) *positives = npos;
    return tp;
}

/// Raw precision / recall after each ranked detection.
inline std::vector<PrPoint> pr_curve(const std::vector<bool>& tp, std::size_t positives) {
    std::vector<PrPoint> out;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        hits += tp[i];
        out.push_back({positives ? static_cast<double>(hits) / static_cast<double>(positives) : 0.0,
                       static_cast<double>(hits) / static_cast<double>(i + 1)});
    }
    return out;
}

/// All-point AP: area under the monotone precision envelope.
/// Each true positive adds 1/positives of recall, so AP is the mean of the
/// envelope precision at the true-positive ranks. Extended precision keeps
/// the result to one final rounding.
inline double ap_from_ranked(const std::vector<bool>& tp, std::size_t positives) {
    if (positives == 0) return 0;
    std::vector<long double> precision(tp.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        hits += tp[i] ? 1 : 0;
        precision[i] = static_cast<long double>(hits) / static_cast<long double>(i + 1);
    }
    long double running = 0, sum = 0;
    for (std::size_t i = tp.size(); i-- > 0;) {
        running = std::max(running, precision[i]);
        if (tp[i]) sum += running;
    }
    return static_cast<double>(sum / static_cast<long double>(positives));
}

inline double average_precision(const std::vector<EvalImage>& images, int class_id, double iou_threshold = 0.5) {
    std::size_t npos = 0;
    const auto tp = match_detections(images, class_id, iou_threshold, &npos);
    return ap_from_ranked(tp, npos);
}

struct ClassMetrics {
    std::string name;
    double ap = 0;
    std::size_t gt_total = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t background = 0;  // background detections carrying this label
};

struct MetricsReport {
    std::vector<ClassMetrics> classes;
    double map = 0;  // mean AP over classes with at least one ground truth
    std::size_t gt_total = 0;
    std::size_t matched = 0;     // TP count
    std::size_t mismatched = 0;  // FP count
    std::size_t background_detections = 0;

    double rate(std::size_t count) const {
        return gt_total ? static_cast<double>(count) / static_cast<double>(gt_total) : 0.0;
    }
    double tp_rate() const { return rate(matched); }
    double fp_rate() const { return rate(mismatched); }
    double bfd_rate() const { return rate(background_detections); }  // may exceed 1
};

/// AP per class plus the indicators. For each ground truth the detection of
/// highest IoU (at least the threshold, ties to higher confidence) decides TP
/// (same label) or FP (other label). A detection whose IoU with every ground
/// truth is below the threshold is a background detection.
inline MetricsReport evaluate(const std::vector<EvalImage>& images, const ClassSet& classes,
                              double iou_threshold = 0.5) {
    MetricsReport rep;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        ClassMetrics m;
        m.name = classes.name(static_cast<int>(c));
        m.ap = average_precision(images, static_cast<int>(c), iou_threshold);
        rep.classes.push_back(m);
    }
    for (const auto& img : images) {
        for (const auto& g : img.ground_truths) {
            classes.check(g.class_id);
            auto& cm = rep.classes[static_cast<std::size_t>(g.class_id)];
            ++cm.gt_total;
            ++rep.gt_total;
            const Proposal* best = nullptr;
            double best_iou = -1;
            for (const auto& d : img.detections) {
                const double v = iou(d.bbox, g.bbox);
                if (v > best_iou || (v == best_iou && best && d.confidence > best->confidence)) {
                    best_iou = v;
                    best = &d;
                }
            }
            if (!best || best_iou < iou_threshold) continue;
            if (best->class_id == g.class_id) {
                ++cm.tp;
                ++rep.matched;
            } else {
                ++cm.fp;
                ++rep.mismatched;
            }
        }
        for (const auto& d : img.detections) {
            bool background = true;
            for (const auto& g : img.ground_truths) background = background && iou(d.bbox, g.bbox) < iou_threshold;
            if (!background) continue;
            ++rep.background_detections;
            if (d.class_id >= 0 && static_cast<std::size_t>(d.class_id) < rep.classes.size())
                ++rep.classes[static_cast<std::size_t>(d.class_id)].background;
        }
    }
    double sum = 0;
    std::size_t counted = 0;
    for (const auto& c : rep.classes)
        if (c.gt_total > 0) {
            sum += c.ap;
            ++counted;
        }
    rep.map = counted ? sum / static_cast<double>(counted) : 0.0;
    return rep;
}

/// Mean |confidence - best IoU with any ground truth| over all detections.
inline double calibration_error(const std::vector<EvalImage>& images) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& img : images)
        for (const auto& d : img.detections) {
            double best = 0;
            for (const auto& g : img.ground_truths) best = std::max(best, iou(d.bbox, g.bbox));
            sum += std::abs(d.confidence - best);
            ++n;
        }
    return n ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader = "class,AP,mAP,TP,FP,BFD,gt_total";

/// One row of a metrics CSV. Percentages carry one decimal.
struct MetricsRow {
    std::string label;
    double ap = 0, map = 0, tp = 0, fp = 0, bfd = 0;
    std::size_t gt_total = 0;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline double percent1(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

inline std::string format_row(const MetricsRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.1f,%.1f,%.1f,%.1f,%.1f,%zu", r.label.c_str(), r.ap, r.map, r.tp, r.fp, r.bfd,
                  r.gt_total);
    return buf;
}

/// Per-class rows followed by an "all" row. No images means header only.
inline std::vector<MetricsRow> report_rows(const MetricsReport& rep, std::size_t images) {
    std::vector<MetricsRow> rows;
    if (images == 0) return rows;
    const double map = percent1(rep.map);
    for (const auto& c : rep.classes) {
        const double n = static_cast<double>(c.gt_total);
        auto pct = [&](std::size_t v) { return c.gt_total ? percent1(static_cast<double>(v) / n) : 0.0; };
        rows.push_back({c.name, percent1(c.ap), map, pct(c.tp), pct(c.fp), pct(c.background), c.gt_total});
    }
    rows.push_back({"all", map, map, percent1(rep.tp_rate()), percent1(rep.fp_rate()), percent1(rep.bfd_rate()),
                    rep.gt_total});
    return rows;
}

inline std::string rows_csv(const std::vector<MetricsRow>& rows, const std::string& header = kMetricsHeader) {
    std::string out = header + "\n";
    for (const auto& r : rows) out += format_row(r) + "\n";
    return out;
}

inline std::string metrics_csv(const MetricsReport& rep, std::size_t images) {
    return rows_csv(report_rows(rep, images));
}

/// Parses a file produced by metrics_csv or comparison_csv.
inline std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("metrics CSV is empty");
    std::vector<MetricsRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw ParseError("metrics CSV line " + std::to_string(line_no) + ": expected 7 columns");
        try {
            rows.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]),
                            std::stod(cells[5]), static_cast<std::size_t>(std::stoull(cells[6]))});
        } catch (const std::exception&) {
            throw ParseError("metrics CSV line " + std::to_string(line_no) + ": bad number");
        }
    }
    return rows;
}

/// One "all" row per pipeline variant, labelled by the variant name.
inline std::string comparison_csv(const std::vector<std::pair<std::string, MetricsReport>>& variants) {
    std::vector<MetricsRow> rows;
    for (const auto& [name, rep] : variants) {
        MetricsRow r{name, percent1(rep.map), percent1(rep.map), percent1(rep.tp_rate()), percent1(rep.fp_rate()),
                     percent1(rep.bfd_rate()), rep.gt_total};
        rows.push_back(r);
    }
    return rows_csv(rows, "variant,AP,mAP,TP,FP,BFD,gt_total");
}

// ---------------------------------------------------------------------------
// SVG summaries
// ---------------------------------------------------------------------------

/// Polyline chart on a unit box; `series` holds (x, y) pairs per curve.
inline std::string svg_chart(const std::string& title, const std::vector<std::vector<std::pair<double, double>>>& series,
                             const std::vector<std::string>& names, double x_max, double y_max) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    const double W = 480, H = 320, L = 50, B = 40, T = 30, R = 20;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", x_max);
    o << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\" font-size=\"11\">" << buf
      << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.3g", y_max);
    o << "<text x=\"" << L - 4 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        o << "<polyline fill=\"none\" stroke=\"" << colors[s % 6] << "\" points=\"";
        for (const auto& [x, y] : series[s]) {
            const double px = L + (x_max > 0 ? x / x_max : 0) * (W - L - R);
            const double py = H - B - (y_max > 0 ? y / y_max : 0) * (H - B - T);
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px, py);
            o << buf;
        }
        o << "\"/>\n";
        if (s < names.size())
            o << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (s + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
              << colors[s % 6] << "\">" << names[s] << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace r2s
