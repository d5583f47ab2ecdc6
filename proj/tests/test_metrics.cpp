// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "r2s/metrics.hpp"
#include "reference.hpp"

using namespace r2s;

namespace {

const ClassSet kClasses({"closed", "open"});

BBox box(double x0, double y0, double x1, double y1) { return BBox::from_corners(x0, y0, x1, y1); }

EvalImage image(std::string id, std::vector<GroundTruth> gts, std::vector<Proposal> dets) {
    return {std::move(id), std::move(dets), std::move(gts)};
}

TEST(AveragePrecision, PerfectRankingIsOne) {
    const auto a = box(0.1, 0.1, 0.4, 0.4), b = box(0.5, 0.5, 0.9, 0.9);
    const std::vector<EvalImage> imgs{image("i", {{a, 0}, {b, 0}}, {{a, 0.9, 0}, {b, 0.8, 0}})};
    EXPECT_EQ(average_precision(imgs, 0), 1.0);
}

TEST(AveragePrecision, NoCorrectDetectionIsZero) {
    const auto a = box(0.1, 0.1, 0.4, 0.4);
    const std::vector<EvalImage> imgs{image("i", {{a, 0}}, {{box(0.6, 0.6, 0.9, 0.9), 0.9, 0}, {a, 0.5, 1}})};
    EXPECT_EQ(average_precision(imgs, 0), 0.0);
}

TEST(AveragePrecision, CorrectIncorrectCorrectIsFiveSixths) {
    const auto a = box(0.1, 0.1, 0.4, 0.4), b = box(0.5, 0.5, 0.9, 0.9);
    const std::vector<EvalImage> imgs{
        image("i", {{a, 0}, {b, 0}}, {{a, 0.9, 0}, {box(0.0, 0.6, 0.2, 0.9), 0.8, 0}, {b, 0.7, 0}})};
    EXPECT_EQ(average_precision(imgs, 0), 5.0 / 6.0);
}

TEST(AveragePrecision, DuplicateDetectionCountsOnce) {
    const auto a = box(0.1, 0.1, 0.4, 0.4);
    const std::vector<EvalImage> imgs{image("i", {{a, 0}}, {{a, 0.9, 0}, {a, 0.8, 0}})};
    const auto tp = match_detections(imgs, 0, 0.5);
    EXPECT_EQ(tp, (std::vector<bool>{true, false}));
    EXPECT_EQ(average_precision(imgs, 0), 1.0);
}

TEST(AveragePrecision, InvariantUnderMonotoneRescaling) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<EvalImage> imgs(3);
        for (auto& img : imgs) {
            for (int g = 0; g < 3; ++g) img.ground_truths.push_back({testing_ref::random_box(rng), int(rng() % 2)});
            img.detections = testing_ref::random_proposals(rng, 6);
            for (int g = 0; g < 3; ++g)
                img.detections.push_back({img.ground_truths[g].bbox, double(rng() % 21) / 20.0, int(rng() % 2)});
        }
        auto scaled = imgs;
        for (auto& img : scaled)
            for (auto& d : img.detections) d.confidence = std::exp(3 * d.confidence) - 7;
        for (int c = 0; c < 2; ++c) EXPECT_EQ(average_precision(imgs, c), average_precision(scaled, c));
    }
}

TEST(AveragePrecision, MatchesBruteForceOracleOnRandomInstances) {
    std::mt19937_64 rng(2026);
    for (int trial = 0; trial < 200; ++trial) {
        const auto imgs = testing_ref::random_ap_instance(rng);
        for (int c = 0; c < 2; ++c) {
            std::size_t npos = 0;
            const auto ranked = testing_ref::oracle_ranked(imgs, c, npos);
            EXPECT_NEAR(average_precision(imgs, c), testing_ref::ap_bruteforce(ranked, npos), 1e-12) << trial;
        }
    }
}

TEST(Indicators, PerfectDetectionsScoreFullTruePositives) {
    const auto a = box(0.1, 0.1, 0.4, 0.4), b = box(0.5, 0.5, 0.9, 0.9);
    const std::vector<EvalImage> imgs{image("i", {{a, 0}, {b, 1}}, {{a, 1.0, 0}, {b, 1.0, 1}})};
    const auto rep = evaluate(imgs, kClasses);
    EXPECT_EQ(rep.tp_rate(), 1.0);
    EXPECT_EQ(rep.fp_rate(), 0.0);
    EXPECT_EQ(rep.bfd_rate(), 0.0);
    EXPECT_EQ(rep.map, 1.0);
}

TEST(Indicators, RightBoxWrongLabelIsAFalsePositive) {
    const auto a = box(0.1, 0.1, 0.4, 0.4);
    const auto rep = evaluate({image("i", {{a, 0}}, {{a, 0.9, 1}})}, kClasses);
    EXPECT_EQ(rep.fp_rate(), 1.0);
    EXPECT_EQ(rep.tp_rate(), 0.0);
}

TEST(Indicators, BackgroundRateIsNotClamped) {
    const auto a = box(0.1, 0.1, 0.3, 0.3);
    const auto rep =
        evaluate({image("i", {{a, 0}}, {{box(0.6, 0.6, 0.8, 0.8), 0.9, 0}, {box(0.5, 0.0, 0.9, 0.2), 0.4, 1}})},
                 kClasses);
    EXPECT_EQ(rep.bfd_rate(), 2.0);
    EXPECT_EQ(rep.tp_rate() + rep.fp_rate(), 0.0);
}

TEST(Indicators, MeanApSkipsClassesWithoutGroundTruth) {
    const auto a = box(0.1, 0.1, 0.4, 0.4);
    const auto rep = evaluate({image("i", {{a, 0}}, {{a, 0.9, 0}, {box(0.6, 0.6, 0.9, 0.9), 0.8, 1}})}, kClasses);
    EXPECT_EQ(rep.classes[1].gt_total, 0u);
    EXPECT_EQ(rep.map, 1.0);
}

TEST(Indicators, TruePlusFalsePositiveRatesNeverExceedOne) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        EvalImage img;
        for (int g = 0; g < 4; ++g) img.ground_truths.push_back({testing_ref::random_box(rng), int(rng() % 2)});
        img.detections = testing_ref::random_proposals(rng, 12);
        const auto rep = evaluate({img}, kClasses);
        EXPECT_LE(rep.tp_rate() + rep.fp_rate(), 1.0 + 1e-12);
        EXPECT_GE(rep.bfd_rate(), 0.0);
    }
}

TEST(Indicators, CalibrationErrorComparesConfidenceWithOverlap) {
    const auto a = box(0.0, 0.0, 0.4, 0.4);
    const std::vector<EvalImage> imgs{
        image("i", {{a, 0}}, {{a, 0.75, 0}, {box(0.0, 0.0, 0.4, 0.2), 0.5, 0}, {box(0.6, 0.6, 0.9, 0.9), 0.25, 0}})};
    EXPECT_NEAR(calibration_error(imgs), (0.25 + 0.0 + 0.25) / 3, 1e-12);
}

TEST(Report, CsvLayoutAndRoundTrip) {
    const auto a = box(0.1, 0.1, 0.4, 0.4), b = box(0.5, 0.5, 0.9, 0.9);
    const std::vector<EvalImage> imgs{
        image("i", {{a, 0}, {b, 0}}, {{a, 0.9, 0}, {box(0.0, 0.6, 0.2, 0.9), 0.8, 0}, {b, 0.7, 0}})};
    const std::string csv = metrics_csv(evaluate(imgs, kClasses), imgs.size());
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "class,AP,mAP,TP,FP,BFD,gt_total");
    EXPECT_NE(csv.find("closed,83.3,83.3,100.0,0.0,50.0,2\n"), std::string::npos) << csv;
    EXPECT_NE(csv.find("all,83.3,83.3,100.0,0.0,50.0,2\n"), std::string::npos) << csv;
    const auto rows = parse_metrics_csv(csv);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows_csv(rows), csv);
}

TEST(Report, EmptyEvaluationWritesHeaderOnly) {
    EXPECT_EQ(metrics_csv(evaluate({}, kClasses), 0), "class,AP,mAP,TP,FP,BFD,gt_total\n");
    EXPECT_TRUE(parse_metrics_csv("class,AP,mAP,TP,FP,BFD,gt_total\n").empty());
    EXPECT_THROW(parse_metrics_csv("class,AP\nx,1\n"), ParseError);
}

TEST(Report, ComparisonHasOneRowPerVariant) {
    const auto a = box(0.1, 0.1, 0.4, 0.4);
    const auto good = evaluate({image("i", {{a, 0}}, {{a, 0.9, 0}})}, kClasses);
    const auto bad = evaluate({image("i", {{a, 0}}, {{a, 0.9, 1}})}, kClasses);
    const auto rows = parse_metrics_csv(comparison_csv({{"nms", bad}, {"r2snet", good}}));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].label, "nms");
    EXPECT_EQ(rows[1].map, 100.0);
    EXPECT_EQ(rows[0].fp, 100.0);
}

}  // namespace
