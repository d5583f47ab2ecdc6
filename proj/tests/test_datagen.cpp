// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "r2s/datagen.hpp"

using namespace r2s;
namespace fs = std::filesystem;

namespace {

const ClassSet kClasses({"closed", "open"});

nlohmann::json doc_with(nlohmann::json images) {
    return {{"format", "r2s-dataset"}, {"version", 1}, {"classes", {"closed", "open"}}, {"images", images}};
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("r2s_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TEST(LoadDataset, PixelCornerBoxConvertsToNormalizedCenter) {
    const auto ds = parse_dataset(doc_with(
        {{{"id", "a"}, {"width", 100}, {"height", 100}, {"annotations", {{{"class", "open"}, {"bbox", {10, 20, 50, 80}}}}}}}));
    ASSERT_EQ(ds.records.size(), 1u);
    const auto& b = ds.records[0].ground_truths.at(0).bbox;
    EXPECT_NEAR(b.cx, 0.3, 1e-12);
    EXPECT_NEAR(b.cy, 0.5, 1e-12);
    EXPECT_NEAR(b.w, 0.4, 1e-12);
    EXPECT_NEAR(b.h, 0.6, 1e-12);
    EXPECT_EQ(ds.records[0].ground_truths[0].class_id, 1);
}

TEST(LoadDataset, NonSquareImageUsesDeclaredSize) {
    const auto ds = parse_dataset(doc_with(
        {{{"id", "a"}, {"width", 200}, {"height", 50}, {"annotations", {{{"class", "closed"}, {"bbox", {0, 0, 100, 10}}}}}}}));
    const auto& b = ds.records[0].ground_truths.at(0).bbox;
    EXPECT_NEAR(b.x0(), 0.0, 1e-12);
    EXPECT_NEAR(b.x1(), 0.5, 1e-12);
    EXPECT_NEAR(b.y0(), 0.8, 1e-12);  // top rows of the image are high y
    EXPECT_NEAR(b.y1(), 1.0, 1e-12);
}

TEST(LoadDataset, EmptyAnnotationsAndNormalizedBoxes) {
    const auto ds = parse_dataset(doc_with({{{"id", "a"}, {"width", 10}, {"height", 10}, {"annotations", nlohmann::json::array()}},
                                            {{"id", "b"}, {"width", 10}, {"height", 10},
                                             {"annotations", {{{"class", "open"}, {"bbox_norm", {0.5, 0.5, 0.2, 0.4}}}}}}}));
    EXPECT_TRUE(ds.records[0].ground_truths.empty());
    EXPECT_DOUBLE_EQ(ds.records[1].ground_truths[0].bbox.h, 0.4);
}

TEST(LoadDataset, SchemaErrorsNameTheRecord) {
    const nlohmann::json good{{"id", "a"}, {"width", 10}, {"height", 10}};
    auto expect_error = [](const nlohmann::json& doc, const std::string& fragment) {
        try {
            parse_dataset(doc);
            FAIL() << "expected a parse error";
        } catch (const ParseError& e) {
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
        }
    };
    expect_error(doc_with({good, good}), "image record 1: duplicate image_id");
    expect_error(doc_with({good, {{"id", "b"}, {"width", 10}}}), "image record 1");
    expect_error(doc_with({{{"id", "c"}, {"width", 10}, {"height", 10}, {"annotations", {{{"class", "window"}, {"bbox", {0, 0, 1, 1}}}}}}}),
                 "image record 0: unknown class");
    expect_error(doc_with({{{"id", "c"}, {"width", 0}, {"height", 10}}}), "image size");
    EXPECT_THROW(parse_dataset(nlohmann::json::array()), ParseError);
}

TEST(LoadDataset, SaveLoadRoundTrip) {
    SceneConfig sc;
    sc.images = 12;
    sc.seed = 3;
    const Dataset ds = generate_scenes(sc, kClasses);
    const fs::path dir = temp_dir("dataset_roundtrip");
    save_dataset(ds, dir / "ds.json");
    const Dataset back = load_dataset(dir / "ds.json");
    ASSERT_EQ(back.records.size(), ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        ASSERT_EQ(back.records[i].ground_truths.size(), ds.records[i].ground_truths.size());
        EXPECT_EQ(back.records[i].synthetic->seed, ds.records[i].synthetic->seed);
        for (std::size_t g = 0; g < ds.records[i].ground_truths.size(); ++g)
            EXPECT_NEAR(iou(back.records[i].ground_truths[g].bbox, ds.records[i].ground_truths[g].bbox), 1.0, 1e-12);
    }
    EXPECT_THROW(load_dataset(dir / "missing.json"), IoError);
}

TEST(ProposalFiles, LineFormatRoundTripsWithCrlfAndBlankLines) {
    const fs::path dir = temp_dir("proposals");
    ProposalRecord a{"img_a", {{BBox(0.5, 0.5, 0.2, 0.2), 0.75, 1}, {BBox(0.1, 0.2, 0.1, 0.1), 0.25, 0}}};
    ProposalRecord b{"img_b", {}};
    const std::string text = proposal_line(a) + "\r\n\r\n" + proposal_line(b) + "\r\n";
    write_text(dir / "p.jsonl", text);
    const auto recs = load_proposals(dir / "p.jsonl");
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].image_id, "img_a");
    ASSERT_EQ(recs[0].proposals.size(), 2u);
    EXPECT_EQ(recs[0].proposals[0].confidence, 0.75);
    EXPECT_EQ(recs[0].proposals[0].class_id, 1);
    EXPECT_EQ(recs[0].proposals[1].bbox.cy, 0.2);
    EXPECT_TRUE(recs[1].proposals.empty());
}

TEST(ProposalFiles, ErrorsCarryLineNumbers) {
    try {
        parse_proposal_line(R"({"image_id": "x", "proposals": [[0.5, 0.5, 0.1, 0.1, 1.5, 0]]})", 7);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
    }
    EXPECT_THROW(parse_proposal_line(R"({"image_id": "x", "proposals": [[0.5, 0.5, 0.1]]})", 1), ParseError);
    EXPECT_THROW(parse_proposal_line("not json", 1), ParseError);
    const std::vector<ProposalRecord> dup{{"a", {}}, {"a", {}}};
    EXPECT_THROW(index_proposals(dup), DataError);
}

DatasetRecord record_with_gts(std::size_t n) {
    DatasetRecord r;
    r.image_id = "synthetic";
    for (std::size_t i = 0; i < n; ++i) {
        const double x = 0.05 + 0.3 * static_cast<double>(i % 3), y = 0.05 + 0.3 * static_cast<double>(i / 3 % 3);
        r.ground_truths.push_back({BBox::from_corners(x, y, x + 0.25, y + 0.25), static_cast<int>(i % 2)});
    }
    return r;
}

TEST(SynthProposals, ZeroNoiseReproducesGroundTruth) {
    const auto rec = record_with_gts(4);
    NoiseConfig n;
    n.jitter_sigma = 0;
    n.label_flip_prob = 0;
    n.confidence_noise_sigma = 0;
    n.n_background_clusters = 0;
    n.n_per_gt = 5;
    const auto out = synth_proposals(rec, n, kClasses);
    ASSERT_EQ(out.proposals.size(), 20u);
    for (std::size_t i = 0; i < out.proposals.size(); ++i) {
        const auto& g = rec.ground_truths[i / 5];
        EXPECT_NEAR(iou(out.proposals[i].bbox, g.bbox), 1.0, 1e-12);
        EXPECT_EQ(out.proposals[i].class_id, g.class_id);
        EXPECT_NEAR(out.proposals[i].confidence, 1.0, 1e-12);
    }
}

TEST(SynthProposals, FlipFractionWithinBinomialBound) {
    const auto rec = record_with_gts(1);
    NoiseConfig n;
    n.n_per_gt = 10000;
    n.n_background_clusters = 0;
    n.label_flip_prob = 0.2;
    n.seed = 5;
    const auto out = synth_proposals(rec, n, kClasses);
    std::size_t flipped = 0;
    for (const auto& p : out.proposals) flipped += p.class_id != rec.ground_truths[0].class_id;
    const double N = 10000, p = 0.2, sigma = std::sqrt(N * p * (1 - p));
    EXPECT_NEAR(static_cast<double>(flipped), N * p, 3 * sigma);
}

TEST(SynthProposals, BackgroundClustersAvoidGroundTruth) {
    const auto rec = record_with_gts(3);
    NoiseConfig n;
    n.n_per_gt = 0;
    n.n_background_clusters = 5;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        n.seed = seed;
        const auto out = synth_proposals(rec, n, kClasses);
        EXPECT_GT(out.proposals.size(), 0u);
        for (const auto& p : out.proposals) {
            for (const auto& g : rec.ground_truths) EXPECT_LE(iou(p.bbox, g.bbox), 0.1);
            EXPECT_GE(p.confidence, 0.3);
            EXPECT_LE(p.confidence, 0.9);
        }
    }
}

TEST(SynthProposals, ConfidenceCorrelatesWithIou) {
    SceneConfig sc;
    sc.images = 50;
    const auto ds = generate_scenes(sc, kClasses);
    NoiseConfig n;
    n.n_background_clusters = 0;
    std::vector<double> x, y;
    for (const auto& r : ds.records) {
        const auto out = synth_proposals(r, n, kClasses);
        const auto m = match_to_gt(out.proposals, r.ground_truths);
        for (std::size_t i = 0; i < out.proposals.size(); ++i) {
            x.push_back(m[i].iou);
            y.push_back(out.proposals[i].confidence);
        }
    }
    const double N = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / N, my += y[i] / N;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.5);
}

TEST(SynthProposals, ReproducibleUnderSeed) {
    const auto rec = record_with_gts(3);
    NoiseConfig n;
    n.seed = 11;
    EXPECT_EQ(proposal_line(synth_proposals(rec, n, kClasses)), proposal_line(synth_proposals(rec, n, kClasses)));
    n.seed = 12;
    const auto other = synth_proposals(rec, n, kClasses);
    n.seed = 11;
    EXPECT_NE(proposal_line(other), proposal_line(synth_proposals(rec, n, kClasses)));
}

TEST(Scenes, DeterministicValidAndNonOverlapping) {
    SceneConfig sc;
    sc.images = 40;
    sc.seed = 9;
    const auto a = generate_scenes(sc, kClasses), b = generate_scenes(sc, kClasses);
    EXPECT_EQ(dataset_to_json(a).dump(), dataset_to_json(b).dump());
    for (const auto& r : a.records) {
        EXPECT_GE(r.ground_truths.size(), 1u);
        EXPECT_LE(r.ground_truths.size(), 3u);
        for (std::size_t i = 0; i < r.ground_truths.size(); ++i)
            for (std::size_t j = i + 1; j < r.ground_truths.size(); ++j)
                EXPECT_EQ(iou(r.ground_truths[i].bbox, r.ground_truths[j].bbox), 0.0);
    }
}

TEST(Scenes, RenderedImagesShowObjects) {
    SceneConfig sc;
    sc.images = 3;
    const auto ds = generate_scenes(sc, kClasses);
    for (const auto& r : ds.records) {
        const auto img = render_synthetic(r, 2, 64);
        EXPECT_EQ(img.shape(), (Shape{3, 64, 64}));
        for (double v : img.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_EQ(render_synthetic(r, 2, 64), img);
        const auto std_img = load_image<float>(ds, r, 3, 64);
        double mean = 0;
        for (std::size_t i = 0; i < 64 * 64; ++i) mean += std_img[i];
        EXPECT_NEAR(mean / 4096, 0.0, 1e-4);
    }
}

TEST(Images, PnmFilesAreReadAndResized) {
    const fs::path dir = temp_dir("pnm");
    std::string ppm = "P6\n# comment\n4 2\n255\n";
    for (int i = 0; i < 8; ++i) ppm += std::string{static_cast<char>(i * 30), static_cast<char>(255), 0};
    write_text(dir / "a.ppm", ppm);
    const auto img = load_pnm(dir / "a.ppm");
    EXPECT_EQ(img.shape(), (Shape{3, 2, 4}));
    EXPECT_NEAR(img.at(0, 1, 3), 210.0 / 255, 1e-12);
    EXPECT_EQ(img.at(1, 0, 0), 1.0);
    EXPECT_EQ(resize_nearest(img, 8).shape(), (Shape{3, 8, 8}));
    write_text(dir / "b.ppm", "P6\n4 2\n255\nxyz");
    EXPECT_THROW(load_pnm(dir / "b.ppm"), DataError);
    EXPECT_THROW(load_pnm(dir / "none.ppm"), IoError);
}

TEST(Split, SeventyFiveTwentyFivePartition) {
    SceneConfig sc;
    sc.images = 100;
    const auto ds = generate_scenes(sc, kClasses);
    for (auto mode : {SplitMode::ordered, SplitMode::random}) {
        const auto [train, test] = split_train_test(ds.records, 0.75, 4, mode);
        EXPECT_EQ(train.size(), 75u);
        EXPECT_EQ(test.size(), 25u);
        std::set<std::string> ids;
        for (const auto& r : train) ids.insert(r.image_id);
        for (const auto& r : test) EXPECT_TRUE(ids.insert(r.image_id).second);
        EXPECT_EQ(ids.size(), 100u);
        const auto again = split_train_test(ds.records, 0.75, 4, mode);
        for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(again.first[i].image_id, train[i].image_id);
    }
    const auto ordered = split_train_test(ds.records, 0.75, 4).first;
    EXPECT_EQ(ordered.front().image_id, "img_00000");
    EXPECT_EQ(ordered.back().image_id, "img_00074");
    EXPECT_THROW(split_train_test(ds.records, 1.0, 0), ConfigError);
}

TEST(LeaveOneOut, ElevenSegments) {
    std::vector<std::string> segs;
    for (int i = 0; i < 11; ++i) segs.push_back("seg" + std::to_string(i));
    const auto plan = leave_one_out_plan(segs);
    ASSERT_EQ(plan.size(), 11u);
    std::set<std::string> extracted;
    for (const auto& e : plan) {
        EXPECT_EQ(e.train.size(), 10u);
        EXPECT_EQ(std::count(e.train.begin(), e.train.end(), e.extract), 0);
        extracted.insert(e.extract);
    }
    EXPECT_EQ(extracted.size(), 11u);
    EXPECT_EQ(plan_to_json(plan)["runs"].size(), 11u);
}

TEST(LeaveOneOut, TwoSegmentsAndErrors) {
    const auto plan = leave_one_out_plan({"a", "b"});
    ASSERT_EQ(plan.size(), 2u);
    EXPECT_EQ(plan[0].train, std::vector<std::string>{"b"});
    EXPECT_EQ(plan[1].train, std::vector<std::string>{"a"});
    EXPECT_THROW(leave_one_out_plan({"a"}), ConfigError);
    EXPECT_THROW(leave_one_out_plan({"a", "a"}), ConfigError);
}

}  // namespace
