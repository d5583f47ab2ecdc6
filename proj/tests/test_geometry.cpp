// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "r2s/geometry.hpp"
#include "reference.hpp"

using namespace r2s;

namespace {

const ClassSet kTwo({"closed", "open"});

TEST(BBox, ClampsExtentsToUnitSquare) {
    const BBox b(0.95, 0.5, 0.2, 0.2);
    EXPECT_DOUBLE_EQ(b.x1(), 1.0);
    EXPECT_DOUBLE_EQ(b.x0(), 0.85);
    EXPECT_DOUBLE_EQ(b.w, 0.15);
    const BBox exact(0.5, 0.5, 0.4, 0.4);
    EXPECT_EQ(exact.cx, 0.5);
    EXPECT_EQ(exact.w, 0.4);
}

TEST(Iou, IdenticalBoxes) { EXPECT_DOUBLE_EQ(iou(BBox(0.5, 0.5, 0.4, 0.4), BBox(0.5, 0.5, 0.4, 0.4)), 1.0); }

TEST(Iou, DisjointBoxes) { EXPECT_EQ(iou(BBox(0.2, 0.2, 0.2, 0.2), BBox(0.8, 0.8, 0.2, 0.2)), 0.0); }

TEST(Iou, PartialOverlapIsOneThird) {
    EXPECT_NEAR(iou(BBox(0.5, 0.5, 0.4, 0.4), BBox(0.7, 0.5, 0.4, 0.4)), 1.0 / 3.0, 1e-12);
}

TEST(Iou, ZeroAreaBoxesGiveZero) { EXPECT_EQ(iou(BBox(0.3, 0.3, 0, 0), BBox(0.3, 0.3, 0, 0)), 0.0); }

TEST(Iou, SymmetricBoundedAndReflexive) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 2000; ++i) {
        const BBox a = testing_ref::random_box(rng), b = testing_ref::random_box(rng);
        const double ab = iou(a, b);
        EXPECT_EQ(ab, iou(b, a));
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0);
        if (a.area() > 0) {
            EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
        }
    }
}

TEST(ClassSetTest, RejectsEmptyAndDuplicates) {
    EXPECT_THROW(ClassSet(std::vector<std::string>{}), ConfigError);
    EXPECT_THROW(ClassSet({"a", "a"}), ConfigError);
    EXPECT_EQ(kTwo.background_index(), 2);
    EXPECT_EQ(kTwo.descriptor_size(), 7u);
}

TEST(Descriptor, ProposalLayout) {
    const auto d = encode_descriptor(Proposal{BBox(0.5, 0.5, 0.2, 0.4), 0.9, 1}, kTwo);
    EXPECT_EQ(d, (std::vector<double>{0.5, 0.5, 0.2, 0.4, 0.9, 0, 1}));
}

TEST(Descriptor, GroundTruthHasUnitConfidence) {
    const auto d = encode_descriptor(GroundTruth{BBox(0.1, 0.1, 0.1, 0.1), 0}, kTwo);
    EXPECT_EQ(d, (std::vector<double>{0.1, 0.1, 0.1, 0.1, 1.0, 1, 0}));
}

TEST(Descriptor, ThreeClassOneHot) {
    const ClassSet three({"a", "b", "c"});
    const auto d = encode_descriptor(Proposal{BBox(0.5, 0.5, 0.1, 0.1), 0.5, 2}, three);
    ASSERT_EQ(d.size(), 8u);
    EXPECT_EQ(std::vector<double>(d.begin() + 5, d.end()), (std::vector<double>{0, 0, 1}));
}

TEST(Descriptor, InvalidClassThrows) {
    EXPECT_THROW(encode_descriptor(Proposal{BBox(0.5, 0.5, 0.1, 0.1), 0.5, 2}, kTwo), InvalidClassError);
    EXPECT_THROW(encode_descriptor(Proposal{BBox(0.5, 0.5, 0.1, 0.1), 0.5, -1}, kTwo), InvalidClassError);
}

TEST(Descriptor, DecodeInvertsEncode) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 500; ++i) {
        const Proposal p{testing_ref::random_box(rng), u(rng), static_cast<int>(rng() % 2)};
        EXPECT_EQ(decode_descriptor(encode_descriptor(p, kTwo), kTwo), p);
    }
}

TEST(TopK, SortsByConfidence) {
    std::vector<Proposal> ps{{BBox(), 0.9, 0}, {BBox(), 0.1, 0}, {BBox(), 0.5, 0}};
    const auto out = select_top_k(ps, 2);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].confidence, 0.9);
    EXPECT_EQ(out[1].confidence, 0.5);
}

TEST(TopK, PadsWithZeroProposals) {
    std::vector<Proposal> ps{{BBox(0.5, 0.5, 0.1, 0.1), 0.9, 1}, {BBox(0.2, 0.2, 0.1, 0.1), 0.1, 0},
                             {BBox(0.7, 0.7, 0.1, 0.1), 0.5, 1}};
    const auto out = select_top_k(ps, 5);
    ASSERT_EQ(out.size(), 5u);
    EXPECT_EQ(out[3], Proposal{});
    EXPECT_EQ(out[4], Proposal{});
    // Padded rows never overlap a ground truth, so they get background targets.
    const std::vector<GroundTruth> gts{{BBox(0.5, 0.5, 0.2, 0.2), 1}};
    const auto m = match_to_gt(out, gts);
    EXPECT_EQ(relabel_target(m[3], gts[0].class_id, 0.5, kTwo), kTwo.background_index());
}

TEST(TopK, StableTieBreak) {
    std::vector<Proposal> ps{{BBox(0.1, 0.1, 0.1, 0.1), 0.7, 0}, {BBox(0.9, 0.9, 0.1, 0.1), 0.7, 1}};
    EXPECT_EQ(select_top_k(ps, 1)[0], ps[0]);
}

TEST(TopK, NonIncreasingAndExactLength) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const auto ps = testing_ref::random_proposals(rng, rng() % 40);
        const std::size_t k = 1 + rng() % 30;
        const auto out = select_top_k(ps, k);
        ASSERT_EQ(out.size(), k);
        for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LE(out[i].confidence, out[i - 1].confidence);
    }
    EXPECT_THROW(select_top_k({}, 0), ConfigError);
}

TEST(Nms, KeepsAAndC) {
    // B overlaps A with IoU 0.6; C is disjoint.
    const Proposal A{BBox(0.3, 0.5, 0.2, 0.4), 0.9, 0};
    const Proposal B{BBox(0.3 + 0.05, 0.5, 0.2, 0.4), 0.8, 1};
    const Proposal C{BBox(0.8, 0.2, 0.1, 0.1), 0.6, 0};
    ASSERT_NEAR(iou(A.bbox, B.bbox), 0.6, 1e-12);
    const auto out = nms({B, C, A}, 0.5, 0.5);
    EXPECT_EQ(out, (std::vector<Proposal>{A, C}));
}

TEST(Nms, ConfidenceThreshold) { EXPECT_TRUE(nms({{BBox(0.5, 0.5, 0.2, 0.2), 0.4, 0}}, 0.5, 0.5).empty()); }

TEST(Nms, EmptyInput) { EXPECT_TRUE(nms({}, 0.5, 0.5).empty()); }

TEST(Nms, RejectsBadThresholds) { EXPECT_THROW(nms({}, 1.5, 0.5), ConfigError); }

TEST(Nms, MatchesPairwiseOracleAndInvariants) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 300; ++t) {
        const auto ps = testing_ref::random_proposals(rng, rng() % 60);
        const double ri = u(rng), rc = u(rng);
        const auto out = nms(ps, ri, rc);
        EXPECT_EQ(out, testing_ref::nms_oracle(ps, ri, rc));
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_NE(std::find(ps.begin(), ps.end(), out[i]), ps.end());
            for (std::size_t j = i + 1; j < out.size(); ++j) EXPECT_LE(iou(out[i].bbox, out[j].bbox), ri);
        }
    }
}

TEST(Match, IdentityMatch) {
    const BBox b(0.4, 0.4, 0.2, 0.2);
    const auto m = match_to_gt({{b, 0.5, 0}}, {{b, 0}});
    ASSERT_TRUE(m[0].gt_index);
    EXPECT_EQ(*m[0].gt_index, 0u);
    EXPECT_DOUBLE_EQ(m[0].iou, 1.0);
}

TEST(Match, PicksHigherIou) {
    const Proposal p{BBox(0.5, 0.5, 0.4, 0.4), 0.5, 0};
    // Horizontal shifts giving IoU 0.3 and 0.6.
    const auto shift_for = [](double target) { return 0.4 * (1 - target) / (1 + target); };
    const std::vector<GroundTruth> gts{{BBox(0.5 + shift_for(0.3), 0.5, 0.4, 0.4), 0},
                                       {BBox(0.5 + shift_for(0.6), 0.5, 0.4, 0.4), 1}};
    const auto m = match_to_gt({p}, gts);
    EXPECT_EQ(*m[0].gt_index, 1u);
    EXPECT_NEAR(m[0].iou, 0.6, 1e-12);
}

TEST(Match, TiesGoToLowestIndex) {
    const Proposal p{BBox(0.5, 0.5, 0.2, 0.2), 0.5, 0};
    const auto m = match_to_gt({p}, {{BBox(0.5, 0.5, 0.2, 0.2), 1}, {BBox(0.5, 0.5, 0.2, 0.2), 0}});
    EXPECT_EQ(*m[0].gt_index, 0u);
}

TEST(Match, EmptyGroundTruth) {
    const auto m = match_to_gt({{BBox(0.5, 0.5, 0.2, 0.2), 0.5, 0}}, {});
    EXPECT_FALSE(m[0].gt_index);
    EXPECT_EQ(m[0].iou, 0.0);
    EXPECT_EQ(relabel_target(m[0], 0, 0.5, kTwo), kTwo.background_index());
}

TEST(Relabel, ThresholdRule) {
    EXPECT_EQ(relabel_target(MatchResult{0, 0.6}, 1, 0.5, kTwo), 1);
    EXPECT_EQ(relabel_target(MatchResult{0, 0.3}, 1, 0.5, kTwo), 2);
    EXPECT_EQ(relabel_target(MatchResult{0, 0.5}, 1, 0.5, kTwo), 1);
}

}  // namespace
