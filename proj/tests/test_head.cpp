#include <gtest/gtest.h>

#include <cmath>

#include "mvot/head.hpp"
#include "test_util.hpp"

using mvot::AnchorSet;
using mvot::Box;
using mvot::BoxDelta;
using mvot::DistractorField;
using mvot::PenaltyConfig;
using mvot::Rng;
using mvot::Tensor;

TEST(PairwiseXcorr, AllOnesGivesWindowSum) {
    const Tensor e = Tensor::full({2, 3, 7, 7}, 1.0f);
    const Tensor s = Tensor::full({2, 3, 31, 31}, 1.0f);
    const Tensor out = mvot::pairwise_depthwise_xcorr(e, s);
    ASSERT_EQ(out.shape(), (std::vector<int>{2, 3, 25, 25}));
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_FLOAT_EQ(out[i], 49.0f);
}

TEST(PairwiseXcorr, MatchesPerObjectLoopOracle) {
    Rng rng(1);
    const int n = 4, c = 3;
    const Tensor e = testutil::random_tensor(rng, {n, c, 5, 5});
    const Tensor s = testutil::random_tensor(rng, {n, c, 17, 17});
    const Tensor out = mvot::pairwise_depthwise_xcorr(e, s);
    for (int t = 0; t < n; ++t) {
        for (int ch = 0; ch < c; ++ch) {
            Tensor splane({1, 17, 17}), eplane({1, 5, 5});
            for (int y = 0; y < 17; ++y)
                for (int x = 0; x < 17; ++x) splane.at(0, y, x) = s.at(t, ch, y, x);
            for (int y = 0; y < 5; ++y)
                for (int x = 0; x < 5; ++x) eplane.at(0, y, x) = e.at(t, ch, y, x);
            const Tensor want = testutil::xcorr_single_oracle(splane, eplane);
            for (int y = 0; y < 13; ++y)
                for (int x = 0; x < 13; ++x)
                    EXPECT_NEAR(out.at(t, ch, y, x), want.at(0, y, x), 1e-5f);
        }
    }
}

TEST(PairwiseXcorr, PlantedTemplatePeaksAtOffset) {
    Rng rng(2);
    const int n = 3, c = 2, eh = 5, sh = 14;
    const Tensor e = testutil::random_tensor(rng, {n, c, eh, eh}, 0.1f, 1.0f);
    Tensor s({n, c, sh, sh});
    const int offsets[] = {0, 4, 7};
    for (int t = 0; t < n; ++t)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < eh; ++y)
                for (int x = 0; x < eh; ++x) s.at(t, ch, offsets[t] + y, offsets[t] + x) = e.at(t, ch, y, x);

    const Tensor out = mvot::pairwise_depthwise_xcorr(e, s);
    for (int t = 0; t < n; ++t) {
        for (int ch = 0; ch < c; ++ch) {
            int best_y = 0, best_x = 0;
            float best = out.at(t, ch, 0, 0);
            for (int y = 0; y < sh - eh + 1; ++y) {
                for (int x = 0; x < sh - eh + 1; ++x) {
                    if (out.at(t, ch, y, x) > best) {
                        best = out.at(t, ch, y, x);
                        best_y = y;
                        best_x = x;
                    }
                }
            }
            EXPECT_EQ(best_y, offsets[t]);
            EXPECT_EQ(best_x, offsets[t]);
        }
    }
}

TEST(PairwiseXcorr, MismatchThrows) {
    EXPECT_THROW(mvot::pairwise_depthwise_xcorr(Tensor({2, 3, 7, 7}), Tensor({3, 3, 31, 31})),
                 mvot::DimensionError);
    EXPECT_THROW(mvot::pairwise_depthwise_xcorr(Tensor({2, 3, 7, 7}), Tensor({2, 4, 31, 31})),
                 mvot::DimensionError);
}

TEST(Pdrpn, OutputExtents) {
    Rng rng(3);
    const int c = 8, k = 5;
    const mvot::RpnWeights w = mvot::seeded_rpn(c, k, rng);
    for (int n : {1, 3}) {
        const Tensor e = testutil::random_tensor(rng, {n, c, 7, 7});
        const Tensor s = testutil::random_tensor(rng, {n, c, 31, 31});
        const auto maps = mvot::pdrpn_forward(e, s, w);
        ASSERT_EQ(maps.size(), static_cast<std::size_t>(n));
        for (const auto& m : maps) {
            EXPECT_EQ(m.cls.shape(), (std::vector<int>{k, 25, 25}));
            EXPECT_EQ(m.reg.shape(), (std::vector<int>{4 * k, 25, 25}));
        }
    }
}

TEST(Pdrpn, BatchMatchesSingleTargetRuns) {
    Rng rng(4);
    const int c = 6, k = 3, n = 8;
    const mvot::RpnWeights w = mvot::seeded_rpn(c, k, rng);
    const Tensor e = testutil::random_tensor(rng, {n, c, 7, 7});
    const Tensor s = testutil::random_tensor(rng, {n, c, 31, 31});
    const auto batched = mvot::pdrpn_forward(e, s, w);

    for (int t = 0; t < n; ++t) {
        Tensor e1({1, c, 7, 7}), s1({1, c, 31, 31});
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < 7; ++y)
                for (int x = 0; x < 7; ++x) e1.at(0, ch, y, x) = e.at(t, ch, y, x);
            for (int y = 0; y < 31; ++y)
                for (int x = 0; x < 31; ++x) s1.at(0, ch, y, x) = s.at(t, ch, y, x);
        }
        const auto single = mvot::pdrpn_forward(e1, s1, w);
        EXPECT_LE(testutil::max_abs_diff(batched[static_cast<std::size_t>(t)].cls, single[0].cls), 1e-5f);
        EXPECT_LE(testutil::max_abs_diff(batched[static_cast<std::size_t>(t)].reg, single[0].reg), 1e-5f);
    }
}

TEST(Pdrpn, ZeroHeadsGiveHalfClsZeroReg) {
    Rng rng(5);
    const int c = 4, k = 2;
    mvot::RpnWeights w = mvot::seeded_rpn(c, k, rng);
    w.cls.head.weights = Tensor({2 * k, c, 1, 1});
    w.cls.head.bias.assign(static_cast<std::size_t>(2 * k), 0.0f);
    w.reg.head.weights = Tensor({4 * k, c, 1, 1});
    w.reg.head.bias.assign(static_cast<std::size_t>(4 * k), 0.0f);

    const Tensor e = testutil::random_tensor(rng, {1, c, 7, 7});
    const Tensor s = testutil::random_tensor(rng, {1, c, 31, 31});
    const auto maps = mvot::pdrpn_forward(e, s, w);
    for (std::size_t i = 0; i < maps[0].cls.size(); ++i) EXPECT_FLOAT_EQ(maps[0].cls[i], 0.5f);
    for (std::size_t i = 0; i < maps[0].reg.size(); ++i) EXPECT_EQ(maps[0].reg[i], 0.0f);
}

TEST(Pdrpn, FeatureWeightMismatchThrows) {
    Rng rng(12);
    const mvot::RpnWeights w = mvot::seeded_rpn(8, 3, rng);
    EXPECT_THROW(mvot::pdrpn_forward(Tensor({1, 6, 7, 7}), Tensor({1, 6, 31, 31}), w), mvot::DimensionError);
    EXPECT_THROW(mvot::pdrpn_forward(Tensor({2, 8, 7, 7}), Tensor({1, 8, 31, 31}), w), mvot::DimensionError);
}

TEST(Penalize, ExtentMismatchThrows) {
    PenaltyConfig cfg;
    const Tensor cls({2, 25, 25});
    const Tensor bad_shape({2, 13, 13});
    const Tensor mask({1, 25, 25});
    const Tensor hann = mvot::hanning2d(25);
    EXPECT_THROW(mvot::penalize(cls, bad_shape, mask, hann, cfg), mvot::DimensionError);
}

TEST(DecodeProposals, ZeroRegressionYieldsAnchorsInImageCoords) {
    const AnchorSet anchors;
    const int k = anchors.count();
    const Tensor reg({4 * k, 25, 25});

    // canonical region: identity mapping
    const Box canonical_region{127.5f, 127.5f, 255.0f, 255.0f};
    const auto props = mvot::decode_proposals(reg, anchors, canonical_region);
    ASSERT_EQ(props.size(), static_cast<std::size_t>(k * 25 * 25));
    for (int a = 0; a < k; ++a) {
        for (int row = 0; row < 25; ++row) {
            for (int col = 0; col < 25; ++col) {
                const Box want = anchors.anchor_box(a, row, col);
                const Box& got = props[static_cast<std::size_t>((a * 25 + row) * 25 + col)];
                EXPECT_NEAR(got.cx, want.cx, 1e-4f);
                EXPECT_NEAR(got.cy, want.cy, 1e-4f);
                EXPECT_NEAR(got.w, want.w, 1e-4f);
            }
        }
    }

    // doubled region: every coordinate scales by 2 and shifts by the corner
    const Box big_region{300.0f, 200.0f, 510.0f, 510.0f};
    const auto scaled = mvot::decode_proposals(reg, anchors, big_region);
    const Box want0 = anchors.anchor_box(0, 0, 0);
    EXPECT_NEAR(scaled[0].cx, big_region.left() + want0.cx * 2.0f, 1e-3f);
    EXPECT_NEAR(scaled[0].w, want0.w * 2.0f, 1e-3f);
}

TEST(DecodeProposals, LogRatioDoublesWidth) {
    const AnchorSet anchors;
    const int k = anchors.count();
    Tensor reg({4 * k, 25, 25});
    reg.at(2, 12, 12) = std::log(2.0f);  // dw of anchor 0 at the central cell
    const Box region{127.5f, 127.5f, 255.0f, 255.0f};
    const auto props = mvot::decode_proposals(reg, anchors, region);
    const Box base = anchors.anchor_box(0, 12, 12);
    EXPECT_NEAR(props[static_cast<std::size_t>((0 * 25 + 12) * 25 + 12)].w, base.w * 2.0f, 1e-3f);
}

TEST(DecodeProposals, ReencodeRecoversRegression) {
    Rng rng(6);
    AnchorSet anchors;
    Tensor reg = testutil::random_tensor(rng, {4 * anchors.count(), 25, 25}, -0.5f, 0.5f);
    const Box region{200.0f, 150.0f, 380.0f, 380.0f};
    const auto props = mvot::decode_proposals(reg, anchors, region);
    const float scale = region.w / 255.0f;
    for (int a = 0; a < anchors.count(); a += 2) {
        for (int row = 3; row < 25; row += 7) {
            for (int col = 5; col < 25; col += 9) {
                const Box& p = props[static_cast<std::size_t>((a * 25 + row) * 25 + col)];
                const Box canonical{(p.cx - region.left()) / scale, (p.cy - region.top()) / scale, p.w / scale,
                                    p.h / scale};
                const BoxDelta d = mvot::encode_delta(anchors.anchor_box(a, row, col), canonical);
                EXPECT_NEAR(d.dx, reg.at(4 * a + 0, row, col), 1e-6f);
                EXPECT_NEAR(d.dy, reg.at(4 * a + 1, row, col), 1e-6f);
                EXPECT_NEAR(d.dw, reg.at(4 * a + 2, row, col), 1e-6f);
                EXPECT_NEAR(d.dh, reg.at(4 * a + 3, row, col), 1e-6f);
            }
        }
    }
}

TEST(ShapePenalty, IdenticalBoxesScoreOne) {
    const Box b{100, 100, 80, 50};
    EXPECT_FLOAT_EQ(mvot::shape_penalty_value(b, b, 0.04f), 1.0f);
}

TEST(ShapePenalty, HandDerivedValue) {
    // proposal 200x100 vs previous 100x100, beta 0.04:
    //   ratio term: r=2, r'=1 -> 2
    //   padded scales: s = sqrt((200+150)(100+150)) with pad (200+100)/2,
    //                  s' = sqrt((100+100)(100+100)) with pad 100 -> 200
    //   penalty = exp(-0.04*(2*sqrt(87500)/200 - 1))
    const double s = std::sqrt(350.0 * 250.0);
    const double expected = std::exp(-0.04 * (2.0 * s / 200.0 - 1.0));
    const float got = mvot::shape_penalty_value(Box{0, 0, 200, 100}, Box{0, 0, 100, 100}, 0.04f);
    EXPECT_NEAR(got, static_cast<float>(expected), 1e-6f);
    EXPECT_NEAR(got, 0.9246673f, 1e-5f);
}

TEST(ShapePenalty, SymmetricUnderSwap) {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const Box a{0, 0, rng.uniform(10.0f, 200.0f), rng.uniform(10.0f, 200.0f)};
        const Box b{0, 0, rng.uniform(10.0f, 200.0f), rng.uniform(10.0f, 200.0f)};
        EXPECT_NEAR(mvot::shape_penalty_value(a, b, 0.04f), mvot::shape_penalty_value(b, a, 0.04f), 1e-6f);
    }
}

TEST(ShapePenalty, AtMostOneAndTightOnlyAtIdentity) {
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        const Box prev{0, 0, rng.uniform(10.0f, 200.0f), rng.uniform(10.0f, 200.0f)};
        const Box prop{0, 0, rng.uniform(10.0f, 200.0f), rng.uniform(10.0f, 200.0f)};
        const float pen = mvot::shape_penalty_value(prop, prev, 0.04f);
        EXPECT_LE(pen, 1.0f);
        const bool same_ratio = std::fabs(prop.w / prop.h - prev.w / prev.h) < 1e-5f;
        const bool same_scale = std::fabs(prop.w - prev.w) < 1e-5f && std::fabs(prop.h - prev.h) < 1e-5f;
        if (pen >= 1.0f - 1e-7f) {
            EXPECT_TRUE(same_ratio);
            (void)same_scale;
        }
    }
}

namespace {

// scalar evaluation of the window formula at one field cell
double field_value_oracle(const Box& mapped, int i, int j) {
    const double aw = mapped.w, ah = mapped.h;
    if (i < mapped.left() || i > mapped.right() || j < mapped.top() || j > mapped.bottom()) return 1.0;
    const double sx = std::sin(M_PI * (mapped.cx - 0.5 * aw - i) / (aw - 1.0));
    const double sy = std::sin(M_PI * (mapped.cy - 0.5 * ah - j) / (ah - 1.0));
    return 1.0 - (sx * sy) * (sx * sy);
}

}  // namespace

TEST(DistractorField, ExtentsFollowFrameScaling) {
    const auto field = mvot::build_distractor_field({Box{100, 100, 80, 80}}, 640, 480);
    // ceil(25*640/255) x ceil(25*480/255)
    EXPECT_EQ(field.field.shape(), (std::vector<int>{1, 48, 63}));
}

TEST(DistractorField, CenterDipsAndOutsideIsOne) {
    const Box region{300, 240, 200, 200};
    const auto field = mvot::build_distractor_field({region}, 640, 480);
    const Box& mapped = field.mapped_regions[0];

    const int ci = static_cast<int>(std::lround(mapped.cx));
    const int cj = static_cast<int>(std::lround(mapped.cy));
    const float center = field.field.at(0, cj, ci);
    EXPECT_NEAR(center, static_cast<float>(field_value_oracle(mapped, ci, cj)), 1e-5f);
    EXPECT_LT(center, 0.05f);  // approaches 0 for large windows

    // all cells outside the mapped box are exactly 1
    for (int j = 0; j < field.field.extent(1); ++j) {
        for (int i = 0; i < field.field.extent(2); ++i) {
            if (i >= mapped.left() && i <= mapped.right() && j >= mapped.top() && j <= mapped.bottom()) continue;
            EXPECT_EQ(field.field.at(0, j, i), 1.0f);
        }
    }
}

TEST(DistractorField, BoundaryCellsNearOne) {
    const Box region{300, 240, 255, 255};  // maps to width 25
    const auto field = mvot::build_distractor_field({region}, 640, 480);
    const Box& mapped = field.mapped_regions[0];
    const int j = static_cast<int>(std::lround(mapped.cy));
    const int left = static_cast<int>(std::ceil(mapped.left()));
    const int right = static_cast<int>(std::floor(mapped.right()));
    // compare directly against the scalar formula at the edge cells
    EXPECT_NEAR(field.field.at(0, j, left), static_cast<float>(field_value_oracle(mapped, left, j)), 1e-5f);
    EXPECT_NEAR(field.field.at(0, j, right), static_cast<float>(field_value_oracle(mapped, right, j)), 1e-5f);
    // the sine argument at the left edge is ~0, so the value is ~1
    EXPECT_GT(field.field.at(0, j, left), 0.98f);
}

TEST(DistractorMask, SingleTargetIsAllOnes) {
    const auto field = mvot::build_distractor_field({Box{100, 100, 120, 120}}, 400, 300);
    const Tensor mask = mvot::distractor_mask(field, 0);
    ASSERT_EQ(mask.shape(), (std::vector<int>{1, 25, 25}));
    for (std::size_t i = 0; i < mask.size(); ++i) EXPECT_EQ(mask[i], 1.0f);
}

TEST(DistractorMask, CoLocatedTargetsSuppressCenter) {
    const Box region{200, 150, 160, 160};
    const auto field = mvot::build_distractor_field({region, region}, 400, 300);
    const Tensor mask = mvot::distractor_mask(field, 0);
    EXPECT_LT(mask.at(0, 12, 12), 0.1f);
}

TEST(DistractorMask, FarDistractorLeavesOnes) {
    const auto field =
        mvot::build_distractor_field({Box{80, 80, 60, 60}, Box{520, 400, 60, 60}}, 640, 480);
    const Tensor mask = mvot::distractor_mask(field, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) EXPECT_NEAR(mask[i], 1.0f, 1e-6f);
}

TEST(DistractorMask, IndexOutOfRangeThrows) {
    const auto field = mvot::build_distractor_field({Box{80, 80, 60, 60}}, 640, 480);
    EXPECT_THROW(mvot::distractor_mask(field, 1), mvot::ArgumentError);
    EXPECT_THROW(mvot::distractor_mask(field, -1), mvot::ArgumentError);
}

TEST(DistractorMask, AntiMonotoneInDistance) {
    // distractor recedes to the right along one axis, its center beyond the
    // target's search region; every mask cell is non-decreasing
    const Box target_region{100, 100, 165, 165};
    Tensor prev_mask;
    for (int step = 0; step < 14; ++step) {
        const float dx = 240.0f + 8.0f * static_cast<float>(step);
        const auto field =
            mvot::build_distractor_field({target_region, Box{dx, 100, 165, 165}}, 640, 480);
        const Tensor mask = mvot::distractor_mask(field, 0);
        if (step > 0)
            for (std::size_t i = 0; i < mask.size(); ++i) EXPECT_GE(mask[i], prev_mask[i] - 1e-6f) << "step " << step;
        prev_mask = mask;
    }
}

TEST(Penalize, NoOpConfigurationKeepsConstantMap) {
    PenaltyConfig cfg;
    cfg.shape_enabled = false;
    cfg.distractor_enabled = false;
    cfg.spatial_enabled = false;
    cfg.erosion_enabled = true;  // erosion of a constant map is the identity
    const Tensor cls = Tensor::full({3, 25, 25}, 0.42f);
    const Tensor pscore = mvot::penalize(cls, Tensor(), Tensor(), Tensor(), cfg);
    EXPECT_EQ(testutil::max_abs_diff(pscore, cls), 0.0f);
}

TEST(Penalize, ErosionKillsIsolatedPeakKeepsPlateau) {
    PenaltyConfig cfg;
    cfg.shape_enabled = false;
    cfg.distractor_enabled = false;
    cfg.spatial_enabled = false;

    Tensor cls({1, 25, 25});
    cls.at(0, 5, 5) = 1.0f;  // isolated single-cell outlier
    for (int y = 14; y <= 16; ++y)
        for (int x = 14; x <= 16; ++x) cls.at(0, y, x) = 0.8f;  // 3x3 plateau

    const Tensor pscore = mvot::penalize(cls, Tensor(), Tensor(), Tensor(), cfg);
    EXPECT_EQ(pscore.at(0, 5, 5), 0.0f);
    EXPECT_EQ(pscore.at(0, 15, 15), 0.8f);

    std::size_t argmax = 0;
    for (std::size_t i = 1; i < pscore.size(); ++i)
        if (pscore[i] > pscore[argmax]) argmax = i;
    EXPECT_EQ(argmax, static_cast<std::size_t>(15 * 25 + 15));
}

TEST(Penalize, FullWindowInfluenceReturnsHanning) {
    PenaltyConfig cfg;
    cfg.shape_enabled = false;
    cfg.distractor_enabled = false;
    cfg.erosion_enabled = false;
    cfg.window_influence = 1.0f;
    Rng rng(9);
    const Tensor cls = testutil::random_tensor(rng, {2, 25, 25}, 0.0f, 1.0f);
    const Tensor hann = mvot::hanning2d(25);
    const Tensor pscore = mvot::penalize(cls, Tensor(), Tensor(), hann, cfg);
    for (int a = 0; a < 2; ++a)
        for (int y = 0; y < 25; ++y)
            for (int x = 0; x < 25; ++x) EXPECT_FLOAT_EQ(pscore.at(a, y, x), hann.at(0, y, x));
}

TEST(Penalize, BoundedWhenInputsBounded) {
    Rng rng(10);
    PenaltyConfig cfg;
    const Tensor hann = mvot::hanning2d(25);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor cls = testutil::random_tensor(rng, {2, 25, 25}, 0.0f, 1.0f);
        Tensor shape_pen = testutil::random_tensor(rng, {2, 25, 25}, 0.0f, 1.0f);
        Tensor mask = testutil::random_tensor(rng, {1, 25, 25}, 0.0f, 1.0f);
        const Tensor pscore = mvot::penalize(cls, shape_pen, mask, hann, cfg);
        for (std::size_t i = 0; i < pscore.size(); ++i) {
            EXPECT_GE(pscore[i], 0.0f);
            EXPECT_LE(pscore[i], 1.0f);
        }
    }
}

TEST(Penalize, ArgmaxInvariantToPositiveScalingWithoutWindow) {
    Rng rng(11);
    PenaltyConfig cfg;
    cfg.spatial_enabled = false;
    const Tensor cls = testutil::random_tensor(rng, {2, 25, 25}, 0.0f, 1.0f);
    const Tensor shape_pen = testutil::random_tensor(rng, {2, 25, 25}, 0.1f, 1.0f);
    const Tensor mask = testutil::random_tensor(rng, {1, 25, 25}, 0.1f, 1.0f);

    Tensor scaled = cls;
    mvot::scale_inplace(scaled, 3.7f);
    const Tensor a = mvot::penalize(cls, shape_pen, mask, Tensor(), cfg);
    const Tensor b = mvot::penalize(scaled, shape_pen, mask, Tensor(), cfg);
    std::size_t arg_a = 0, arg_b = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        if (a[i] > a[arg_a]) arg_a = i;
        if (b[i] > b[arg_b]) arg_b = i;
    }
    EXPECT_EQ(arg_a, arg_b);
}

TEST(SelectBox, LonePeakReturnsItself) {
    const std::vector<Box> proposals{Box{50, 50, 20, 20}, Box{200, 200, 20, 20}, Box{350, 120, 20, 20}};
    const Tensor pscore({1, 3, 1}, {0.2f, 0.9f, 0.4f});
    const Tensor raw({1, 3, 1}, {0.2f, 0.7f, 0.4f});
    const auto sel = mvot::select_box(pscore, proposals, raw, PenaltyConfig{});
    EXPECT_EQ(sel.box.cx, 200.0f);
    EXPECT_EQ(sel.box.cy, 200.0f);
    EXPECT_FLOAT_EQ(sel.confidence, 0.7f);
}

TEST(SelectBox, IdenticalCandidatesVoteToSameBox) {
    const Box b{100, 100, 40, 40};
    const std::vector<Box> proposals{b, b};
    const Tensor pscore({1, 2, 1}, {0.9f, 0.5f});
    const Tensor raw({1, 2, 1}, {0.25f, 0.75f});
    const auto sel = mvot::select_box(pscore, proposals, raw, PenaltyConfig{});
    EXPECT_NEAR(sel.box.cx, b.cx, 1e-4f);
    EXPECT_NEAR(sel.box.cy, b.cy, 1e-4f);
    EXPECT_NEAR(sel.box.w, b.w, 1e-4f);
}

TEST(SelectBox, HandComputedWeightedVote) {
    const Box b0{100, 100, 40, 40};
    const Box b1{101, 100, 40, 40};  // IoU vs b0 = 1560/1640 ~ 0.951
    const Box b2{100, 102, 40, 40};  // IoU vs b0 = 1520/1680 ~ 0.905
    const Box far{300, 300, 40, 40};
    const std::vector<Box> proposals{b0, b1, b2, far};
    const Tensor pscore({1, 4, 1}, {0.9f, 0.5f, 0.4f, 0.3f});
    const Tensor raw({1, 4, 1}, {0.6f, 0.3f, 0.1f, 0.9f});

    ASSERT_GE(mvot::iou(b0, b1), 0.8f);
    ASSERT_GE(mvot::iou(b0, b2), 0.8f);
    ASSERT_LT(mvot::iou(b0, far), 0.8f);

    const auto sel = mvot::select_box(pscore, proposals, raw, PenaltyConfig{});
    const double wsum = 0.6 + 0.3 + 0.1;
    const double left = (0.6 * 80.0 + 0.3 * 81.0 + 0.1 * 80.0) / wsum;
    const double top = (0.6 * 80.0 + 0.3 * 80.0 + 0.1 * 82.0) / wsum;
    const double right = (0.6 * 120.0 + 0.3 * 121.0 + 0.1 * 120.0) / wsum;
    const double bottom = (0.6 * 120.0 + 0.3 * 120.0 + 0.1 * 122.0) / wsum;
    EXPECT_NEAR(sel.box.left(), static_cast<float>(left), 1e-4f);
    EXPECT_NEAR(sel.box.top(), static_cast<float>(top), 1e-4f);
    EXPECT_NEAR(sel.box.right(), static_cast<float>(right), 1e-4f);
    EXPECT_NEAR(sel.box.bottom(), static_cast<float>(bottom), 1e-4f);
    EXPECT_FLOAT_EQ(sel.confidence, 0.6f);
}

TEST(SelectBox, EmptyProposalsThrow) {
    EXPECT_THROW(mvot::select_box(Tensor({1, 1, 1}), {}, Tensor({1, 1, 1}), PenaltyConfig{}), mvot::StateError);
}
