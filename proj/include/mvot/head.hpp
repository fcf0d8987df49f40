#pragma once

// Comparison head: pairwise-depthwise correlation RPN over exemplar/search
// pairs, anchor decode back to image pixels, and the four-stage multi-object
// penalization (erosion, shape, distractor, spatial window) with box voting.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/geometry.hpp"
#include "mvot/nn.hpp"
#include "mvot/tensor.hpp"

namespace mvot {

// ---------------------------------------------------------------------------
// anchors

// Single-scale anchors in canonical search coordinates (the RoI extractor
// normalizes object size, so only aspect ratios vary).
struct AnchorSet {
    std::vector<float> ratios{1.0f / 3.0f, 0.5f, 1.0f, 2.0f, 3.0f};  // w/h
    float base_size = 64.0f;  // canonical pixels
    int grid = 25;
    int stride = 8;
    int canonical = 255;

    int count() const { return static_cast<int>(ratios.size()); }

    // center of score-map cell (row, col) in canonical coordinates
    float cell_x(int col) const {
        return 0.5f * static_cast<float>(canonical) + static_cast<float>(col - grid / 2) * static_cast<float>(stride);
    }
    float cell_y(int row) const {
        return 0.5f * static_cast<float>(canonical) + static_cast<float>(row - grid / 2) * static_cast<float>(stride);
    }

    Box anchor_box(int ratio_index, int row, int col) const {
        const float r = ratios[static_cast<std::size_t>(ratio_index)];
        const float w = base_size * std::sqrt(r);
        const float h = base_size / std::sqrt(r);
        return Box{cell_x(col), cell_y(row), w, h};
    }
};

// Per-target RPN outputs.
struct ScoreMaps {
    Tensor cls;  // K x grid x grid objectness probabilities
    Tensor reg;  // 4K x grid x grid anchor deltas
};

// ---------------------------------------------------------------------------
// pairwise depthwise correlation

// out[n,c] = valid cross-correlation of S[n,c] with kernel E[n,c]; no mixing
// across channels or targets.
inline Tensor pairwise_depthwise_xcorr(const Tensor& exemplars, const Tensor& searches) {
    if (exemplars.rank() != 4 || searches.rank() != 4)
        throw DimensionError("pairwise xcorr expects NxCxHxW inputs");
    const int n = exemplars.extent(0), c = exemplars.extent(1);
    const int eh = exemplars.extent(2), ew = exemplars.extent(3);
    const int sh = searches.extent(2), sw = searches.extent(3);
    if (searches.extent(0) != n || searches.extent(1) != c)
        throw DimensionError("pairwise xcorr: target/channel mismatch");
    if (sh < eh || sw < ew) throw DimensionError("pairwise xcorr: search smaller than exemplar");

    const int oh = sh - eh + 1, ow = sw - ew + 1;
    Tensor out({n, c, oh, ow});
    for (int t = 0; t < n; ++t) {
        for (int ch = 0; ch < c; ++ch) {
            const float* ep = &exemplars.at(t, ch, 0, 0);
            const float* sp = &searches.at(t, ch, 0, 0);
            float* op = &out.at(t, ch, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = 0.0f;
                    for (int ky = 0; ky < eh; ++ky) {
                        const float* srow = sp + static_cast<std::size_t>(oy + ky) * sw + ox;
                        const float* erow = ep + static_cast<std::size_t>(ky) * ew;
                        for (int kx = 0; kx < ew; ++kx) acc += srow[kx] * erow[kx];
                    }
                    op[static_cast<std::size_t>(oy) * ow + ox] = acc;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// RPN head

struct RpnBranchWeights {
    Kernel2D exemplar;  // 3x3 unpadded specialization
    Kernel2D search;    // 3x3 unpadded specialization
    Kernel2D head;      // 1x1 to 2K (cls) or 4K (reg)
};

struct RpnWeights {
    RpnBranchWeights cls;
    RpnBranchWeights reg;

    int anchor_count() const { return cls.head.out_channels() / 2; }
};

inline RpnWeights seeded_rpn(int channels, int anchors, Rng& rng) {
    RpnWeights w;
    w.cls.exemplar = seeded_conv(rng, channels, channels, 3, 1, 0);
    w.cls.search = seeded_conv(rng, channels, channels, 3, 1, 0);
    w.cls.head = seeded_conv(rng, 2 * anchors, channels, 1, 1, 0);
    w.reg.exemplar = seeded_conv(rng, channels, channels, 3, 1, 0);
    w.reg.search = seeded_conv(rng, channels, channels, 3, 1, 0);
    w.reg.head = seeded_conv(rng, 4 * anchors, channels, 1, 1, 0);
    return w;
}

namespace detail {

inline Tensor slice_target(const Tensor& batch, int n) {
    const int c = batch.extent(1), h = batch.extent(2), w = batch.extent(3);
    Tensor out({c, h, w});
    const float* src = &batch.at(n, 0, 0, 0);
    std::copy(src, src + out.size(), out.data());
    return out;
}

inline void stack_into(Tensor& batch, int n, const Tensor& t) {
    float* dst = &batch.at(n, 0, 0, 0);
    std::copy(t.data(), t.data() + t.size(), dst);
}

// branch = specialize both sides, correlate depthwise, apply the 1x1 head
inline std::vector<Tensor> rpn_branch(const Tensor& exemplars, const Tensor& searches,
                                      const RpnBranchWeights& w) {
    const int n = exemplars.extent(0);
    const int c = w.exemplar.out_channels();
    const int eh = exemplars.extent(2) - 2, ew = exemplars.extent(3) - 2;
    const int sh = searches.extent(2) - 2, sw = searches.extent(3) - 2;

    Tensor spec_e({n, c, eh, ew}), spec_s({n, c, sh, sw});
    for (int t = 0; t < n; ++t) {
        stack_into(spec_e, t, conv2d(slice_target(exemplars, t), w.exemplar));
        stack_into(spec_s, t, conv2d(slice_target(searches, t), w.search));
    }
    const Tensor corr = pairwise_depthwise_xcorr(spec_e, spec_s);
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) out.push_back(conv2d(slice_target(corr, t), w.head));
    return out;
}

}  // namespace detail

// Classification and regression maps for every target in one batched pass.
inline std::vector<ScoreMaps> pdrpn_forward(const Tensor& exemplars, const Tensor& searches, const RpnWeights& w) {
    if (exemplars.rank() != 4 || searches.rank() != 4) throw DimensionError("pdrpn expects NxCxHxW inputs");
    if (exemplars.extent(0) != searches.extent(0)) throw DimensionError("pdrpn: target count mismatch");
    if (exemplars.extent(1) != w.cls.exemplar.in_channels())
        throw DimensionError("pdrpn: feature channels do not match head weights");

    const int n = exemplars.extent(0);
    std::vector<Tensor> cls_logits = detail::rpn_branch(exemplars, searches, w.cls);
    std::vector<Tensor> reg_maps = detail::rpn_branch(exemplars, searches, w.reg);

    std::vector<ScoreMaps> out(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        out[static_cast<std::size_t>(t)].cls = softmax_pairs(cls_logits[static_cast<std::size_t>(t)]);
        out[static_cast<std::size_t>(t)].reg = std::move(reg_maps[static_cast<std::size_t>(t)]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// proposal decode

// Flat proposal order matches the cls tensor: index = (k*grid + row)*grid + col.
inline std::vector<Box> decode_proposals(const Tensor& reg, const AnchorSet& anchors, const Box& region) {
    const int k = anchors.count(), grid = anchors.grid;
    if (reg.rank() != 3 || reg.extent(0) != 4 * k || reg.extent(1) != grid || reg.extent(2) != grid)
        throw DimensionError("decode_proposals: regression map extents");

    const float scale = region.w / static_cast<float>(anchors.canonical);
    const float left = region.left(), top = region.top();

    std::vector<Box> out;
    out.reserve(static_cast<std::size_t>(k * grid * grid));
    for (int a = 0; a < k; ++a) {
        for (int row = 0; row < grid; ++row) {
            for (int col = 0; col < grid; ++col) {
                const Box anchor = anchors.anchor_box(a, row, col);
                const BoxDelta d{reg.at(4 * a + 0, row, col), reg.at(4 * a + 1, row, col),
                                 reg.at(4 * a + 2, row, col), reg.at(4 * a + 3, row, col)};
                const Box canonical = decode_delta(anchor, d);
                out.push_back(Box{left + canonical.cx * scale, top + canonical.cy * scale, canonical.w * scale,
                                  canonical.h * scale});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// penalties

struct PenaltyConfig {
    float beta = 0.04f;
    float window_influence = 0.42f;  // lambda
    bool shape_enabled = true;
    bool distractor_enabled = true;
    bool erosion_enabled = true;
    bool spatial_enabled = true;
    float confidence_floor = 0.15f;  // tau
    float vote_iou = 0.8f;
};

// exp(-beta*(ratio_term * scale_term - 1)); each box uses its own context
// padding p = (w+h)/2 for the padded scale sqrt((w+p)(h+p)).
inline float shape_penalty_value(const Box& proposal, const Box& prev, float beta) {
    auto padded_scale = [](const Box& b) {
        const float p = 0.5f * (b.w + b.h);
        return std::sqrt((b.w + p) * (b.h + p));
    };
    const float r = proposal.w / proposal.h;
    const float rp = prev.w / prev.h;
    const float ratio_term = std::max(r / rp, rp / r);
    const float s = padded_scale(proposal);
    const float sp = padded_scale(prev);
    const float scale_term = std::max(s / sp, sp / s);
    return std::exp(-beta * (ratio_term * scale_term - 1.0f));
}

inline Tensor shape_penalty(const std::vector<Box>& proposals, const Box& prev, float beta, int anchors, int grid) {
    if (static_cast<int>(proposals.size()) != anchors * grid * grid)
        throw DimensionError("shape_penalty: proposal count");
    Tensor out({anchors, grid, grid});
    for (std::size_t i = 0; i < proposals.size(); ++i) out[i] = shape_penalty_value(proposals[i], prev, beta);
    return out;
}

// ---------------------------------------------------------------------------
// distractor field

// Global penalization window: one channel per target with an inverted
// squared-sine bump over that target's search area, 1 elsewhere. Coordinates
// are frame pixels scaled by grid/canonical per axis.
struct DistractorField {
    Tensor field;                     // N x Hg x Wg, values in [0,1]
    std::vector<Box> mapped_regions;  // per-target search areas in window coordinates
    float scale = 0.0f;               // window px per image px
};

inline DistractorField build_distractor_field(const std::vector<Box>& search_regions, int frame_w, int frame_h,
                                              int grid = 25, int canonical = 255) {
    if (search_regions.empty()) throw ArgumentError("distractor field needs at least one target");
    const float scale = static_cast<float>(grid) / static_cast<float>(canonical);
    const int win_w = static_cast<int>(std::ceil(static_cast<float>(frame_w) * scale));
    const int win_h = static_cast<int>(std::ceil(static_cast<float>(frame_h) * scale));
    const int n = static_cast<int>(search_regions.size());

    DistractorField out;
    out.scale = scale;
    out.field = Tensor::full({n, win_h, win_w}, 1.0f);
    out.mapped_regions.reserve(search_regions.size());

    for (int p = 0; p < n; ++p) {
        const Box& region = search_regions[static_cast<std::size_t>(p)];
        const Box mapped{region.cx * scale, region.cy * scale, region.w * scale, region.h * scale};
        out.mapped_regions.push_back(mapped);

        const float aw = mapped.w, ah = mapped.h;
        const float denom_x = std::max(aw - 1.0f, 1e-6f);
        const float denom_y = std::max(ah - 1.0f, 1e-6f);
        const int x0 = std::max(0, static_cast<int>(std::ceil(mapped.left())));
        const int x1 = std::min(win_w - 1, static_cast<int>(std::floor(mapped.right())));
        const int y0 = std::max(0, static_cast<int>(std::ceil(mapped.top())));
        const int y1 = std::min(win_h - 1, static_cast<int>(std::floor(mapped.bottom())));
        float* plane = out.field.plane(p);
        for (int j = y0; j <= y1; ++j) {
            const double sy =
                std::sin(M_PI * static_cast<double>(mapped.cy - 0.5f * ah - static_cast<float>(j)) / denom_y);
            for (int i = x0; i <= x1; ++i) {
                const double sx =
                    std::sin(M_PI * static_cast<double>(mapped.cx - 0.5f * aw - static_cast<float>(i)) / denom_x);
                const double bump = sx * sy;
                plane[static_cast<std::size_t>(j) * win_w + i] = static_cast<float>(1.0 - bump * bump);
            }
        }
    }
    return out;
}

// Elementwise minimum over the other targets' window channels cropped to this
// target's search area; all ones when there is no other target.
inline Tensor distractor_mask(const DistractorField& field, int target_index, int grid = 25) {
    const int n = field.field.extent(0);
    if (target_index < 0 || target_index >= n) throw ArgumentError("distractor_mask: target index out of range");

    Tensor mask = Tensor::full({1, grid, grid}, 1.0f);
    const Box& mapped = field.mapped_regions[static_cast<std::size_t>(target_index)];
    const int h = field.field.extent(1), w = field.field.extent(2);

    for (int d = 0; d < n; ++d) {
        if (d == target_index) continue;
        const Tensor channel({1, h, w},
                             std::vector<float>(field.field.plane(d), field.field.plane(d) + field.field.plane_size()));
        const Tensor crop = roi_align(channel, mapped, grid);
        float* mp = mask.data();
        const float* cp = crop.data();
        for (std::size_t i = 0; i < mask.size(); ++i) mp[i] = std::min(mp[i], cp[i]);
    }
    return mask;
}

// ---------------------------------------------------------------------------
// penalized score and final selection

// Pipeline order: erosion on the raw objectness topology, multiplicative
// shape and distractor masks, then the convex spatial-window blend.
inline Tensor penalize(const Tensor& cls, const Tensor& shape_pen, const Tensor& distractor, const Tensor& hanning,
                       const PenaltyConfig& cfg) {
    const int k = cls.extent(0), grid = cls.extent(1);
    if (cls.extent(2) != grid) throw DimensionError("penalize: cls must be square");
    if (cfg.shape_enabled && !shape_pen.same_shape(cls)) throw DimensionError("penalize: shape penalty extents");
    if (cfg.distractor_enabled && (distractor.extent(1) != grid || distractor.extent(2) != grid))
        throw DimensionError("penalize: distractor mask extents");
    if (cfg.spatial_enabled && (hanning.extent(1) != grid || hanning.extent(2) != grid))
        throw DimensionError("penalize: window extents");

    Tensor pscore = cfg.erosion_enabled ? erode3x3(cls) : cls;
    if (cfg.shape_enabled) {
        float* p = pscore.data();
        const float* s = shape_pen.data();
        for (std::size_t i = 0; i < pscore.size(); ++i) p[i] *= s[i];
    }
    if (cfg.distractor_enabled) {
        const float* m = distractor.plane(0);
        for (int a = 0; a < k; ++a) {
            float* p = pscore.plane(a);
            for (std::size_t i = 0; i < pscore.plane_size(); ++i) p[i] *= m[i];
        }
    }
    if (cfg.spatial_enabled) {
        const float lambda = cfg.window_influence;
        const float* hp = hanning.plane(0);
        for (int a = 0; a < k; ++a) {
            float* p = pscore.plane(a);
            for (std::size_t i = 0; i < pscore.plane_size(); ++i)
                p[i] = (1.0f - lambda) * p[i] + lambda * hp[i];
        }
    }
    return pscore;
}

struct Selection {
    Box box;
    float confidence = 0.0f;  // raw cls at the argmax, comparable across frames
    std::size_t argmax = 0;
};

// Argmax of the penalized score, then confidence-weighted corner averaging of
// every proposal overlapping it at the voting threshold.
inline Selection select_box(const Tensor& pscore, const std::vector<Box>& proposals, const Tensor& raw_cls,
                            const PenaltyConfig& cfg) {
    if (proposals.empty()) throw StateError("select_box: no proposals");
    if (pscore.size() != proposals.size() || raw_cls.size() != proposals.size())
        throw DimensionError("select_box: score/proposal count mismatch");

    std::size_t best = 0;
    const float* ps = pscore.data();
    for (std::size_t i = 1; i < pscore.size(); ++i)
        if (ps[i] > ps[best]) best = i;

    const Box& peak = proposals[best];
    double wsum = 0.0, left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;
    const float* raw = raw_cls.data();
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        if (iou(proposals[i], peak) < cfg.vote_iou) continue;
        const double wv = static_cast<double>(raw[i]);
        wsum += wv;
        left += wv * proposals[i].left();
        top += wv * proposals[i].top();
        right += wv * proposals[i].right();
        bottom += wv * proposals[i].bottom();
    }

    Selection out;
    out.argmax = best;
    out.confidence = raw[best];
    if (wsum > 1e-12) {
        const float l = static_cast<float>(left / wsum), t = static_cast<float>(top / wsum);
        const float r = static_cast<float>(right / wsum), b = static_cast<float>(bottom / wsum);
        out.box = Box{0.5f * (l + r), 0.5f * (t + b), r - l, b - t};
    } else {
        out.box = peak;
    }
    return out;
}

}  // namespace mvot
