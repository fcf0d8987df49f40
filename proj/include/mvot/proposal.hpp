#pragma once

// Per-target feature production: square context area, pyramid level routing,
// RoI extraction of exemplar/search tensors, trajectory-based search
// placement and the channel attention with its exemplar-side cache.

#include <algorithm>
#include <cmath>
#include <deque>
#include <utility>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/geometry.hpp"
#include "mvot/nn.hpp"
#include "mvot/tensor.hpp"

namespace mvot {

struct RoiConfig {
    float context = 0.5f;       // zeta
    int canonical_search = 255;
    int canonical_stride = 8;
    int level_origin = 3;       // pyramid level at 1/8 resolution
    int level_min = 1;
    int level_max = 4;
    int exemplar_grid = 15;     // RoI bins for the exemplar area
    int exemplar_keep = 7;      // central crop fed to the head
    int search_grid = 31;
};

// Side of the square context area around a box: A = sqrt((w+z(w+h))(h+z(w+h))).
inline float exemplar_side(const Box& box, float context) {
    const float pad = context * (box.w + box.h);
    return std::sqrt((box.w + pad) * (box.h + pad));
}

inline float search_side(float exemplar_side_px, const RoiConfig& cfg = {}) {
    return static_cast<float>(cfg.search_grid) * exemplar_side_px / static_cast<float>(cfg.exemplar_grid);
}

// Pyramid level for an area of the given extents, clamped to the valid range.
inline int select_level(float area_w, float area_h, const RoiConfig& cfg = {}) {
    const float canonical =
        static_cast<float>(cfg.canonical_stride * (cfg.canonical_search / cfg.canonical_stride));
    const double ratio = std::sqrt(static_cast<double>(area_w) * static_cast<double>(area_h)) / canonical;
    const int k = static_cast<int>(std::floor(static_cast<double>(cfg.level_origin) + std::log2(ratio)));
    return std::clamp(k, cfg.level_min, cfg.level_max);
}

// Central crop of a CxGxG tensor down to keep x keep.
inline Tensor central_crop(const Tensor& t, int keep) {
    const int c = t.extent(0), h = t.extent(1), w = t.extent(2);
    if (keep > h || keep > w) throw DimensionError("central_crop: keep larger than input");
    const int oy = (h - keep) / 2, ox = (w - keep) / 2;
    Tensor out({c, keep, keep});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < keep; ++y)
            for (int x = 0; x < keep; ++x) out.at(ch, y, x) = t.at(ch, oy + y, ox + x);
    return out;
}

namespace detail {

// RoI Align of a square image region from the routed pyramid level, followed
// by the shared level-bridging 1x1 convolution.
inline Tensor extract_region(const FeaturePyramid& pyr, float cx, float cy, float side_px, int level, int grid,
                             const Kernel2D& bridge) {
    const float scale = 1.0f / static_cast<float>(1 << level);
    const Box feat_region{cx * scale, cy * scale, side_px * scale, side_px * scale};
    Tensor roi = roi_align(pyr.level(level), feat_region, grid);
    return conv2d(roi, bridge);
}

}  // namespace detail

// Exemplar features: square context area routed to its pyramid level,
// aligned to the exemplar grid, bridged, central keep x keep kept.
inline Tensor extract_exemplar(const FeaturePyramid& pyr, const Box& box, const RoiConfig& cfg,
                               const Kernel2D& bridge, int frame_w, int frame_h) {
    if (!box.valid()) throw GeometryError("extract_exemplar: degenerate box");
    const Box clamped = clamp_to_frame(box, frame_w, frame_h);
    const float side = exemplar_side(clamped, cfg.context);
    const int level = select_level(side, side, cfg);
    Tensor grid = detail::extract_region(pyr, clamped.cx, clamped.cy, side, level, cfg.exemplar_grid, bridge);
    return central_crop(grid, cfg.exemplar_keep);
}

// Search-area features around the predicted center; returns the tensor and
// the image region it covers (needed to map proposals back to pixels).
inline std::pair<Tensor, Box> extract_search(const FeaturePyramid& pyr, const Box& predicted, const RoiConfig& cfg,
                                             const Kernel2D& bridge, int frame_w, int frame_h) {
    if (!predicted.valid()) throw GeometryError("extract_search: degenerate box");
    const Box clamped = clamp_to_frame(predicted, frame_w, frame_h);
    const float side = exemplar_side(clamped, cfg.context);
    const float search = search_side(side, cfg);
    const int level = select_level(side, side, cfg);
    Tensor feat = detail::extract_region(pyr, clamped.cx, clamped.cy, search, level, cfg.search_grid, bridge);
    return {std::move(feat), Box{clamped.cx, clamped.cy, search, search}};
}

// ---------------------------------------------------------------------------
// box history and the inertia prediction

// Recent boxes of one target, newest last, bounded capacity.
class BoxHistory {
public:
    explicit BoxHistory(std::size_t capacity = 7) : capacity_(capacity) {}

    void push(const Box& b) {
        if (entries_.size() == capacity_) entries_.pop_front();
        entries_.push_back(b);
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const Box& newest() const { return entries_.back(); }
    // age 0 = newest
    const Box& nth_newest(std::size_t age) const { return entries_[entries_.size() - 1 - age]; }
    std::size_t capacity() const { return capacity_; }
    void clear() { entries_.clear(); }

private:
    std::size_t capacity_;
    std::deque<Box> entries_;
};

// Delta vectors for the MLP input, newest first; positions older than the
// history are encoded as zero deltas (stationary assumption).
inline std::vector<float> inertia_input(const BoxHistory& history, int delta_count = 5) {
    std::vector<float> input(static_cast<std::size_t>(delta_count) * 4, 0.0f);
    for (int i = 0; i < delta_count; ++i) {
        if (history.size() < static_cast<std::size_t>(i) + 2) break;
        const Box& cur = history.nth_newest(static_cast<std::size_t>(i));
        const Box& prev = history.nth_newest(static_cast<std::size_t>(i) + 1);
        const BoxDelta d = encode_delta(prev, cur);
        input[static_cast<std::size_t>(i) * 4 + 0] = d.dx;
        input[static_cast<std::size_t>(i) * 4 + 1] = d.dy;
        input[static_cast<std::size_t>(i) * 4 + 2] = d.dw;
        input[static_cast<std::size_t>(i) * 4 + 3] = d.dh;
    }
    return input;
}

// Coarse next-position estimate from coordinates alone.
inline Box predict_inertia(const BoxHistory& history, const MlpWeights& mlp) {
    if (history.empty()) throw StateError("predict_inertia: empty history");
    const std::vector<float> input = inertia_input(history, mlp.input_dim() / 4);
    const std::array<float, 4> out = mlp_forward(input, mlp);
    return decode_delta(history.newest(), BoxDelta{out[0], out[1], out[2], out[3]});
}

// ---------------------------------------------------------------------------
// channel attention

struct AttentionWeights {
    Kernel2D query;        // 1x1
    Kernel2D key;          // 1x1
    Kernel2D value_self;   // 1x1
    Kernel2D value_cross;  // 1x1
    float alpha_self = 0.0f;
    float alpha_cross = 0.0f;
};

inline AttentionWeights seeded_attention(int channels, Rng& rng) {
    AttentionWeights w;
    w.query = seeded_conv(rng, channels, channels, 1, 1, 0);
    w.key = seeded_conv(rng, channels, channels, 1, 1, 0);
    w.value_self = seeded_conv(rng, channels, channels, 1, 1, 0);
    w.value_cross = seeded_conv(rng, channels, channels, 1, 1, 0);
    return w;
}

// Exemplar-side tensors cached at target initialization; read-only afterwards.
struct ExemplarCache {
    Tensor raw;          // X_E, C x 7 x 7
    Tensor self_feat;    // attention-mixed self features of the exemplar
    Tensor cross_value;  // exemplar cross-value planes
    Tensor attn;         // C x C row-stochastic channel attention matrix
};

// Row-softmax of the cosine-similarity matrix between the channel planes of
// query and key (each channel flattened over its spatial extent).
inline Tensor channel_attention_matrix(const Tensor& query, const Tensor& key) {
    if (!query.same_shape(key)) throw DimensionError("attention: query/key shape mismatch");
    const int c = query.extent(0);
    const std::size_t plane = query.plane_size();
    Tensor attn({c, c});

    std::vector<float> qnorm(static_cast<std::size_t>(c)), knorm(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        const float* qp = query.plane(i);
        const float* kp = key.plane(i);
        float qs = 0.0f, ks = 0.0f;
        for (std::size_t e = 0; e < plane; ++e) {
            qs += qp[e] * qp[e];
            ks += kp[e] * kp[e];
        }
        qnorm[static_cast<std::size_t>(i)] = std::max(std::sqrt(qs), 1e-12f);
        knorm[static_cast<std::size_t>(i)] = std::max(std::sqrt(ks), 1e-12f);
    }
    for (int i = 0; i < c; ++i) {
        const float* qp = query.plane(i);
        for (int j = 0; j < c; ++j) {
            const float* kp = key.plane(j);
            float dot = 0.0f;
            for (std::size_t e = 0; e < plane; ++e) dot += qp[e] * kp[e];
            attn.at(i, j) = dot / (qnorm[static_cast<std::size_t>(i)] * knorm[static_cast<std::size_t>(j)]);
        }
    }
    // row softmax
    for (int i = 0; i < c; ++i) {
        float m = attn.at(i, 0);
        for (int j = 1; j < c; ++j) m = std::max(m, attn.at(i, j));
        float sum = 0.0f;
        for (int j = 0; j < c; ++j) {
            const float e = std::exp(attn.at(i, j) - m);
            attn.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < c; ++j) attn.at(i, j) /= sum;
    }
    return attn;
}

// out channel i = sum_j attn[i][j] * value channel j
inline Tensor apply_channel_mix(const Tensor& attn, const Tensor& value) {
    const int c = value.extent(0);
    if (attn.rank() != 2 || attn.extent(0) != c || attn.extent(1) != c)
        throw DimensionError("attention: matrix/value channel mismatch");
    const std::size_t plane = value.plane_size();
    Tensor out(value.shape());
    for (int i = 0; i < c; ++i) {
        float* op = out.plane(i);
        for (int j = 0; j < c; ++j) {
            const float a = attn.at(i, j);
            if (a == 0.0f) continue;
            const float* vp = value.plane(j);
            for (std::size_t e = 0; e < plane; ++e) op[e] += a * vp[e];
        }
    }
    return out;
}

// Builds the exemplar cache once per target.
inline ExemplarCache attention_init(const Tensor& exemplar, const AttentionWeights& w) {
    ExemplarCache cache;
    cache.raw = exemplar;
    const Tensor q = conv2d(exemplar, w.query);
    const Tensor k = conv2d(exemplar, w.key);
    const Tensor vs = conv2d(exemplar, w.value_self);
    cache.attn = channel_attention_matrix(q, k);
    cache.self_feat = apply_channel_mix(cache.attn, vs);
    cache.cross_value = conv2d(exemplar, w.value_cross);
    return cache;
}

// Self- and cross-attention for one exemplar/search pair, cached exemplar
// side, combined with the originals in a single weighted-sum step.
inline std::pair<Tensor, Tensor> attention_apply(const ExemplarCache& cache, const Tensor& search,
                                                 const AttentionWeights& w) {
    if (search.extent(0) != cache.raw.extent(0)) throw DimensionError("attention: channel mismatch with cache");

    const Tensor q = conv2d(search, w.query);
    const Tensor k = conv2d(search, w.key);
    const Tensor vs = conv2d(search, w.value_self);
    const Tensor vc = conv2d(search, w.value_cross);

    const Tensor attn_s = channel_attention_matrix(q, k);
    const Tensor self_s = apply_channel_mix(attn_s, vs);
    const Tensor cross_s = apply_channel_mix(cache.attn, vc);          // exemplar mask on search values
    const Tensor cross_e = apply_channel_mix(attn_s, cache.cross_value);  // search mask on cached values

    Tensor out_e = cache.raw;
    Tensor out_s = search;
    float* pe = out_e.data();
    const float* pse = cache.self_feat.data();
    const float* pce = cross_e.data();
    for (std::size_t i = 0; i < out_e.size(); ++i) pe[i] += w.alpha_self * pse[i] + w.alpha_cross * pce[i];
    float* ps = out_s.data();
    const float* pss = self_s.data();
    const float* pcs = cross_s.data();
    for (std::size_t i = 0; i < out_s.size(); ++i) ps[i] += w.alpha_self * pss[i] + w.alpha_cross * pcs[i];
    return {std::move(out_e), std::move(out_s)};
}

}  // namespace mvot
