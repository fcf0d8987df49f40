#pragma once

// Frame-loop orchestration: target registry, one shared backbone/FPN pass per
// frame, per-target proposal and head passes, confidence fallback and state
// updates. Also aggregates every learnable parameter behind one named-tensor
// mapping for persistence.

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/geometry.hpp"
#include "mvot/head.hpp"
#include "mvot/nn.hpp"
#include "mvot/proposal.hpp"
#include "mvot/tensor.hpp"
#include "mvot/weights_io.hpp"

namespace mvot {

// ---------------------------------------------------------------------------
// aggregated weights

struct TrackerWeights {
    BackboneWeights backbone;
    FpnWeights fpn;
    Kernel2D bridge;  // shared 1x1 level-bridging convolution
    AttentionWeights attention;
    RpnWeights rpn;
    MlpWeights mlp;
};

inline TrackerWeights seeded_tracker_weights(std::uint64_t seed, const BackboneConfig& cfg = {},
                                             int fpn_channels = 64, int anchors = 5, int mlp_inputs = 20,
                                             int mlp_hidden = 64) {
    Rng rng(seed);
    TrackerWeights w;
    w.backbone = seeded_backbone(cfg, rng);
    w.fpn = seeded_fpn(cfg, fpn_channels, rng);
    w.bridge = seeded_conv(rng, fpn_channels, fpn_channels, 1, 1, 0);
    w.attention = seeded_attention(fpn_channels, rng);
    w.rpn = seeded_rpn(fpn_channels, anchors, rng);
    w.mlp = seeded_mlp(mlp_inputs, mlp_hidden, mlp_hidden, rng);
    return w;
}

namespace detail {

inline void pack_conv(NamedTensors& out, const std::string& prefix, const Kernel2D& k) {
    out.emplace(prefix + ".w", k.weights);
    out.emplace(prefix + ".b", Tensor({static_cast<int>(k.bias.size())}, k.bias));
}

inline const Tensor& named(const NamedTensors& in, const std::string& key) {
    auto it = in.find(key);
    if (it == in.end()) throw FormatError("missing weight entry '" + key + "'");
    return it->second;
}

inline Kernel2D unpack_conv(const NamedTensors& in, const std::string& prefix, int stride, int padding) {
    Kernel2D k;
    k.weights = named(in, prefix + ".w");
    k.bias = named(in, prefix + ".b").values();
    k.stride = stride;
    k.padding = padding;
    k.validate();
    return k;
}

}  // namespace detail

inline NamedTensors tracker_weights_to_named(const TrackerWeights& w) {
    NamedTensors out;
    for (int s = 0; s < 4; ++s) {
        const std::string sp = "backbone.stage" + std::to_string(s + 1);
        detail::pack_conv(out, sp + ".entry", w.backbone.stages[static_cast<std::size_t>(s)].entry);
        const auto& blocks = w.backbone.stages[static_cast<std::size_t>(s)].blocks;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            detail::pack_conv(out, sp + ".block" + std::to_string(b + 1) + ".conv1", blocks[b].conv1);
            detail::pack_conv(out, sp + ".block" + std::to_string(b + 1) + ".conv2", blocks[b].conv2);
        }
    }
    for (int s = 0; s < 4; ++s) {
        detail::pack_conv(out, "fpn.lateral" + std::to_string(s + 1), w.fpn.lateral[static_cast<std::size_t>(s)]);
        detail::pack_conv(out, "fpn.output" + std::to_string(s + 1), w.fpn.output[static_cast<std::size_t>(s)]);
    }
    detail::pack_conv(out, "bridge", w.bridge);
    detail::pack_conv(out, "attn.query", w.attention.query);
    detail::pack_conv(out, "attn.key", w.attention.key);
    detail::pack_conv(out, "attn.value_self", w.attention.value_self);
    detail::pack_conv(out, "attn.value_cross", w.attention.value_cross);
    out.emplace("attn.alpha_self", Tensor({1}, {w.attention.alpha_self}));
    out.emplace("attn.alpha_cross", Tensor({1}, {w.attention.alpha_cross}));
    detail::pack_conv(out, "rpn.cls.exemplar", w.rpn.cls.exemplar);
    detail::pack_conv(out, "rpn.cls.search", w.rpn.cls.search);
    detail::pack_conv(out, "rpn.cls.head", w.rpn.cls.head);
    detail::pack_conv(out, "rpn.reg.exemplar", w.rpn.reg.exemplar);
    detail::pack_conv(out, "rpn.reg.search", w.rpn.reg.search);
    detail::pack_conv(out, "rpn.reg.head", w.rpn.reg.head);
    out.emplace("mlp.fc1.w", w.mlp.w1);
    out.emplace("mlp.fc1.b", Tensor({static_cast<int>(w.mlp.b1.size())}, w.mlp.b1));
    out.emplace("mlp.fc2.w", w.mlp.w2);
    out.emplace("mlp.fc2.b", Tensor({static_cast<int>(w.mlp.b2.size())}, w.mlp.b2));
    out.emplace("mlp.out.w", w.mlp.w3);
    out.emplace("mlp.out.b", Tensor({static_cast<int>(w.mlp.b3.size())}, w.mlp.b3));
    return out;
}

inline TrackerWeights tracker_weights_from_named(const NamedTensors& in) {
    TrackerWeights w;
    for (int s = 0; s < 4; ++s) {
        const std::string sp = "backbone.stage" + std::to_string(s + 1);
        BackboneStage stage;
        stage.entry = detail::unpack_conv(in, sp + ".entry", 2, 1);
        for (int b = 1;; ++b) {
            const std::string bp = sp + ".block" + std::to_string(b);
            if (in.find(bp + ".conv1.w") == in.end()) break;
            ResidualBlock block;
            block.conv1 = detail::unpack_conv(in, bp + ".conv1", 1, 1);
            block.conv2 = detail::unpack_conv(in, bp + ".conv2", 1, 1);
            stage.blocks.push_back(std::move(block));
        }
        if (stage.blocks.empty()) throw FormatError("backbone stage " + std::to_string(s + 1) + " has no blocks");
        w.backbone.config.stage_channels[static_cast<std::size_t>(s)] = stage.entry.out_channels();
        if (s == 0) w.backbone.config.input_channels = stage.entry.in_channels();
        w.backbone.config.blocks_per_stage = static_cast<int>(stage.blocks.size());
        w.backbone.stages[static_cast<std::size_t>(s)] = std::move(stage);
    }
    for (int s = 0; s < 4; ++s) {
        w.fpn.lateral[static_cast<std::size_t>(s)] = detail::unpack_conv(in, "fpn.lateral" + std::to_string(s + 1), 1, 0);
        w.fpn.output[static_cast<std::size_t>(s)] = detail::unpack_conv(in, "fpn.output" + std::to_string(s + 1), 1, 1);
    }
    w.bridge = detail::unpack_conv(in, "bridge", 1, 0);
    w.attention.query = detail::unpack_conv(in, "attn.query", 1, 0);
    w.attention.key = detail::unpack_conv(in, "attn.key", 1, 0);
    w.attention.value_self = detail::unpack_conv(in, "attn.value_self", 1, 0);
    w.attention.value_cross = detail::unpack_conv(in, "attn.value_cross", 1, 0);
    w.attention.alpha_self = detail::named(in, "attn.alpha_self")[0];
    w.attention.alpha_cross = detail::named(in, "attn.alpha_cross")[0];
    w.rpn.cls.exemplar = detail::unpack_conv(in, "rpn.cls.exemplar", 1, 0);
    w.rpn.cls.search = detail::unpack_conv(in, "rpn.cls.search", 1, 0);
    w.rpn.cls.head = detail::unpack_conv(in, "rpn.cls.head", 1, 0);
    w.rpn.reg.exemplar = detail::unpack_conv(in, "rpn.reg.exemplar", 1, 0);
    w.rpn.reg.search = detail::unpack_conv(in, "rpn.reg.search", 1, 0);
    w.rpn.reg.head = detail::unpack_conv(in, "rpn.reg.head", 1, 0);
    w.mlp.w1 = detail::named(in, "mlp.fc1.w");
    w.mlp.b1 = detail::named(in, "mlp.fc1.b").values();
    w.mlp.w2 = detail::named(in, "mlp.fc2.w");
    w.mlp.b2 = detail::named(in, "mlp.fc2.b").values();
    w.mlp.w3 = detail::named(in, "mlp.out.w");
    w.mlp.b3 = detail::named(in, "mlp.out.b").values();
    return w;
}

// ---------------------------------------------------------------------------
// tracker state

struct TrackerConfig {
    RoiConfig roi;
    PenaltyConfig penalty;
    AnchorSet anchors;
    bool correlation_only = false;
    std::size_t history_capacity = 7;  // 6 positions for the deltas + current
};

struct TargetState {
    int id = 0;
    Box box;
    BoxHistory history{7};
    ExemplarCache cache;
    float confidence = 1.0f;
};

struct TrackOutput {
    int id = 0;
    Box box;
    float confidence = 0.0f;
};

struct TrackerCounters {
    long backbone_passes = 0;
    long fpn_passes = 0;
    long xcorr_batches = 0;
    int last_batch_targets = 0;
    double last_shared_ms = 0.0;  // backbone + FPN of the last frame
    double last_total_ms = 0.0;
};

struct TrackerState {
    TrackerConfig config;
    TrackerWeights weights;
    std::vector<TargetState> targets;
    long frame_index = 0;
    int frame_w = 0;
    int frame_h = 0;
    Tensor hanning;  // spatial window at the score-map grid
    TrackerCounters counters;
};

inline TrackerState make_tracker(TrackerConfig config, TrackerWeights weights) {
    TrackerState st;
    st.hanning = hanning2d(config.anchors.grid);
    st.config = std::move(config);
    st.weights = std::move(weights);
    return st;
}

namespace detail {

inline FeaturePyramid shared_pass(const Tensor& frame, TrackerState& st) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::array<Tensor, 4> stages = backbone_forward(frame, st.weights.backbone);
    ++st.counters.backbone_passes;
    FeaturePyramid pyr = fpn_forward(stages, st.weights.fpn);
    ++st.counters.fpn_passes;
    st.counters.last_shared_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return pyr;
}

inline TargetState* find_target(TrackerState& st, int id) {
    for (TargetState& t : st.targets)
        if (t.id == id) return &t;
    return nullptr;
}

inline void register_target(TrackerState& st, const FeaturePyramid& pyr, int id, const Box& box) {
    if (find_target(st, id)) throw RegistryError("duplicate target id " + std::to_string(id));
    if (!box.valid()) throw GeometryError("degenerate initialization box for id " + std::to_string(id));
    TargetState target;
    target.id = id;
    target.box = box;
    target.history = BoxHistory(st.config.history_capacity);
    target.history.push(box);
    const Tensor exemplar =
        extract_exemplar(pyr, box, st.config.roi, st.weights.bridge, st.frame_w, st.frame_h);
    target.cache = attention_init(exemplar, st.weights.attention);
    st.targets.push_back(std::move(target));
}

// Objectness for the correlation-only mode: zero-mean normalized correlation
// between the exemplar and each search window, per channel, clamped to [0,1].
// Removing the per-channel means keeps constant background responses from
// flattening the correlation surface; blank windows score zero and exact
// matches score one. `corr` holds the raw per-channel depthwise correlation
// of this target.
inline Tensor correlation_objectness(const Tensor& corr, int target, const Tensor& exemplar, const Tensor& search) {
    const int c = exemplar.extent(0), eh = exemplar.extent(1), ew = exemplar.extent(2);
    const int sw = search.extent(2);
    const int grid = corr.extent(2);
    const float window = static_cast<float>(eh * ew);

    std::vector<float> esum(static_cast<std::size_t>(c), 0.0f);
    float evar = 0.0f;  // total centered energy of the exemplar
    for (int ch = 0; ch < c; ++ch) {
        const float* ep = exemplar.plane(ch);
        float sum = 0.0f, sum2 = 0.0f;
        for (std::size_t i = 0; i < exemplar.plane_size(); ++i) {
            sum += ep[i];
            sum2 += ep[i] * ep[i];
        }
        esum[static_cast<std::size_t>(ch)] = sum;
        evar += sum2 - sum * sum / window;
    }
    const float enorm = std::sqrt(std::max(evar, 0.0f));

    Tensor out({1, grid, grid});
    for (int oy = 0; oy < grid; ++oy) {
        for (int ox = 0; ox < grid; ++ox) {
            float num = 0.0f, svar = 0.0f;
            for (int ch = 0; ch < c; ++ch) {
                const float* sp = search.plane(ch);
                float ssum = 0.0f, ssum2 = 0.0f;
                for (int ky = 0; ky < eh; ++ky) {
                    const float* row = sp + static_cast<std::size_t>(oy + ky) * sw + ox;
                    for (int kx = 0; kx < ew; ++kx) {
                        ssum += row[kx];
                        ssum2 += row[kx] * row[kx];
                    }
                }
                num += corr.at(target, ch, oy, ox) - esum[static_cast<std::size_t>(ch)] * ssum / window;
                svar += ssum2 - ssum * ssum / window;
            }
            const float denom = enorm * std::sqrt(std::max(svar, 0.0f));
            const float v = denom > 1e-6f ? num / denom : 0.0f;
            out.at(0, oy, ox) = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return out;
}

// Cell-centered proposals that carry the previous box extents; the
// correlation-only decode.
inline std::vector<Box> carryover_proposals(const Box& prev, const Box& region, const AnchorSet& anchors) {
    const float scale = region.w / static_cast<float>(anchors.canonical);
    const float left = region.left(), top = region.top();
    std::vector<Box> out;
    out.reserve(static_cast<std::size_t>(anchors.grid) * anchors.grid);
    for (int row = 0; row < anchors.grid; ++row)
        for (int col = 0; col < anchors.grid; ++col)
            out.push_back(Box{left + anchors.cell_x(col) * scale, top + anchors.cell_y(row) * scale, prev.w, prev.h});
    return out;
}

}  // namespace detail

// Registers targets on a frame, sharing one backbone/FPN pass for all boxes.
inline void init_targets(const Tensor& frame, const std::vector<std::pair<int, Box>>& boxes, TrackerState& st) {
    if (frame.rank() != 3) throw DimensionError("init_targets: frame must be 3xHxW");
    if (st.frame_w == 0) {
        st.frame_h = frame.extent(1);
        st.frame_w = frame.extent(2);
    } else if (frame.extent(1) != st.frame_h || frame.extent(2) != st.frame_w) {
        throw DimensionError("init_targets: frame extents differ from initialization");
    }
    for (const auto& [id, box] : boxes) {
        if (detail::find_target(st, id)) throw RegistryError("duplicate target id " + std::to_string(id));
        if (!box.valid()) throw GeometryError("degenerate initialization box for id " + std::to_string(id));
    }
    const FeaturePyramid pyr = detail::shared_pass(frame, st);
    for (const auto& [id, box] : boxes) detail::register_target(st, pyr, id, box);
}

inline void add_target(const Tensor& frame, int id, const Box& box, TrackerState& st) {
    init_targets(frame, {{id, box}}, st);
}

inline void remove_target(int id, TrackerState& st) {
    for (auto it = st.targets.begin(); it != st.targets.end(); ++it) {
        if (it->id == id) {
            st.targets.erase(it);
            return;
        }
    }
    throw RegistryError("unknown target id " + std::to_string(id));
}

// One tracking step over all registered targets.
inline std::vector<TrackOutput> track_frame(const Tensor& frame, TrackerState& st) {
    if (st.targets.empty()) throw StateError("track_frame: no registered targets");
    if (frame.rank() != 3 || frame.extent(1) != st.frame_h || frame.extent(2) != st.frame_w)
        throw DimensionError("track_frame: frame extents differ from initialization");

    const auto t0 = std::chrono::steady_clock::now();
    const FeaturePyramid pyr = detail::shared_pass(frame, st);

    const int n = static_cast<int>(st.targets.size());
    const int c = pyr.channels();
    const int keep = st.config.roi.exemplar_keep, grid = st.config.roi.search_grid;

    std::vector<Box> predicted(static_cast<std::size_t>(n));
    std::vector<Box> regions(static_cast<std::size_t>(n));
    Tensor batch_e({n, c, keep, keep}), batch_s({n, c, grid, grid});

    for (int p = 0; p < n; ++p) {
        TargetState& target = st.targets[static_cast<std::size_t>(p)];
        predicted[static_cast<std::size_t>(p)] = target.history.size() >= 2
                                                     ? predict_inertia(target.history, st.weights.mlp)
                                                     : target.history.newest();
        auto [search, region] = extract_search(pyr, predicted[static_cast<std::size_t>(p)], st.config.roi,
                                               st.weights.bridge, st.frame_w, st.frame_h);
        regions[static_cast<std::size_t>(p)] = region;
        auto [enhanced_e, enhanced_s] = attention_apply(target.cache, search, st.weights.attention);
        detail::stack_into(batch_e, p, enhanced_e);
        detail::stack_into(batch_s, p, enhanced_s);
    }

    DistractorField field;
    if (st.config.penalty.distractor_enabled)
        field = build_distractor_field(regions, st.frame_w, st.frame_h, st.config.anchors.grid,
                                       st.config.anchors.canonical);

    // batched comparison
    std::vector<ScoreMaps> maps;
    Tensor corr;
    if (st.config.correlation_only) {
        corr = pairwise_depthwise_xcorr(batch_e, batch_s);
        ++st.counters.xcorr_batches;
    } else {
        maps = pdrpn_forward(batch_e, batch_s, st.weights.rpn);
        ++st.counters.xcorr_batches;
    }
    st.counters.last_batch_targets = n;

    std::vector<TrackOutput> outputs;
    outputs.reserve(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) {
        TargetState& target = st.targets[static_cast<std::size_t>(p)];
        const Box& region = regions[static_cast<std::size_t>(p)];

        Tensor cls;
        std::vector<Box> proposals;
        if (st.config.correlation_only) {
            cls = detail::correlation_objectness(corr, p, detail::slice_target(batch_e, p),
                                                 detail::slice_target(batch_s, p));
            proposals = detail::carryover_proposals(target.box, region, st.config.anchors);
        } else {
            cls = std::move(maps[static_cast<std::size_t>(p)].cls);
            proposals = decode_proposals(maps[static_cast<std::size_t>(p)].reg, st.config.anchors, region);
        }

        Tensor shape_pen;
        if (st.config.penalty.shape_enabled)
            shape_pen = shape_penalty(proposals, target.box, st.config.penalty.beta, cls.extent(0), cls.extent(1));
        Tensor mask;
        if (st.config.penalty.distractor_enabled) mask = distractor_mask(field, p, st.config.anchors.grid);

        const Tensor pscore = penalize(cls, shape_pen, mask, st.hanning, st.config.penalty);
        const Selection sel = select_box(pscore, proposals, cls, st.config.penalty);

        const bool low_confidence = sel.confidence < st.config.penalty.confidence_floor;
        const Box out_box = low_confidence ? predicted[static_cast<std::size_t>(p)] : sel.box;

        target.box = out_box;
        target.history.push(out_box);
        target.confidence = sel.confidence;
        outputs.push_back(TrackOutput{target.id, out_box, sel.confidence});
    }

    ++st.frame_index;
    st.counters.last_total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return outputs;
}

}  // namespace mvot
