#pragma once

// Network building blocks: a padded 4-stage residual backbone, the feature
// pyramid fusing its stages, and the small trajectory MLP together with its
// analytic-gradient training step.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/rng.hpp"
#include "mvot/tensor.hpp"
#include "mvot/weights_io.hpp"

namespace mvot {

// ---------------------------------------------------------------------------
// seeded initialization

inline Tensor uniform_tensor(Rng& rng, std::vector<int> shape, float bound) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero bias
inline Kernel2D seeded_conv(Rng& rng, int out_c, int in_c, int k, int stride, int padding) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in_c * k * k));
    Kernel2D kernel;
    kernel.weights = uniform_tensor(rng, {out_c, in_c, k, k}, bound);
    kernel.bias.assign(static_cast<std::size_t>(out_c), 0.0f);
    kernel.stride = stride;
    kernel.padding = padding;
    return kernel;
}

// ---------------------------------------------------------------------------
// backbone

struct BackboneConfig {
    std::array<int, 4> stage_channels{16, 32, 64, 64};
    int blocks_per_stage = 2;
    int input_channels = 3;
};

struct ResidualBlock {
    Kernel2D conv1;
    Kernel2D conv2;
};

struct BackboneStage {
    Kernel2D entry;  // 3x3, stride 2
    std::vector<ResidualBlock> blocks;
};

struct BackboneWeights {
    BackboneConfig config;
    std::array<BackboneStage, 4> stages;
};

inline BackboneWeights seeded_backbone(const BackboneConfig& cfg, Rng& rng) {
    BackboneWeights w;
    w.config = cfg;
    int in_c = cfg.input_channels;
    for (int s = 0; s < 4; ++s) {
        const int out_c = cfg.stage_channels[static_cast<std::size_t>(s)];
        BackboneStage stage;
        stage.entry = seeded_conv(rng, out_c, in_c, 3, 2, 1);
        for (int b = 0; b < cfg.blocks_per_stage; ++b) {
            ResidualBlock block;
            block.conv1 = seeded_conv(rng, out_c, out_c, 3, 1, 1);
            block.conv2 = seeded_conv(rng, out_c, out_c, 3, 1, 1);
            stage.blocks.push_back(std::move(block));
        }
        w.stages[static_cast<std::size_t>(s)] = std::move(stage);
        in_c = out_c;
    }
    return w;
}

// Four stage outputs at cumulative strides 2, 4, 8, 16; every convolution is
// padded so the maps cover the frame with no blind border.
inline std::array<Tensor, 4> backbone_forward(const Tensor& frame, const BackboneWeights& weights) {
    if (frame.rank() != 3 || frame.extent(0) != weights.config.input_channels)
        throw DimensionError("backbone expects a 3xHxW frame");
    if (frame.extent(1) < 16 || frame.extent(2) < 16) throw DimensionError("backbone frame must be at least 16x16");

    std::array<Tensor, 4> out;
    const Tensor* cur = &frame;
    for (int s = 0; s < 4; ++s) {
        const BackboneStage& stage = weights.stages[static_cast<std::size_t>(s)];
        Tensor x = conv2d(*cur, stage.entry);
        relu_inplace(x);
        for (const ResidualBlock& block : stage.blocks) {
            Tensor y = conv2d(x, block.conv1);
            relu_inplace(y);
            y = conv2d(y, block.conv2);
            add_inplace(y, x);
            relu_inplace(y);
            x = std::move(y);
        }
        out[static_cast<std::size_t>(s)] = std::move(x);
        cur = &out[static_cast<std::size_t>(s)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// feature pyramid

struct FeaturePyramid {
    std::array<Tensor, 4> levels;  // P1..P4, strides 2, 4, 8, 16

    const Tensor& level(int k) const { return levels[static_cast<std::size_t>(k - 1)]; }
    int channels() const { return levels[0].extent(0); }
};

struct FpnWeights {
    std::array<Kernel2D, 4> lateral;  // 1x1 projections to the shared width
    std::array<Kernel2D, 4> output;   // 3x3 smoothing convolutions
    int out_channels() const { return lateral[0].out_channels(); }
};

inline FpnWeights seeded_fpn(const BackboneConfig& cfg, int fpn_channels, Rng& rng) {
    FpnWeights w;
    for (int s = 0; s < 4; ++s) {
        w.lateral[static_cast<std::size_t>(s)] =
            seeded_conv(rng, fpn_channels, cfg.stage_channels[static_cast<std::size_t>(s)], 1, 1, 0);
        w.output[static_cast<std::size_t>(s)] = seeded_conv(rng, fpn_channels, fpn_channels, 3, 1, 1);
    }
    return w;
}

// Nearest-neighbor 2x upsampling cropped to the requested extents.
inline Tensor upsample2x_nearest(const Tensor& in, int out_h, int out_w) {
    const int c = in.extent(0), h = in.extent(1), w = in.extent(2);
    if (out_h > 2 * h || out_w > 2 * w) throw DimensionError("upsample2x: requested extents too large");
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const float* ip = in.plane(ch);
        float* op = out.plane(ch);
        for (int y = 0; y < out_h; ++y) {
            const float* irow = ip + static_cast<std::size_t>(y / 2) * w;
            float* orow = op + static_cast<std::size_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x) orow[x] = irow[x / 2];
        }
    }
    return out;
}

// Standard top-down pathway: lateral 1x1 projections, coarser level upsampled
// and added, then a 3x3 output smoothing per level.
inline FeaturePyramid fpn_forward(const std::array<Tensor, 4>& stages, const FpnWeights& weights) {
    std::array<Tensor, 4> merged;
    for (int s = 3; s >= 0; --s) {
        Tensor lat = conv2d(stages[static_cast<std::size_t>(s)], weights.lateral[static_cast<std::size_t>(s)]);
        if (s < 3) {
            Tensor up = upsample2x_nearest(merged[static_cast<std::size_t>(s + 1)], lat.extent(1), lat.extent(2));
            add_inplace(lat, up);
        }
        merged[static_cast<std::size_t>(s)] = std::move(lat);
    }
    FeaturePyramid pyr;
    for (int s = 0; s < 4; ++s)
        pyr.levels[static_cast<std::size_t>(s)] =
            conv2d(merged[static_cast<std::size_t>(s)], weights.output[static_cast<std::size_t>(s)]);
    return pyr;
}

// ---------------------------------------------------------------------------
// inertia MLP

// Two tanh hidden layers and a linear 4-unit output. Dense weights are
// (out, in) matrices.
struct MlpWeights {
    Tensor w1, w2, w3;
    std::vector<float> b1, b2, b3;

    int input_dim() const { return w1.extent(1); }
    int hidden1() const { return w1.extent(0); }
    int hidden2() const { return w2.extent(0); }
};

inline MlpWeights seeded_mlp(int input_dim, int hidden1, int hidden2, Rng& rng) {
    MlpWeights w;
    w.w1 = uniform_tensor(rng, {hidden1, input_dim}, 1.0f / std::sqrt(static_cast<float>(input_dim)));
    w.w2 = uniform_tensor(rng, {hidden2, hidden1}, 1.0f / std::sqrt(static_cast<float>(hidden1)));
    w.w3 = uniform_tensor(rng, {4, hidden2}, 1.0f / std::sqrt(static_cast<float>(hidden2)));
    w.b1.assign(static_cast<std::size_t>(hidden1), 0.0f);
    w.b2.assign(static_cast<std::size_t>(hidden2), 0.0f);
    w.b3.assign(4, 0.0f);
    return w;
}

namespace detail {

inline std::vector<float> dense(const Tensor& w, const std::vector<float>& b, std::span<const float> x) {
    const int out_dim = w.extent(0), in_dim = w.extent(1);
    std::vector<float> y(static_cast<std::size_t>(out_dim));
    for (int o = 0; o < out_dim; ++o) {
        float acc = b[static_cast<std::size_t>(o)];
        const float* row = w.data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = acc;
    }
    return y;
}

inline void tanh_inplace(std::vector<float>& v) {
    for (float& x : v) x = std::tanh(x);
}

}  // namespace detail

inline std::array<float, 4> mlp_forward(std::span<const float> input, const MlpWeights& w) {
    if (static_cast<int>(input.size()) != w.input_dim())
        throw DimensionError("mlp input length " + std::to_string(input.size()) + " != expected " +
                             std::to_string(w.input_dim()));
    std::vector<float> h1 = detail::dense(w.w1, w.b1, input);
    detail::tanh_inplace(h1);
    std::vector<float> h2 = detail::dense(w.w2, w.b2, h1);
    detail::tanh_inplace(h2);
    std::vector<float> out = detail::dense(w.w3, w.b3, h2);
    return {out[0], out[1], out[2], out[3]};
}

struct MlpSample {
    std::vector<float> input;     // 4*(g-1) deltas
    std::array<float, 4> target;  // next-step delta
};

struct MlpGradients {
    Tensor w1, w2, w3;
    std::vector<float> b1, b2, b3;
    float loss = 0.0f;
};

// smooth-L1: quadratic below 1, linear above
inline float smooth_l1(float e) {
    const float a = std::fabs(e);
    return a < 1.0f ? 0.5f * e * e : a - 0.5f;
}

inline float smooth_l1_grad(float e) {
    if (e > 1.0f) return 1.0f;
    if (e < -1.0f) return -1.0f;
    return e;
}

// Mean smooth-L1 loss over the batch and the 4 components, with analytic
// gradients through both tanh layers. Optional hidden-unit dropout is meant
// for training only and draws its mask from `rng`.
inline MlpGradients mlp_backward(const std::vector<MlpSample>& batch, const MlpWeights& w, float dropout_rate = 0.0f,
                                 Rng* rng = nullptr) {
    if (batch.empty()) throw ArgumentError("mlp_backward: empty batch");
    if (dropout_rate > 0.0f && rng == nullptr) throw ArgumentError("mlp_backward: dropout needs a generator");

    const int in_dim = w.input_dim(), h1_dim = w.hidden1(), h2_dim = w.hidden2();

    MlpGradients g;
    g.w1 = Tensor({h1_dim, in_dim});
    g.w2 = Tensor({h2_dim, h1_dim});
    g.w3 = Tensor({4, h2_dim});
    g.b1.assign(static_cast<std::size_t>(h1_dim), 0.0f);
    g.b2.assign(static_cast<std::size_t>(h2_dim), 0.0f);
    g.b3.assign(4, 0.0f);

    double loss_acc = 0.0;
    const float inv_count = 1.0f / (static_cast<float>(batch.size()) * 4.0f);

    for (const MlpSample& sample : batch) {
        if (static_cast<int>(sample.input.size()) != in_dim) throw DimensionError("mlp_backward: sample length");

        std::vector<float> t1 = detail::dense(w.w1, w.b1, sample.input);
        detail::tanh_inplace(t1);
        std::vector<float> mask1(t1.size(), 1.0f);
        std::vector<float> a1 = t1;
        if (dropout_rate > 0.0f) {
            for (std::size_t i = 0; i < a1.size(); ++i) {
                mask1[i] = rng->next_float() >= dropout_rate ? 1.0f / (1.0f - dropout_rate) : 0.0f;
                a1[i] *= mask1[i];
            }
        }
        std::vector<float> t2 = detail::dense(w.w2, w.b2, a1);
        detail::tanh_inplace(t2);
        std::vector<float> mask2(t2.size(), 1.0f);
        std::vector<float> a2 = t2;
        if (dropout_rate > 0.0f) {
            for (std::size_t i = 0; i < a2.size(); ++i) {
                mask2[i] = rng->next_float() >= dropout_rate ? 1.0f / (1.0f - dropout_rate) : 0.0f;
                a2[i] *= mask2[i];
            }
        }
        std::vector<float> out = detail::dense(w.w3, w.b3, a2);

        std::array<float, 4> dout{};
        for (int o = 0; o < 4; ++o) {
            const float err = out[static_cast<std::size_t>(o)] - sample.target[static_cast<std::size_t>(o)];
            loss_acc += smooth_l1(err);
            dout[static_cast<std::size_t>(o)] = smooth_l1_grad(err) * inv_count;
        }

        std::vector<float> da2(static_cast<std::size_t>(h2_dim), 0.0f);
        for (int o = 0; o < 4; ++o) {
            const float gv = dout[static_cast<std::size_t>(o)];
            g.b3[static_cast<std::size_t>(o)] += gv;
            float* grow = g.w3.data() + static_cast<std::size_t>(o) * h2_dim;
            const float* wrow = w.w3.data() + static_cast<std::size_t>(o) * h2_dim;
            for (int i = 0; i < h2_dim; ++i) {
                grow[i] += gv * a2[static_cast<std::size_t>(i)];
                da2[static_cast<std::size_t>(i)] += gv * wrow[i];
            }
        }
        std::vector<float> da1(static_cast<std::size_t>(h1_dim), 0.0f);
        for (int o = 0; o < h2_dim; ++o) {
            const float tv = t2[static_cast<std::size_t>(o)];
            const float gv = da2[static_cast<std::size_t>(o)] * mask2[static_cast<std::size_t>(o)] * (1.0f - tv * tv);
            g.b2[static_cast<std::size_t>(o)] += gv;
            float* grow = g.w2.data() + static_cast<std::size_t>(o) * h1_dim;
            const float* wrow = w.w2.data() + static_cast<std::size_t>(o) * h1_dim;
            for (int i = 0; i < h1_dim; ++i) {
                grow[i] += gv * a1[static_cast<std::size_t>(i)];
                da1[static_cast<std::size_t>(i)] += gv * wrow[i];
            }
        }
        for (int o = 0; o < h1_dim; ++o) {
            const float tv = t1[static_cast<std::size_t>(o)];
            const float gv = da1[static_cast<std::size_t>(o)] * mask1[static_cast<std::size_t>(o)] * (1.0f - tv * tv);
            g.b1[static_cast<std::size_t>(o)] += gv;
            float* grow = g.w1.data() + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) grow[i] += gv * sample.input[static_cast<std::size_t>(i)];
        }
    }

    g.loss = static_cast<float>(loss_acc / (static_cast<double>(batch.size()) * 4.0));
    return g;
}

// One gradient-descent step; returns the batch loss before the update.
inline float mlp_train_step(const std::vector<MlpSample>& batch, MlpWeights& w, float learning_rate,
                            float dropout_rate = 0.0f, Rng* rng = nullptr) {
    if (!(learning_rate > 0.0f)) throw ArgumentError("mlp_train_step: learning rate must be positive");
    MlpGradients g = mlp_backward(batch, w, dropout_rate, rng);

    auto apply = [learning_rate](Tensor& weight, const Tensor& grad) {
        float* wp = weight.data();
        const float* gp = grad.data();
        for (std::size_t i = 0; i < weight.size(); ++i) wp[i] -= learning_rate * gp[i];
    };
    auto apply_vec = [learning_rate](std::vector<float>& weight, const std::vector<float>& grad) {
        for (std::size_t i = 0; i < weight.size(); ++i) weight[i] -= learning_rate * grad[i];
    };
    apply(w.w1, g.w1);
    apply(w.w2, g.w2);
    apply(w.w3, g.w3);
    apply_vec(w.b1, g.b1);
    apply_vec(w.b2, g.b2);
    apply_vec(w.b3, g.b3);
    return g.loss;
}

}  // namespace mvot
