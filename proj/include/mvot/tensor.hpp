#pragma once

// Dense float32 tensors plus the handful of numeric kernels the tracker is
// built from: padded strided convolution, bilinear RoI Align, Hanning
// windows, 3x3 grayscale erosion and paired-channel softmax.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/geometry.hpp"

namespace mvot {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int e : shape_) {
            if (e < 1) throw DimensionError("tensor extent must be >= 1");
            n *= static_cast<std::size_t>(e);
        }
        data_.assign(n, 0.0f);
    }

    Tensor(std::vector<int> shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
        std::size_t n = 1;
        for (int e : shape_) {
            if (e < 1) throw DimensionError("tensor extent must be >= 1");
            n *= static_cast<std::size_t>(e);
        }
        if (n != data_.size()) throw DimensionError("tensor data length does not match extents");
    }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // rank-specific element access, row-major
    float& at(int i) { return data_[static_cast<std::size_t>(i)]; }
    const float& at(int i) const { return data_[static_cast<std::size_t>(i)]; }

    float& at(int i, int j) { return data_[idx2(i, j)]; }
    const float& at(int i, int j) const { return data_[idx2(i, j)]; }

    float& at(int c, int y, int x) { return data_[idx3(c, y, x)]; }
    const float& at(int c, int y, int x) const { return data_[idx3(c, y, x)]; }

    float& at(int n, int c, int y, int x) { return data_[idx4(n, c, y, x)]; }
    const float& at(int n, int c, int y, int x) const { return data_[idx4(n, c, y, x)]; }

    // pointer to a contiguous (H*W) channel plane of a rank-3 tensor
    float* plane(int c) { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }
    const float* plane(int c) const { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }
    std::size_t plane_size() const {
        return static_cast<std::size_t>(shape_[shape_.size() - 2]) * static_cast<std::size_t>(shape_.back());
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t idx2(int i, int j) const {
        return static_cast<std::size_t>(i) * shape_[1] + static_cast<std::size_t>(j);
    }
    std::size_t idx3(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + static_cast<std::size_t>(x);
    }
    std::size_t idx4(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * static_cast<std::size_t>(shape_[2]) + y) * shape_[3] +
               static_cast<std::size_t>(x);
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

// 2-D convolution kernel with bias, stride in {1,2} and symmetric zero padding.
struct Kernel2D {
    Tensor weights;           // (outC, inC, kH, kW)
    std::vector<float> bias;  // length outC
    int stride = 1;
    int padding = 0;

    int out_channels() const { return weights.extent(0); }
    int in_channels() const { return weights.extent(1); }
    int kernel_h() const { return weights.extent(2); }
    int kernel_w() const { return weights.extent(3); }

    void validate() const {
        if (weights.rank() != 4) throw DimensionError("conv weights must be rank 4");
        if (kernel_h() % 2 == 0 || kernel_w() % 2 == 0) throw DimensionError("kernel extents must be odd");
        if (stride != 1 && stride != 2) throw DimensionError("stride must be 1 or 2");
        if (padding < 0) throw DimensionError("padding must be non-negative");
        if (static_cast<int>(bias.size()) != out_channels()) throw DimensionError("bias length != out channels");
    }
};

// Zero-padded strided convolution of a CxHxW tensor.
inline Tensor conv2d(const Tensor& input, const Kernel2D& kernel) {
    kernel.validate();
    if (input.rank() != 3) throw DimensionError("conv2d expects a CxHxW input");
    const int in_c = input.extent(0), in_h = input.extent(1), in_w = input.extent(2);
    if (in_c != kernel.in_channels())
        throw DimensionError("conv2d channel mismatch: input " + std::to_string(in_c) + " vs kernel " +
                             std::to_string(kernel.in_channels()));

    const int kh = kernel.kernel_h(), kw = kernel.kernel_w();
    const int s = kernel.stride, p = kernel.padding;
    const int out_h = (in_h + 2 * p - kh) / s + 1;
    const int out_w = (in_w + 2 * p - kw) / s + 1;
    if (in_h + 2 * p < kh || in_w + 2 * p < kw || out_h < 1 || out_w < 1)
        throw DimensionError("conv2d input smaller than kernel");

    const int out_c = kernel.out_channels();
    Tensor out({out_c, out_h, out_w});

    for (int oc = 0; oc < out_c; ++oc) {
        float* out_plane = out.plane(oc);
        const float b = kernel.bias[static_cast<std::size_t>(oc)];
        std::fill(out_plane, out_plane + static_cast<std::size_t>(out_h) * out_w, b);

        for (int ic = 0; ic < in_c; ++ic) {
            const float* in_plane = input.plane(ic);
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const float wv = kernel.weights.at(oc, ic, ky, kx);
                    if (wv == 0.0f) continue;
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int iy = oy * s + ky - p;
                        if (iy < 0 || iy >= in_h) continue;
                        // valid ox range so that ix = ox*s + kx - p lands inside the row
                        int ox0 = 0;
                        while (ox0 < out_w && ox0 * s + kx - p < 0) ++ox0;
                        int ox1 = out_w;
                        while (ox1 > ox0 && (ox1 - 1) * s + kx - p >= in_w) --ox1;
                        const float* __restrict__ in_row = in_plane + static_cast<std::size_t>(iy) * in_w;
                        float* __restrict__ out_row = out_plane + static_cast<std::size_t>(oy) * out_w;
                        if (s == 1) {
                            const float* __restrict__ ip = in_row + ox0 + kx - p;
                            for (int ox = ox0; ox < ox1; ++ox) out_row[ox] += wv * ip[ox - ox0];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox) out_row[ox] += wv * in_row[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Bilinear sample at continuous coordinates (x right, y down); the pixel
// (r, c) occupies the unit square [r, r+1) x [c, c+1). Samples outside the
// map read zero. Coordinates are resolved in double so that sampling meets
// the 1e-6 contract even for large maps.
inline float bilinear_sample(const float* plane, int h, int w, double y, double x) {
    const double yf = y - 0.5, xf = x - 0.5;
    const int y0 = static_cast<int>(std::floor(yf)), x0 = static_cast<int>(std::floor(xf));
    const double dy = yf - static_cast<double>(y0), dx = xf - static_cast<double>(x0);
    double acc = 0.0;
    for (int iy = 0; iy < 2; ++iy) {
        const int py = y0 + iy;
        if (py < 0 || py >= h) continue;
        const double wy = iy ? dy : 1.0 - dy;
        for (int ix = 0; ix < 2; ++ix) {
            const int px = x0 + ix;
            if (px < 0 || px >= w) continue;
            const double wx = ix ? dx : 1.0 - dx;
            acc += wy * wx * static_cast<double>(plane[static_cast<std::size_t>(py) * w + px]);
        }
    }
    return static_cast<float>(acc);
}

// RoI Align with one sampling point per bin (the bin center).
inline Tensor roi_align(const Tensor& feat, const Box& region, int out_size) {
    if (feat.rank() != 3) throw DimensionError("roi_align expects a CxHxW feature map");
    if (out_size < 1) throw DimensionError("roi_align output size must be >= 1");
    if (!(region.w > 0.0f) || !(region.h > 0.0f)) throw GeometryError("roi_align region extents must be positive");

    const int c = feat.extent(0), h = feat.extent(1), w = feat.extent(2);
    const double x0 = static_cast<double>(region.cx) - 0.5 * static_cast<double>(region.w);
    const double y0 = static_cast<double>(region.cy) - 0.5 * static_cast<double>(region.h);
    const double bin_w = static_cast<double>(region.w) / out_size;
    const double bin_h = static_cast<double>(region.h) / out_size;

    Tensor out({c, out_size, out_size});
    for (int ch = 0; ch < c; ++ch) {
        const float* plane = feat.plane(ch);
        float* op = out.plane(ch);
        for (int by = 0; by < out_size; ++by) {
            const double sy = y0 + (by + 0.5) * bin_h;
            for (int bx = 0; bx < out_size; ++bx) {
                const double sx = x0 + (bx + 0.5) * bin_w;
                op[static_cast<std::size_t>(by) * out_size + bx] = bilinear_sample(plane, h, w, sy, sx);
            }
        }
    }
    return out;
}

// Outer product of two 1-D Hann windows, w(n) = sin^2(pi*n/(N-1)).
inline Tensor hanning2d(int size) {
    if (size < 1) throw DimensionError("hanning2d size must be >= 1");
    std::vector<float> win(static_cast<std::size_t>(size));
    if (size == 1) {
        win[0] = 1.0f;
    } else {
        // mirror the first half so flip symmetry is exact
        for (int n = 0; n <= (size - 1) / 2; ++n) {
            const double s = std::sin(M_PI * static_cast<double>(n) / static_cast<double>(size - 1));
            win[static_cast<std::size_t>(n)] = static_cast<float>(s * s);
            win[static_cast<std::size_t>(size - 1 - n)] = win[static_cast<std::size_t>(n)];
        }
    }
    Tensor out({1, size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            out.at(0, y, x) = win[static_cast<std::size_t>(y)] * win[static_cast<std::size_t>(x)];
    return out;
}

// 3x3 minimum filter with replicated borders, channels independent.
inline Tensor erode3x3(const Tensor& map) {
    if (map.rank() != 3) throw DimensionError("erode3x3 expects a CxHxW map");
    const int c = map.extent(0), h = map.extent(1), w = map.extent(2);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        const float* ip = map.plane(ch);
        float* op = out.plane(ch);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                float m = ip[static_cast<std::size_t>(y) * w + x];
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = std::clamp(y + dy, 0, h - 1);
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = std::clamp(x + dx, 0, w - 1);
                        m = std::min(m, ip[static_cast<std::size_t>(yy) * w + xx]);
                    }
                }
                op[static_cast<std::size_t>(y) * w + x] = m;
            }
        }
    }
    return out;
}

// Per-location softmax over (negative, positive) channel pairs (2k, 2k+1);
// returns the positive-class probability per anchor.
inline Tensor softmax_pairs(const Tensor& map) {
    if (map.rank() != 3) throw DimensionError("softmax_pairs expects a 2KxHxW map");
    const int c = map.extent(0), h = map.extent(1), w = map.extent(2);
    if (c % 2 != 0) throw DimensionError("softmax_pairs channel count must be even");
    const int k = c / 2;
    Tensor out({k, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int a = 0; a < k; ++a) {
        const float* neg = map.plane(2 * a);
        const float* pos = map.plane(2 * a + 1);
        float* op = out.plane(a);
        for (std::size_t i = 0; i < plane; ++i) {
            const float m = std::max(neg[i], pos[i]);
            const float ep = std::exp(pos[i] - m);
            const float en = std::exp(neg[i] - m);
            op[i] = ep / (ep + en);
        }
    }
    return out;
}

// elementwise helpers shared by the network blocks

inline void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
    float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

inline void relu_inplace(Tensor& t) {
    float* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
}

inline void scale_inplace(Tensor& t, float s) {
    float* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) p[i] *= s;
}

}  // namespace mvot
