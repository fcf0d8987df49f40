#pragma once

// Box geometry in image pixels and the scale-invariant delta parameterization
// used both by the inertia predictor and the RPN regression decode.

#include <algorithm>
#include <cmath>

#include "mvot/errors.hpp"

namespace mvot {

// Axis-aligned box, center format. Continuous pixel coordinates: a box with
// corners on integers covers whole pixels exactly.
struct Box {
    float cx = 0.0f;
    float cy = 0.0f;
    float w = 0.0f;
    float h = 0.0f;

    float left() const { return cx - 0.5f * w; }
    float top() const { return cy - 0.5f * h; }
    float right() const { return cx + 0.5f * w; }
    float bottom() const { return cy + 0.5f * h; }
    float area() const { return w * h; }

    bool valid() const {
        return w > 0.0f && h > 0.0f && std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h);
    }

    static Box from_corner(float left, float top, float w, float h) {
        return Box{left + 0.5f * w, top + 0.5f * h, w, h};
    }

    bool contains(float x, float y) const { return x >= left() && x <= right() && y >= top() && y <= bottom(); }
};

// Scale-invariant offsets: center offsets relative to the previous extents,
// extents as natural-log ratios.
struct BoxDelta {
    float dx = 0.0f;
    float dy = 0.0f;
    float dw = 0.0f;
    float dh = 0.0f;
};

inline BoxDelta encode_delta(const Box& prev, const Box& cur) {
    return BoxDelta{(cur.cx - prev.cx) / prev.w, (cur.cy - prev.cy) / prev.h, std::log(cur.w / prev.w),
                    std::log(cur.h / prev.h)};
}

inline Box decode_delta(const Box& prev, const BoxDelta& d) {
    return Box{prev.cx + d.dx * prev.w, prev.cy + d.dy * prev.h, prev.w * std::exp(d.dw), prev.h * std::exp(d.dh)};
}

// Intersection over union; 0 for disjoint boxes.
inline float iou(const Box& a, const Box& b) {
    const float ix = std::max(0.0f, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
    const float iy = std::max(0.0f, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
    const float inter = ix * iy;
    const float uni = a.area() + b.area() - inter;
    if (uni <= 0.0f) return 0.0f;
    return inter / uni;
}

// Clamp the center into the frame and shrink extents to fit; keeps the box
// positive-sized even for degenerate inputs near the border.
inline Box clamp_to_frame(const Box& b, int frame_w, int frame_h) {
    Box out = b;
    out.w = std::min(out.w, static_cast<float>(frame_w));
    out.h = std::min(out.h, static_cast<float>(frame_h));
    out.cx = std::clamp(out.cx, 0.0f, static_cast<float>(frame_w));
    out.cy = std::clamp(out.cy, 0.0f, static_cast<float>(frame_h));
    return out;
}

}  // namespace mvot
