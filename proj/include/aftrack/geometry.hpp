#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "aftrack/common.hpp"

namespace aftrack {

/// Point in image-plane coordinates (pixels, continuous).
struct Point {
    Real x = 0;
    Real y = 0;
};

/// Axis-aligned box in corner form: (x0, y0) top-left, (x1, y1) bottom-right.
struct Box {
    Real x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    Real width() const { return x1 - x0; }
    Real height() const { return y1 - y0; }
    Real area() const { return std::max<Real>(0, width()) * std::max<Real>(0, height()); }
    Point center() const { return {(x0 + x1) * 0.5, (y0 + y1) * 0.5}; }
    bool valid() const { return x0 < x1 && y0 < y1; }

    bool contains(const Point& p) const {
        return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1; // strictly inside
    }

    static Box from_center(Real cx, Real cy, Real w, Real h) {
        return {cx - w * 0.5, cy - h * 0.5, cx + w * 0.5, cy + h * 0.5};
    }

    Box translated(Real dx, Real dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }

    bool operator==(const Box& o) const {
        return x0 == o.x0 && y0 == o.y0 && x1 == o.x1 && y1 == o.y1;
    }
};

/// Distances from an anchor point to the four box sides (left, top, right,
/// bottom). All components are positive for a point strictly inside a box.
struct LTRB {
    Real l = 0, t = 0, r = 0, b = 0;

    Real min() const { return std::min(std::min(l, t), std::min(r, b)); }
    bool operator==(const LTRB& o) const { return l == o.l && t == o.t && r == o.r && b == o.b; }
};

/// Intersection-over-union of two boxes, in [0, 1]. Degenerate (zero-area)
/// boxes have IoU 0 with anything.
inline Real iou(const Box& a, const Box& b) {
    const Real aa = a.area();
    const Real ab = b.area();
    if (aa <= 0 || ab <= 0) return 0;
    const Real iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const Real ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (iw <= 0 || ih <= 0) return 0;
    const Real inter = iw * ih;
    return inter / (aa + ab - inter);
}

/// Greedy non-maximum suppression. A box is removed iff its IoU with an
/// already-kept higher-scoring box exceeds `threshold`. Kept indices are
/// returned in descending score order; score ties break by lower index.
inline std::vector<int> nms(const std::vector<Box>& boxes,
                            const std::vector<Real>& scores,
                            Real threshold) {
    check(boxes.size() == scores.size(), "nms: boxes and scores must have equal length");
    check(threshold > 0 && threshold < 1, "nms: threshold must be in (0,1)");

    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return scores[i] > scores[j]; });

    std::vector<int> kept;
    std::vector<char> suppressed(boxes.size(), 0);
    for (int idx : order) {
        if (suppressed[idx]) continue;
        kept.push_back(idx);
        for (int other : order) {
            if (other == idx || suppressed[other]) continue;
            if (iou(boxes[idx], boxes[other]) > threshold) suppressed[other] = 1;
        }
    }
    return kept;
}

/// Per-pixel regression targets: distances from `point` to the four sides of
/// `gt`. Returns nullopt when the point is not strictly inside the box, i.e.
/// the location is not a positive sample and must not be regressed.
inline std::optional<LTRB> encode_targets(const Point& point, const Box& gt) {
    if (!gt.contains(point)) return std::nullopt;
    return LTRB{point.x - gt.x0, point.y - gt.y0, gt.x1 - point.x, gt.y1 - point.y};
}

/// Exact inverse of encode_targets.
inline Box decode_box(const Point& point, const LTRB& v) {
    check(v.l > 0 && v.t > 0 && v.r > 0 && v.b > 0,
          "decode_box: all regression components must be positive");
    return {point.x - v.l, point.y - v.t, point.x + v.r, point.y + v.b};
}

/// Context-padded scale of a w x h target: sqrt((w+p)(h+p)) with
/// p = (w+h)/2. Used for exemplar/instance crops and the size-change
/// penalty.
inline Real scale_size(Real w, Real h) {
    check(w > 0 && h > 0, "scale_size: positive size required");
    const Real p = (w + h) * 0.5;
    return std::sqrt((w + p) * (h + p));
}

/// Centerness of a location given its side distances: 1 at the box center,
/// falling off toward the sides, 0 for any location not strictly inside.
inline Real centerness(const LTRB& v) {
    if (v.min() <= 0) return 0;
    const Real fx = std::min(v.l, v.r) / std::max(v.l, v.r);
    const Real fy = std::min(v.t, v.b) / std::max(v.t, v.b);
    return std::sqrt(fx * fy);
}

} // namespace aftrack
