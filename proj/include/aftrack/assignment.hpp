#pragma once

#include <vector>

#include "aftrack/geometry.hpp"

namespace aftrack {

/// Geometry of the correlation output grid relative to the instance image:
/// grid cell (x, y) maps to instance pixel (floor(s/2) + s*x, floor(s/2) + s*y).
struct GridSpec {
    int stride = 8;
    int width = 25;
    int height = 25;
    int instance_size = 255;

    GridSpec() = default;
    GridSpec(int s, int w, int h, int inst) : stride(s), width(w), height(h), instance_size(inst) {
        check(s > 0 && w > 0 && h > 0, "GridSpec: positive dimensions required");
        check(s / 2 + s * (w - 1) < inst && s / 2 + s * (h - 1) < inst,
              "GridSpec: grid must map inside the instance");
    }
};

inline Point grid_to_image(int x, int y, const GridSpec& spec) {
    check(x >= 0 && x < spec.width && y >= 0 && y < spec.height,
          "grid_to_image: index out of range");
    return {static_cast<Real>(spec.stride / 2 + spec.stride * x),
            static_cast<Real>(spec.stride / 2 + spec.stride * y)};
}

/// Per-pixel training targets for one instance/ground-truth pair. reg is
/// stored planar [4][H][W] (l,t,r,b) and is meaningful only where cls = 1.
struct LabelMaps {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> cls; // H*W, 1 = positive
    std::vector<Real> cen;         // H*W in [0,1]
    std::vector<Real> reg;         // 4*H*W
    int positives = 0;

    bool has_positives() const { return positives > 0; }
    std::int64_t at(int x, int y) const { return static_cast<std::int64_t>(y) * width + x; }
};

/// Marks every grid location whose mapped image point falls strictly inside
/// `gt` as positive, with side-distance regression targets and centerness.
/// A gt too small to catch any grid point yields positives == 0; callers
/// must skip such pairs.
inline LabelMaps assign_labels(const Box& gt, const GridSpec& spec) {
    check(gt.valid(), "assign_labels: invalid gt box");
    check(gt.x0 >= 0 && gt.y0 >= 0 && gt.x1 <= spec.instance_size && gt.y1 <= spec.instance_size,
          "assign_labels: gt outside instance bounds");
    LabelMaps maps;
    maps.width = spec.width;
    maps.height = spec.height;
    const std::int64_t hw = static_cast<std::int64_t>(spec.width) * spec.height;
    maps.cls.assign(hw, 0);
    maps.cen.assign(hw, 0.0);
    maps.reg.assign(4 * hw, 0.0);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const Point p = grid_to_image(x, y, spec);
            const auto targets = encode_targets(p, gt);
            if (!targets) continue;
            const std::int64_t i = maps.at(x, y);
            maps.cls[i] = 1;
            maps.cen[i] = centerness(*targets);
            maps.reg[0 * hw + i] = targets->l;
            maps.reg[1 * hw + i] = targets->t;
            maps.reg[2 * hw + i] = targets->r;
            maps.reg[3 * hw + i] = targets->b;
            ++maps.positives;
        }
    }
    return maps;
}

} // namespace aftrack
