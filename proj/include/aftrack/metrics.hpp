#pragma once

#include <vector>

#include "aftrack/geometry.hpp"

namespace aftrack {

/// Tracking quality summary: average overlap plus success rates at the two
/// standard thresholds, with the raw per-frame traces kept for recomputation.
struct EvalReport {
    std::vector<std::vector<Real>> iou_traces; // one trace per sequence, tracked frames only
    std::vector<Real> center_errors;           // px, all tracked frames
    Real ao = 0;
    Real sr050 = 0;
    Real sr075 = 0;
    std::vector<Real> precision_curve; // fraction with center error <= t, t = 0..50

    std::int64_t frame_count() const {
        std::int64_t n = 0;
        for (const auto& t : iou_traces) n += static_cast<std::int64_t>(t.size());
        return n;
    }

    void finalize() {
        Real sum = 0;
        std::int64_t n = 0, hit050 = 0, hit075 = 0;
        for (const auto& trace : iou_traces)
            for (Real v : trace) {
                sum += v;
                ++n;
                if (v > 0.5) ++hit050;
                if (v > 0.75) ++hit075;
            }
        ao = n ? sum / static_cast<Real>(n) : 0;
        sr050 = n ? static_cast<Real>(hit050) / static_cast<Real>(n) : 0;
        sr075 = n ? static_cast<Real>(hit075) / static_cast<Real>(n) : 0;
        precision_curve.assign(51, 0);
        if (!center_errors.empty()) {
            for (int t = 0; t <= 50; ++t) {
                std::int64_t hits = 0;
                for (Real e : center_errors)
                    if (e <= t) ++hits;
                precision_curve[static_cast<size_t>(t)] =
                    static_cast<Real>(hits) / static_cast<Real>(center_errors.size());
            }
        }
    }
};

/// Mean of all per-frame overlaps, straight from the traces.
inline Real average_overlap(const std::vector<std::vector<Real>>& traces) {
    Real sum = 0;
    std::int64_t n = 0;
    for (const auto& t : traces)
        for (Real v : t) {
            sum += v;
            ++n;
        }
    return n ? sum / static_cast<Real>(n) : 0;
}

} // namespace aftrack
