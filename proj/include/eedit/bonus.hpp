#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

#include "eedit/grid.hpp"

namespace eedit {

// Importance weights for token selection: largest on the edit region, decaying
// geometrically with L1 distance up to a maximum neighborhood depth, 1.0 beyond.

struct BonusParams {
    float factor = 2.0f;  // > 1, weight added on the edit region itself
    float decay = 0.5f;   // in (0, 1), per-ring attenuation
    int max_depth = 2;    // >= 0, largest ring that still gets a bonus

    void validate() const {
        if (!(factor > 1.0f))
            throw std::invalid_argument("bonus factor must be > 1");
        if (!(decay > 0.0f && decay < 1.0f))
            throw std::invalid_argument("bonus decay must be in (0, 1)");
        if (max_depth < 0)
            throw std::invalid_argument("bonus max_depth must be >= 0");
    }
};

struct BonusMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;  // H*W, all >= 1.0
};

inline constexpr int32_t kUnreachable = std::numeric_limits<int32_t>::max();

// Minimum L1 distance from each token to the mask, kUnreachable when the mask
// is empty. Multi-source BFS over the 4-neighborhood (grid L1 geodesics equal
// the L1 metric).
inline std::vector<int32_t> l1_distance_field(const EditMask& mask) {
    const int h = mask.height;
    const int w = mask.width;
    std::vector<int32_t> dist(static_cast<size_t>(h) * w, kUnreachable);
    std::deque<int> frontier;
    for (int i = 0; i < h * w; ++i) {
        if (mask.bits[i]) {
            dist[i] = 0;
            frontier.push_back(i);
        }
    }
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop_front();
        const int row = i / w;
        const int col = i % w;
        const int next = dist[i] + 1;
        const int neighbors[4] = {row > 0 ? i - w : -1, row < h - 1 ? i + w : -1,
                                  col > 0 ? i - 1 : -1, col < w - 1 ? i + 1 : -1};
        for (int n : neighbors) {
            if (n >= 0 && dist[n] > next) {
                dist[n] = next;
                frontier.push_back(n);
            }
        }
    }
    return dist;
}

inline BonusMap build_bonus(const EditMask& mask, const BonusParams& params) {
    params.validate();
    BonusMap bonus;
    bonus.height = mask.height;
    bonus.width = mask.width;
    bonus.values.assign(mask.bits.size(), 1.0f);

    const std::vector<int32_t> dist = l1_distance_field(mask);
    for (size_t i = 0; i < dist.size(); ++i) {
        const int32_t k = dist[i];
        if (k != kUnreachable && k <= params.max_depth)
            bonus.values[i] = 1.0f + params.factor * std::pow(params.decay, static_cast<float>(k));
    }
    return bonus;
}

}  // namespace eedit
