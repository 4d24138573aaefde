#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "eedit/bonus.hpp"
#include "eedit/prng.hpp"

namespace eedit {

enum class ModuleKind : int {
    self_attention = 0,
    cross_attention = 1,
    mlp = 2,
};

inline constexpr std::array<ModuleKind, 3> kModuleKinds = {
    ModuleKind::self_attention, ModuleKind::cross_attention, ModuleKind::mlp};

inline const char* to_string(ModuleKind kind) {
    switch (kind) {
        case ModuleKind::self_attention: return "sa";
        case ModuleKind::cross_attention: return "ca";
        case ModuleKind::mlp: return "mlp";
    }
    return "?";
}

inline ModuleKind module_kind_from_string(const std::string& name) {
    if (name == "sa") return ModuleKind::self_attention;
    if (name == "ca") return ModuleKind::cross_attention;
    if (name == "mlp") return ModuleKind::mlp;
    throw std::invalid_argument("unknown module kind: " + name);
}

// Image-token indices chosen for recomputation at one (kind, layer, step).
struct Selection {
    std::vector<int32_t> indices;  // strictly ascending, within [0, H*W)
    int step = 0;
    int layer = 0;
    ModuleKind kind = ModuleKind::self_attention;
};

// Calls into the per-step selection machinery. A plan-consuming run must leave
// this untouched; tests read it to prove the inference path does no scoring.
inline std::atomic<uint64_t>& scoring_call_counter() {
    static std::atomic<uint64_t> counter{0};
    return counter;
}

inline uint64_t scoring_call_count() { return scoring_call_counter().load(); }
inline void reset_scoring_call_count() { scoring_call_counter().store(0); }

// Seed-based component of the score map. Pure in all arguments, so the offline
// planner and the live path draw identical values in any order.
inline std::vector<float> random_component(uint64_t seed, ModuleKind kind, int layer, int step, int n_tokens) {
    if (n_tokens < 1)
        throw std::invalid_argument("n_tokens must be >= 1");
    scoring_call_counter()++;
    std::vector<float> values(n_tokens);
    for (int i = 0; i < n_tokens; ++i)
        values[i] = prng::unit_float(prng::stream64(seed, prng::Stream::score,
                                                    static_cast<uint64_t>(kind), layer, step, i));
    return values;
}

// score = random * bonus + gamma * reuse_count
inline std::vector<float> compute_scores(const std::vector<float>& random, const BonusMap& bonus,
                                         const std::vector<int32_t>& freq, float gamma) {
    if (random.size() != bonus.values.size() || random.size() != freq.size())
        throw std::invalid_argument("score inputs must have equal length");
    scoring_call_counter()++;
    std::vector<float> scores(random.size());
    for (size_t i = 0; i < random.size(); ++i)
        scores[i] = random[i] * bonus.values[i] + gamma * static_cast<float>(freq[i]);
    return scores;
}

// Indices of the `count` largest scores, ties broken toward the lower index,
// returned ascending.
inline Selection select_top(const std::vector<float>& scores, int count) {
    if (count < 1 || count > static_cast<int>(scores.size()))
        throw std::invalid_argument("selection count out of range");
    scoring_call_counter()++;
    std::vector<int32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::nth_element(order.begin(), order.begin() + (count - 1), order.end(),
                     [&scores](int32_t a, int32_t b) {
                         if (scores[a] != scores[b])
                             return scores[a] > scores[b];
                         return a < b;
                     });
    Selection selection;
    selection.indices.assign(order.begin(), order.begin() + count);
    std::sort(selection.indices.begin(), selection.indices.end());
    return selection;
}

// ceil(ratio * n), at least 1
inline int partial_count(int n_image_tokens, float ratio) {
    if (!(ratio > 0.0f && ratio <= 1.0f))
        throw std::invalid_argument("ratio must be in (0, 1]");
    const int count = static_cast<int>(std::ceil(static_cast<double>(ratio) * n_image_tokens));
    return std::min(n_image_tokens, std::max(1, count));
}

// Per-(kind, layer) reuse counters threaded across partial steps.
struct ScoreState {
    int image_tokens = 0;
    int layers = 0;
    float ratio = 1.0f;
    float gamma = 1.0f;
    uint64_t seed = 0;
    std::vector<std::vector<int32_t>> freq;  // [kind * layers + layer][token]

    ScoreState(int image_tokens_, int layers_, float ratio_, float gamma_, uint64_t seed_)
        : image_tokens(image_tokens_), layers(layers_), ratio(ratio_), gamma(gamma_), seed(seed_) {
        freq.assign(static_cast<size_t>(layers) * kModuleKinds.size(),
                    std::vector<int32_t>(image_tokens, 0));
    }

    std::vector<int32_t>& freq_for(ModuleKind kind, int layer) {
        return freq[static_cast<size_t>(kind) * layers + layer];
    }
    const std::vector<int32_t>& freq_for(ModuleKind kind, int layer) const {
        return freq[static_cast<size_t>(kind) * layers + layer];
    }
};

// Selected counters reset to zero, every other counter advances by one. A full
// selection therefore clears the whole stream.
inline void update_frequency(ScoreState& state, ModuleKind kind, int layer, const Selection& selected) {
    scoring_call_counter()++;
    std::vector<int32_t>& freq = state.freq_for(kind, layer);
    for (int32_t& f : freq)
        ++f;
    for (int32_t i : selected.indices)
        freq[i] = 0;
}

// The live (non-preprocessed) selection path: scores, selects, and updates the
// reuse counters for one (kind, layer, step) in pipeline order.
struct LiveSelector {
    ScoreState state;
    BonusMap bonus;

    LiveSelector(int image_tokens, int layers, float ratio, float gamma, uint64_t seed, BonusMap bonus_map)
        : state(image_tokens, layers, ratio, gamma, seed), bonus(std::move(bonus_map)) {}

    Selection next(ModuleKind kind, int layer, int step, bool refresh) {
        Selection selection;
        if (refresh) {
            selection.indices.resize(state.image_tokens);
            std::iota(selection.indices.begin(), selection.indices.end(), 0);
        } else {
            const std::vector<float> random =
                random_component(state.seed, kind, layer, step, state.image_tokens);
            const std::vector<float> scores =
                compute_scores(random, bonus, state.freq_for(kind, layer), state.gamma);
            selection = select_top(scores, partial_count(state.image_tokens, state.ratio));
        }
        selection.kind = kind;
        selection.layer = layer;
        selection.step = step;
        update_frequency(state, kind, layer, selection);
        return selection;
    }
};

}  // namespace eedit
