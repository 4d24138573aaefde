#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eedit/errors.hpp"
#include "eedit/model.hpp"
#include "eedit/scoring.hpp"

namespace eedit {

// =============================================================================
// Policies and refresh schedule
// =============================================================================

enum class KindPolicy {
    token_wise,    // partial steps recompute the selected tokens and scatter
    full_or_skip,  // partial steps reuse the whole buffer untouched
};

struct KindPolicies {
    KindPolicy self_attention = KindPolicy::token_wise;
    KindPolicy cross_attention = KindPolicy::full_or_skip;
    KindPolicy mlp = KindPolicy::token_wise;

    KindPolicy for_kind(ModuleKind kind) const {
        switch (kind) {
            case ModuleKind::self_attention: return self_attention;
            case ModuleKind::cross_attention: return cross_attention;
            case ModuleKind::mlp: return mlp;
        }
        return KindPolicy::token_wise;
    }
};

inline const char* to_string(KindPolicy policy) {
    return policy == KindPolicy::token_wise ? "token_wise" : "full_or_skip";
}

inline KindPolicy kind_policy_from_string(const std::string& name) {
    if (name == "token_wise") return KindPolicy::token_wise;
    if (name == "full_or_skip") return KindPolicy::full_or_skip;
    throw std::invalid_argument("unknown kind policy: " + name);
}

// Denoise steps run first_step down to 1. A step refreshes every buffer when it
// is forced or when `interval` steps have passed since the previous refresh.
struct RefreshSchedule {
    int first_step = 1;
    int interval = 1;  // N_r >= 1
    std::vector<int> forced_full_steps;  // always contains first_step

    bool forced(int step) const {
        return std::find(forced_full_steps.begin(), forced_full_steps.end(), step) !=
               forced_full_steps.end();
    }
};

inline RefreshSchedule make_refresh_schedule(int first_step, int interval, std::vector<int> forced = {}) {
    if (first_step < 1 || interval < 1)
        throw std::invalid_argument("refresh schedule needs first_step >= 1 and interval >= 1");
    RefreshSchedule schedule;
    schedule.first_step = first_step;
    schedule.interval = interval;
    schedule.forced_full_steps = std::move(forced);
    if (!schedule.forced(first_step))
        schedule.forced_full_steps.push_back(first_step);
    return schedule;
}

inline bool is_refresh_step(const RefreshSchedule& schedule, int step) {
    if (step < 1 || step > schedule.first_step)
        throw std::invalid_argument("step outside the executed range");
    int since = 0;
    for (int t = schedule.first_step; t >= step; --t) {
        ++since;
        const bool refresh = t == schedule.first_step || schedule.forced(t) || since >= schedule.interval;
        if (refresh)
            since = 0;
        if (t == step)
            return refresh;
    }
    return false;
}

// =============================================================================
// FLOPs model
// =============================================================================

// Analytic per-module cost. Attention projections cost 4*c^2 per computed token;
// attention scores and mixing cost 2*c per (computed token, context token) with
// the context being the full sequence for self-attention and the prompt for
// cross-attention.
inline uint64_t flops_of(ModuleKind kind, uint64_t n_computed, uint64_t n_total,
                         uint64_t prompt_len, uint64_t channels) {
    switch (kind) {
        case ModuleKind::self_attention:
            return 2 * n_computed * n_total * channels + 4 * n_computed * channels * channels;
        case ModuleKind::cross_attention:
            return 2 * n_computed * prompt_len * channels + 4 * n_computed * channels * channels;
        case ModuleKind::mlp:
            return 8 * n_computed * channels * channels;
    }
    return 0;
}

// =============================================================================
// Cache store and partial-computation executor
// =============================================================================

enum class ComputeMode { full, partial, skip };

struct CacheStore {
    struct Buffer {
        std::vector<float> data;  // (H*W + P) x C, last written module output
        bool initialized = false;
        int last_refresh_step = 0;
        std::vector<int> write_ordinal;  // per token, executed-step ordinal of last write
    };

    int layers = 0;
    int total_tokens = 0;
    int channels = 0;
    int ordinal = 0;  // executed denoise steps so far
    std::vector<Buffer> buffers;  // [kind * layers + layer]

    CacheStore() = default;
    CacheStore(int layers_, int total_tokens_, int channels_)
        : layers(layers_), total_tokens(total_tokens_), channels(channels_) {
        buffers.resize(static_cast<size_t>(layers) * kModuleKinds.size());
        for (Buffer& buffer : buffers) {
            buffer.data.assign(static_cast<size_t>(total_tokens) * channels, 0.0f);
            buffer.write_ordinal.assign(total_tokens, 0);
        }
    }

    Buffer& buffer_for(ModuleKind kind, int layer) {
        return buffers[static_cast<size_t>(kind) * layers + layer];
    }
    const Buffer& buffer_for(ModuleKind kind, int layer) const {
        return buffers[static_cast<size_t>(kind) * layers + layer];
    }

    void begin_step() { ++ordinal; }

    // Largest age, in executed steps, of any initialized buffer entry.
    int max_staleness() const {
        int stale = 0;
        for (const Buffer& buffer : buffers) {
            if (!buffer.initialized)
                continue;
            for (int w : buffer.write_ordinal)
                stale = std::max(stale, ordinal - w);
        }
        return stale;
    }
};

// Everything a module evaluation needs besides the latent itself.
struct ModuleContext {
    const LayerStack* stack = nullptr;
    std::vector<float> prompt;  // P x C conditioning, fixed for the whole run
    int prompt_len = 0;
};

struct FlopsCounter {
    uint64_t actual = 0;
};

namespace detail {

inline std::vector<float> run_module(ModuleKind kind, const ModuleContext& ctx, int layer, int step,
                                     const TokenGrid& input, std::span<const int32_t> rows) {
    switch (kind) {
        case ModuleKind::self_attention:
            return self_attention(*ctx.stack, layer, input, rows);
        case ModuleKind::cross_attention:
            return cross_attention(*ctx.stack, layer, input, ctx.prompt, ctx.prompt_len, rows);
        case ModuleKind::mlp:
            return mlp(*ctx.stack, layer, input, rows, step);
    }
    throw std::invalid_argument("unknown module kind");
}

}  // namespace detail

// Runs one module at one (layer, step). Full mode rewrites the whole buffer;
// partial mode computes the selected image tokens plus all prompt tokens from
// the live input and scatters them over the cached output; skip returns the
// buffer untouched. Output always mirrors the buffer contents.
inline TokenGrid execute_module(ModuleKind kind, int layer, int step, const TokenGrid& input,
                                ComputeMode mode, const Selection* selection, CacheStore& cache,
                                const ModuleContext& ctx, FlopsCounter* flops = nullptr) {
    const int n_total = input.total_tokens();
    const int n_image = input.image_tokens();
    CacheStore::Buffer& buffer = cache.buffer_for(kind, layer);
    if (buffer.data.size() != input.data.size())
        throw std::invalid_argument("cache buffer shape does not match input");

    std::vector<int32_t> rows;
    switch (mode) {
        case ComputeMode::full:
            rows.resize(n_total);
            std::iota(rows.begin(), rows.end(), 0);
            break;
        case ComputeMode::partial: {
            if (!buffer.initialized)
                throw state_error("partial step before the first full refresh");
            if (selection == nullptr)
                throw std::invalid_argument("partial mode needs a selection");
            rows.reserve(selection->indices.size() + input.prompt_len);
            for (int32_t i : selection->indices) {
                if (i < 0 || i >= n_image)
                    throw std::invalid_argument("selection index out of range");
                rows.push_back(i);
            }
            for (int p = 0; p < input.prompt_len; ++p)
                rows.push_back(n_image + p);
            break;
        }
        case ComputeMode::skip:
            if (!buffer.initialized)
                throw state_error("skip step before the first full refresh");
            break;
    }

    if (!rows.empty()) {
        const std::vector<float> fresh = detail::run_module(kind, ctx, layer, step, input, rows);
        const int c = input.channels;
        for (size_t r = 0; r < rows.size(); ++r) {
            std::copy_n(fresh.data() + r * static_cast<size_t>(c), c,
                        buffer.data.data() + static_cast<size_t>(rows[r]) * c);
            buffer.write_ordinal[rows[r]] = cache.ordinal;
        }
        if (mode == ComputeMode::full) {
            buffer.initialized = true;
            buffer.last_refresh_step = step;
        }
    }
    if (flops != nullptr)
        flops->actual += flops_of(kind, rows.size(), n_total, input.prompt_len, input.channels);

    TokenGrid out = input;
    out.data = buffer.data;
    return out;
}

}  // namespace eedit
