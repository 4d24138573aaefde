#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <optional>
#include <vector>

#include "eedit/cache.hpp"
#include "eedit/edit_config.hpp"
#include "eedit/flow.hpp"
#include "eedit/grid.hpp"
#include "eedit/model.hpp"
#include "eedit/plan.hpp"

namespace eedit {

// =============================================================================
// Inversion with step skipping
// =============================================================================

struct InversionTrajectory {
    std::vector<TokenGrid> latents;  // Z_0..Z_T, reused steps stored as duplicates
    std::vector<uint8_t> computed;   // [t-1] for t in 1..T: velocity evaluated at t
    uint64_t velocity_evals = 0;
};

// Steps t with t = 1 (mod m) are integrated, every other step reuses the
// previous latent unchanged. The final step is always integrated, and skipping
// is disabled entirely when m >= T.
inline bool inversion_step_computed(int step, int total_steps, int skip_interval) {
    if (skip_interval >= total_steps)
        return true;
    return step % skip_interval == 1 % skip_interval || step == total_steps;
}

inline InversionTrajectory invert(const TokenGrid& z0, const EditConfig& config,
                                  const VelocityField& field) {
    config.validate();
    InversionTrajectory traj;
    traj.latents.reserve(config.steps + 1);
    traj.latents.push_back(z0);
    traj.computed.resize(config.steps, 0);

    const uint64_t evals_before = field.eval_count;
    const float dt = 1.0f / static_cast<float>(config.steps);
    for (int t = 1; t <= config.steps; ++t) {
        if (inversion_step_computed(t, config.steps, config.skip_interval)) {
            const float time = static_cast<float>(t - 1) * dt;
            traj.latents.push_back(euler_step_forward(traj.latents.back(), time, dt, field));
            traj.computed[t - 1] = 1;
        } else {
            traj.latents.push_back(traj.latents.back());
        }
    }
    traj.velocity_evals = field.eval_count - evals_before;
    return traj;
}

// =============================================================================
// Run results
// =============================================================================

struct SimilarityRow {
    int step = 0;  // compared against step - 1, the next executed step
    float self_attention = 0.0f;
    float cross_attention = 0.0f;
    float mlp = 0.0f;
};

struct StepFlops {
    int step = 0;
    uint64_t actual = 0;
};

struct Trajectory {
    InversionTrajectory inversion;
    std::vector<TokenGrid> denoise;  // [t] = latent entering step t; [0] = final
    std::vector<StepFlops> step_flops;
    int max_buffer_staleness = 0;  // executed steps, over all cache buffers
    bool diagnostic = false;
    // diagnostic only: module outputs indexed [step-1][layer][kind]
    std::vector<std::vector<std::array<TokenGrid, 3>>> module_outputs;
};

struct RunReport {
    uint64_t flops_full_equivalent = 0;
    uint64_t flops_actual = 0;
    double speedup_flops = 0.0;
    uint64_t velocity_evals_inversion = 0;
    int refresh_steps = 0;
    bool per_step_bg_exact = true;
    std::optional<double> fg_error_vs_reference;
    std::vector<int> refresh_step_ids;          // denoise steps executed as full refreshes
    std::vector<int> inversion_computed_steps;  // inversion steps that evaluated the field
    std::vector<SimilarityRow> similarity;      // diagnostic runs only
};

struct RunOptions {
    bool diagnostic = false;     // retain module outputs and emit the similarity table
    bool reference_run = false;  // also run the uncached full baseline and report the error
    bool disable_cache = false;  // bypass the cache entirely (full computation every step)
};

struct RunResult {
    TokenGrid final_latent;
    RunReport report;
    Trajectory trajectory;
};

// =============================================================================
// Helpers
// =============================================================================

inline uint64_t full_step_flops(const EditConfig& config) {
    const uint64_t n = static_cast<uint64_t>(config.total_tokens());
    uint64_t total = 0;
    for (ModuleKind kind : kModuleKinds)
        total += flops_of(kind, n, n, config.prompt_len, config.channels);
    return total * config.layers;
}

inline double relative_error(const TokenGrid& a, const TokenGrid& b) {
    double diff = 0.0;
    double norm = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        diff += d * d;
        norm += static_cast<double>(b.data[i]) * static_cast<double>(b.data[i]);
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-30);
}

namespace detail {

// Overwrites image tokens outside the mask with the matching inversion latent.
// Prompt tokens are never touched.
inline void blend_outside_mask(TokenGrid& latent, const TokenGrid& inversion_latent,
                               const EditMask& mask) {
    const int c = latent.channels;
    for (int i = 0; i < latent.image_tokens(); ++i)
        if (!mask.bits[i])
            std::copy_n(inversion_latent.token(i), c, latent.token(i));
}

inline bool outside_mask_equals(const TokenGrid& latent, const TokenGrid& inversion_latent,
                                const EditMask& mask) {
    const int c = latent.channels;
    for (int i = 0; i < latent.image_tokens(); ++i)
        if (!mask.bits[i] &&
            std::memcmp(latent.token(i), inversion_latent.token(i), sizeof(float) * c) != 0)
            return false;
    return true;
}

}  // namespace detail

// =============================================================================
// Denoising with spatial locality caching
// =============================================================================

// Runs the editing loop from Z_T down to Z_0: every step executes all layers
// and kinds through the cache, then re-imposes the inversion latent outside the
// edit region. Selections come from the plan when given, else from a live
// selector. Returns the trajectory; the caller reads the final latent from it.
inline Trajectory denoise(const EditConfig& config, const EditMask& mask,
                          const InversionTrajectory& inversion, const LayerStack& stack,
                          const IndexPlan* plan, const RunOptions& options, RunReport& report) {
    const RefreshSchedule schedule = config.refresh_schedule();
    const int n_total = config.total_tokens();

    ModuleContext ctx;
    ctx.stack = &stack;
    ctx.prompt_len = config.prompt_len;
    if (config.prompt_len > 0) {
        const TokenGrid& z0 = inversion.latents.front();
        ctx.prompt.assign(z0.token(z0.image_tokens()),
                          z0.token(z0.image_tokens()) + static_cast<size_t>(config.prompt_len) * config.channels);
    }

    CacheStore cache(config.layers, n_total, config.channels);
    std::optional<LiveSelector> live;
    if (plan == nullptr && !options.disable_cache)
        live.emplace(config.image_tokens(), config.layers, config.ratio, config.gamma, config.seed,
                     build_bonus(mask, config.bonus));
    if (plan != nullptr)
        check_plan_matches(*plan, config);

    Trajectory traj;
    traj.inversion = inversion;
    traj.diagnostic = options.diagnostic;
    traj.denoise.resize(config.steps + 1);
    traj.denoise[config.steps] = inversion.latents[config.steps];
    if (options.diagnostic)
        traj.module_outputs.resize(config.steps,
                                   std::vector<std::array<TokenGrid, 3>>(config.layers));

    FlopsCounter flops;
    size_t plan_cursor = 0;
    std::vector<int32_t> all_rows(n_total);
    std::iota(all_rows.begin(), all_rows.end(), 0);

    TokenGrid z = traj.denoise[config.steps];
    for (int step = config.steps; step >= 1; --step) {
        cache.begin_step();
        const bool refresh = is_refresh_step(schedule, step);
        if (refresh) {
            ++report.refresh_steps;
            report.refresh_step_ids.push_back(step);
        }
        const uint64_t step_flops_before = flops.actual;

        for (int layer = 0; layer < config.layers; ++layer) {
            for (ModuleKind kind : kModuleKinds) {
                if (options.disable_cache) {
                    const std::vector<float> fresh =
                        detail::run_module(kind, ctx, layer, step, z, all_rows);
                    z.data = fresh;
                    flops.actual += flops_of(kind, n_total, n_total, config.prompt_len, config.channels);
                } else {
                    ComputeMode mode = ComputeMode::full;
                    Selection selection;
                    if (!refresh) {
                        mode = config.policies.for_kind(kind) == KindPolicy::full_or_skip
                                   ? ComputeMode::skip
                                   : ComputeMode::partial;
                    }
                    const bool needs_entry = detail::kind_has_entry(config.policies, kind, refresh);
                    if (plan != nullptr && needs_entry) {
                        if (plan_cursor >= plan->entries.size())
                            throw state_error("plan exhausted before the schedule completed");
                        const PlanEntry& entry = plan->entries[plan_cursor++];
                        if (entry.kind != kind || entry.layer != layer || entry.step != step)
                            throw state_error("missing plan entry for the executed coordinate");
                        selection.indices = entry.indices;
                        selection.kind = kind;
                        selection.layer = layer;
                        selection.step = step;
                    } else if (live.has_value() && needs_entry) {
                        selection = live->next(kind, layer, step, refresh);
                    }
                    z = execute_module(kind, layer, step, z, mode,
                                       mode == ComputeMode::partial ? &selection : nullptr, cache,
                                       ctx, &flops);
                }
                if (options.diagnostic)
                    traj.module_outputs[step - 1][layer][static_cast<size_t>(kind)] = z;
            }
        }

        detail::blend_outside_mask(z, inversion.latents[step], mask);
        report.per_step_bg_exact =
            report.per_step_bg_exact && detail::outside_mask_equals(z, inversion.latents[step], mask);
        traj.denoise[step - 1] = z;
        traj.step_flops.push_back({step, flops.actual - step_flops_before});
        if (!options.disable_cache)
            traj.max_buffer_staleness = std::max(traj.max_buffer_staleness, cache.max_staleness());
    }

    if (plan != nullptr && plan_cursor != plan->entries.size())
        throw state_error("plan has entries beyond the executed schedule");
    report.flops_actual += flops.actual;
    return traj;
}

inline std::vector<SimilarityRow> similarity_table(const Trajectory& traj);

// =============================================================================
// End-to-end edit
// =============================================================================

inline RunResult run_edit(const EditConfig& config, const EditMask& mask, const RunOptions& options = {},
                          const TokenGrid* input_image = nullptr, const IndexPlan* plan = nullptr) {
    config.validate();
    if (mask.height != config.height || mask.width != config.width)
        throw std::invalid_argument("mask dimensions do not match config");
    if (mask.set_count() == 0)
        throw std::invalid_argument("edit mask must cover at least one token");

    TokenGrid z0 = make_grid(config.height, config.width, config.channels, config.prompt_len,
                             config.seed);
    if (input_image != nullptr) {
        if (input_image->height != config.height || input_image->width != config.width ||
            input_image->channels != config.channels)
            throw std::invalid_argument("input grid dimensions do not match config");
        std::copy_n(input_image->data.begin(),
                    static_cast<size_t>(z0.image_tokens()) * z0.channels, z0.data.begin());
    }

    IndexPlan built_plan;
    if (config.use_plan && plan == nullptr && !options.disable_cache) {
        built_plan = build_plan(config, mask);
        plan = &built_plan;
    }
    if (!config.use_plan && !options.disable_cache)
        plan = nullptr;

    RunResult result;
    const VelocityField field = config.field;  // local copy owns the eval counter
    const InversionTrajectory inversion = invert(z0, config, field);

    const LayerStack stack(config.layers, config.channels, config.seed);
    result.report.velocity_evals_inversion = inversion.velocity_evals;
    for (int t = 1; t <= config.steps; ++t)
        if (inversion.computed[t - 1])
            result.report.inversion_computed_steps.push_back(t);
    result.report.flops_actual = inversion.velocity_evals * full_step_flops(config);
    result.report.flops_full_equivalent =
        2ull * static_cast<uint64_t>(config.steps) * full_step_flops(config);

    result.trajectory = denoise(config, mask, inversion, stack,
                                options.disable_cache ? nullptr : plan, options, result.report);
    result.final_latent = result.trajectory.denoise[0];
    result.report.speedup_flops = static_cast<double>(result.report.flops_full_equivalent) /
                                  static_cast<double>(result.report.flops_actual);

    if (options.reference_run) {
        EditConfig ref_config = config;
        ref_config.skip_interval = 1;
        ref_config.ratio = 1.0f;
        ref_config.refresh_interval = 1;
        ref_config.use_plan = false;
        RunOptions ref_options;
        ref_options.disable_cache = true;
        const RunResult reference = run_edit(ref_config, mask, ref_options, input_image);
        result.report.fg_error_vs_reference =
            relative_error(result.final_latent, reference.final_latent);
    }

    if (options.diagnostic)
        result.report.similarity = similarity_table(result.trajectory);
    return result;
}

// =============================================================================
// Hidden-state similarity diagnostic
// =============================================================================

inline float cosine_similarity(const float* a, const float* b, int n) {
    float dot = 0.0f, na = 0.0f, nb = 0.0f;
    for (int i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    constexpr float eps = 1e-20f;
    if (na < eps && nb < eps)
        return 1.0f;
    if (na < eps || nb < eps)
        return 0.0f;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Per-kind cosine similarity of module outputs between consecutive steps,
// averaged over layers and tokens. Requires a diagnostic trajectory.
inline std::vector<SimilarityRow> similarity_table(const Trajectory& traj) {
    if (!traj.diagnostic)
        throw state_error("similarity table requires a diagnostic-mode trajectory");
    std::vector<SimilarityRow> rows;
    const int steps = static_cast<int>(traj.module_outputs.size());
    for (int step = steps; step >= 2; --step) {
        SimilarityRow row;
        row.step = step;
        for (ModuleKind kind : kModuleKinds) {
            double sum = 0.0;
            long count = 0;
            const auto& at_step = traj.module_outputs[step - 1];
            const auto& at_next = traj.module_outputs[step - 2];
            for (size_t layer = 0; layer < at_step.size(); ++layer) {
                const TokenGrid& a = at_step[layer][static_cast<size_t>(kind)];
                const TokenGrid& b = at_next[layer][static_cast<size_t>(kind)];
                for (int t = 0; t < a.total_tokens(); ++t) {
                    sum += cosine_similarity(a.token(t), b.token(t), a.channels);
                    ++count;
                }
            }
            const float mean = count > 0 ? static_cast<float>(sum / count) : 1.0f;
            switch (kind) {
                case ModuleKind::self_attention: row.self_attention = mean; break;
                case ModuleKind::cross_attention: row.cross_attention = mean; break;
                case ModuleKind::mlp: row.mlp = mean; break;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace eedit
