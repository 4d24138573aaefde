#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eedit/edit_config.hpp"
#include "eedit/scoring.hpp"

namespace eedit {

// Offline token-index preprocessing: the whole selection simulation is run once
// up front and persisted, so the denoise loop only reads index lists. Entries
// appear in execution order -- steps descending, layers ascending, kinds in
// sa/ca/mlp order -- because the reuse counters thread through that order.

inline constexpr int kPlanVersion = 1;

struct PlanEntry {
    ModuleKind kind = ModuleKind::self_attention;
    int layer = 0;
    int step = 0;
    bool full = false;                // refresh step: indices cover every image token
    std::vector<int32_t> indices;     // ascending image-token indices
};

struct IndexPlan {
    int version = kPlanVersion;
    int height = 0;
    int width = 0;
    int channels = 0;
    int prompt_len = 0;
    int layers = 0;
    int steps = 0;
    float ratio = 1.0f;
    float gamma = 1.0f;
    uint64_t seed = 0;
    BonusParams bonus;
    int refresh_interval = 1;
    KindPolicies policies;
    std::vector<int> forced_full_steps;

    std::vector<PlanEntry> entries;

    int image_tokens() const { return height * width; }

    const PlanEntry* find(ModuleKind kind, int layer, int step) const {
        for (const PlanEntry& entry : entries)
            if (entry.kind == kind && entry.layer == layer && entry.step == step)
                return &entry;
        return nullptr;
    }
};

namespace detail {

// The executed (kind, layer) sequence for one step: full_or_skip kinds appear
// only on refresh steps.
inline bool kind_has_entry(const KindPolicies& policies, ModuleKind kind, bool refresh) {
    return refresh || policies.for_kind(kind) == KindPolicy::token_wise;
}

inline void copy_header_from_config(IndexPlan& plan, const EditConfig& config) {
    plan.height = config.height;
    plan.width = config.width;
    plan.channels = config.channels;
    plan.prompt_len = config.prompt_len;
    plan.layers = config.layers;
    plan.steps = config.steps;
    plan.ratio = config.ratio;
    plan.gamma = config.gamma;
    plan.seed = config.seed;
    plan.bonus = config.bonus;
    plan.refresh_interval = config.refresh_interval;
    plan.policies = config.policies;
    plan.forced_full_steps = config.refresh_schedule().forced_full_steps;
}

}  // namespace detail

// Simulate the selection process over every (kind, layer, step) the schedule
// will execute and record the outcome. Pure function of config and mask.
inline IndexPlan build_plan(const EditConfig& config, const EditMask& mask) {
    config.validate();
    if (mask.height != config.height || mask.width != config.width)
        throw std::invalid_argument("mask dimensions do not match config");
    if (mask.set_count() == 0)
        throw std::invalid_argument("edit mask must cover at least one token");

    IndexPlan plan;
    detail::copy_header_from_config(plan, config);

    const RefreshSchedule schedule = config.refresh_schedule();
    LiveSelector selector(config.image_tokens(), config.layers, config.ratio, config.gamma,
                          config.seed, build_bonus(mask, config.bonus));

    for (int step = config.steps; step >= 1; --step) {
        const bool refresh = is_refresh_step(schedule, step);
        for (int layer = 0; layer < config.layers; ++layer) {
            for (ModuleKind kind : kModuleKinds) {
                if (!detail::kind_has_entry(config.policies, kind, refresh))
                    continue;
                const Selection selection = selector.next(kind, layer, step, refresh);
                PlanEntry entry;
                entry.kind = kind;
                entry.layer = layer;
                entry.step = step;
                entry.full = refresh;
                entry.indices = selection.indices;
                plan.entries.push_back(std::move(entry));
            }
        }
    }
    return plan;
}

// =============================================================================
// Equivalence check
// =============================================================================

struct PlanCoordinate {
    ModuleKind kind = ModuleKind::self_attention;
    int layer = 0;
    int step = 0;
};

struct EquivalenceReport {
    bool equal = true;
    std::optional<PlanCoordinate> first_divergence;
};

// Steps a fresh live selector in pipeline order and compares every entry of the
// plan (the supplied one, or a freshly built one) with exact equality.
inline EquivalenceReport verify_equivalence(const EditConfig& config, const EditMask& mask,
                                            const IndexPlan* existing = nullptr) {
    const IndexPlan built = existing == nullptr ? build_plan(config, mask) : IndexPlan{};
    const IndexPlan& plan = existing == nullptr ? built : *existing;

    const RefreshSchedule schedule = config.refresh_schedule();
    LiveSelector selector(config.image_tokens(), config.layers, config.ratio, config.gamma,
                          config.seed, build_bonus(mask, config.bonus));

    EquivalenceReport report;
    size_t cursor = 0;
    for (int step = config.steps; step >= 1; --step) {
        const bool refresh = is_refresh_step(schedule, step);
        for (int layer = 0; layer < config.layers; ++layer) {
            for (ModuleKind kind : kModuleKinds) {
                if (!detail::kind_has_entry(config.policies, kind, refresh))
                    continue;
                const Selection live = selector.next(kind, layer, step, refresh);
                const bool in_range = cursor < plan.entries.size();
                const PlanEntry* entry = in_range ? &plan.entries[cursor] : nullptr;
                ++cursor;
                const bool matches = entry != nullptr && entry->kind == kind &&
                                     entry->layer == layer && entry->step == step &&
                                     entry->indices == live.indices;
                if (!matches) {
                    report.equal = false;
                    report.first_divergence = PlanCoordinate{kind, layer, step};
                    return report;
                }
            }
        }
    }
    if (cursor != plan.entries.size()) {
        const PlanEntry& extra = plan.entries[cursor];
        report.equal = false;
        report.first_divergence = PlanCoordinate{extra.kind, extra.layer, extra.step};
    }
    return report;
}

// =============================================================================
// Plan file format (text, human-diffable)
// =============================================================================
//
//   eedit-plan v1
//   height 16
//   ...header key-value lines...
//   entries 336
//   entry sa 0 28 0 1 2 ... 255
//
// Full entries carry the complete index list so a consumer needs no schedule
// arithmetic to interpret the file.

namespace detail {

inline std::string format_float(float value) {
    std::ostringstream out;
    out.precision(9);
    out << value;
    return out.str();
}

}  // namespace detail

inline void write_plan(const IndexPlan& plan, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw format_error("cannot open for writing: " + path);
    out << "eedit-plan v" << plan.version << "\n";
    out << "height " << plan.height << "\n";
    out << "width " << plan.width << "\n";
    out << "channels " << plan.channels << "\n";
    out << "prompt_len " << plan.prompt_len << "\n";
    out << "layers " << plan.layers << "\n";
    out << "steps " << plan.steps << "\n";
    out << "ratio " << detail::format_float(plan.ratio) << "\n";
    out << "gamma " << detail::format_float(plan.gamma) << "\n";
    out << "seed " << plan.seed << "\n";
    out << "bonus_factor " << detail::format_float(plan.bonus.factor) << "\n";
    out << "bonus_decay " << detail::format_float(plan.bonus.decay) << "\n";
    out << "bonus_max_depth " << plan.bonus.max_depth << "\n";
    out << "refresh_interval " << plan.refresh_interval << "\n";
    out << "policy_sa " << to_string(plan.policies.self_attention) << "\n";
    out << "policy_ca " << to_string(plan.policies.cross_attention) << "\n";
    out << "policy_mlp " << to_string(plan.policies.mlp) << "\n";
    out << "forced_full";
    for (int step : plan.forced_full_steps)
        out << ' ' << step;
    out << "\n";
    out << "entries " << plan.entries.size() << "\n";
    for (const PlanEntry& entry : plan.entries) {
        out << "entry " << to_string(entry.kind) << ' ' << entry.layer << ' ' << entry.step;
        for (int32_t i : entry.indices)
            out << ' ' << i;
        out << "\n";
    }
    if (!out)
        throw format_error("write failed: " + path);
}

namespace detail {

struct PlanParser {
    std::istream& in;
    const std::string& path;
    int line_no = 0;

    std::string next_line() {
        std::string line;
        if (!std::getline(in, line))
            throw format_error(path + ": unexpected end of file at line " + std::to_string(line_no + 1));
        ++line_no;
        return line;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw format_error(path + ":" + std::to_string(line_no) + ": " + what);
    }

    template <typename T>
    T value_of(const std::string& key) {
        const std::string line = next_line();
        std::istringstream fields(line);
        std::string name;
        fields >> name;
        if (name != key)
            fail("expected key '" + key + "', got '" + name + "'");
        T value{};
        if (!(fields >> value))
            fail("bad value for '" + key + "'");
        return value;
    }
};

}  // namespace detail

inline IndexPlan read_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw format_error("cannot open: " + path);
    detail::PlanParser parser{in, path};

    const std::string banner = parser.next_line();
    if (banner != "eedit-plan v1")
        throw format_error(path + ": not an eedit plan (version mismatch or bad banner)");

    IndexPlan plan;
    plan.version = kPlanVersion;
    plan.height = parser.value_of<int>("height");
    plan.width = parser.value_of<int>("width");
    plan.channels = parser.value_of<int>("channels");
    plan.prompt_len = parser.value_of<int>("prompt_len");
    plan.layers = parser.value_of<int>("layers");
    plan.steps = parser.value_of<int>("steps");
    plan.ratio = parser.value_of<float>("ratio");
    plan.gamma = parser.value_of<float>("gamma");
    plan.seed = parser.value_of<uint64_t>("seed");
    plan.bonus.factor = parser.value_of<float>("bonus_factor");
    plan.bonus.decay = parser.value_of<float>("bonus_decay");
    plan.bonus.max_depth = parser.value_of<int>("bonus_max_depth");
    plan.refresh_interval = parser.value_of<int>("refresh_interval");
    plan.policies.self_attention = kind_policy_from_string(parser.value_of<std::string>("policy_sa"));
    plan.policies.cross_attention = kind_policy_from_string(parser.value_of<std::string>("policy_ca"));
    plan.policies.mlp = kind_policy_from_string(parser.value_of<std::string>("policy_mlp"));

    {
        const std::string line = parser.next_line();
        std::istringstream fields(line);
        std::string name;
        fields >> name;
        if (name != "forced_full")
            parser.fail("expected key 'forced_full'");
        int step = 0;
        while (fields >> step)
            plan.forced_full_steps.push_back(step);
    }

    if (plan.height < 1 || plan.width < 1 || plan.channels < 1 || plan.prompt_len < 0 ||
        plan.layers < 1 || plan.steps < 1 || plan.refresh_interval < 1)
        throw format_error(path + ": header dimensions out of range");
    if (!(plan.ratio > 0.0f && plan.ratio <= 1.0f) || !(plan.gamma >= 0.0f))
        throw format_error(path + ": header scoring parameters out of range");

    const size_t declared = parser.value_of<size_t>("entries");

    // Reconstruct the expected execution order from the header and check each
    // entry against it; selections themselves are not recomputed here.
    RefreshSchedule schedule;
    schedule.first_step = plan.steps;
    schedule.interval = plan.refresh_interval;
    schedule.forced_full_steps = plan.forced_full_steps;
    const int n_image = plan.image_tokens();
    const int partial_len = partial_count(n_image, plan.ratio);

    for (int step = plan.steps; step >= 1; --step) {
        const bool refresh = is_refresh_step(schedule, step);
        for (int layer = 0; layer < plan.layers; ++layer) {
            for (ModuleKind kind : kModuleKinds) {
                if (!detail::kind_has_entry(plan.policies, kind, refresh))
                    continue;
                const std::string line = parser.next_line();
                std::istringstream fields(line);
                std::string name, kind_name;
                int layer_field = 0, step_field = 0;
                if (!(fields >> name >> kind_name >> layer_field >> step_field) || name != "entry")
                    parser.fail("malformed entry line");
                if (module_kind_from_string(kind_name) != kind || layer_field != layer ||
                    step_field != step)
                    parser.fail("entry out of execution order");
                PlanEntry entry;
                entry.kind = kind;
                entry.layer = layer;
                entry.step = step;
                entry.full = refresh;
                int32_t index = 0;
                int32_t prev = -1;
                while (fields >> index) {
                    if (index < 0 || index >= n_image)
                        parser.fail("index out of range");
                    if (index <= prev)
                        parser.fail("indices must be strictly ascending");
                    entry.indices.push_back(index);
                    prev = index;
                }
                const int expected_len = refresh ? n_image : partial_len;
                if (static_cast<int>(entry.indices.size()) != expected_len)
                    parser.fail("entry length does not match the schedule");
                plan.entries.push_back(std::move(entry));
            }
        }
    }
    if (plan.entries.size() != declared)
        throw format_error(path + ": entry count mismatch vs header");
    std::string trailing;
    if (std::getline(in, trailing) && !trailing.empty())
        throw format_error(path + ": trailing content after entries");
    return plan;
}

// A plan is usable for a run only if it was built for exactly this setup.
inline void check_plan_matches(const IndexPlan& plan, const EditConfig& config) {
    IndexPlan expected;
    detail::copy_header_from_config(expected, config);
    const bool header_ok =
        plan.height == expected.height && plan.width == expected.width &&
        plan.channels == expected.channels && plan.prompt_len == expected.prompt_len &&
        plan.layers == expected.layers && plan.steps == expected.steps &&
        plan.ratio == expected.ratio && plan.gamma == expected.gamma &&
        plan.seed == expected.seed && plan.bonus.factor == expected.bonus.factor &&
        plan.bonus.decay == expected.bonus.decay &&
        plan.bonus.max_depth == expected.bonus.max_depth &&
        plan.refresh_interval == expected.refresh_interval &&
        plan.policies.self_attention == expected.policies.self_attention &&
        plan.policies.cross_attention == expected.policies.cross_attention &&
        plan.policies.mlp == expected.policies.mlp &&
        plan.forced_full_steps == expected.forced_full_steps;
    if (!header_ok)
        throw state_error("index plan does not match the run configuration");
}

}  // namespace eedit
