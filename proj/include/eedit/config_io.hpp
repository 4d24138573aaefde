#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "eedit/edit_config.hpp"
#include "eedit/pipeline.hpp"

namespace eedit {

using json = nlohmann::json;

// JSON configuration for the command-line tool: the edit parameters plus file
// paths and mode flags. Unknown keys are rejected; every violation names the
// offending path.

struct MaskRect {
    int row = 0;
    int col = 0;
    int height = 1;
    int width = 1;
};

struct CliConfig {
    EditConfig edit;
    std::optional<MaskRect> mask_rect;
    std::optional<std::string> input_path;
    std::optional<std::string> mask_path;
    std::optional<std::string> plan_path;
    std::optional<std::string> output_path;
    std::optional<std::string> report_path;
    bool diagnostic = false;
    bool reference_run = false;
};

namespace detail {

inline void check_keys(const json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw config_error(where + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
T field_or(const json& obj, const std::string& where, const char* key, T fallback) {
    if (!obj.contains(key))
        return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(where + "." + key + ": wrong type");
    }
}

inline std::optional<std::string> path_or_none(const json& obj, const std::string& where,
                                               const char* key) {
    if (!obj.contains(key) || obj.at(key).is_null())
        return std::nullopt;
    if (!obj.at(key).is_string())
        throw config_error(where + "." + key + ": expected a string path");
    return obj.at(key).get<std::string>();
}

}  // namespace detail

inline CliConfig config_from_json(const json& root) {
    if (!root.is_object())
        throw config_error("config: top level must be an object");
    detail::check_keys(root, "config",
                       {"grid", "layers", "steps", "skip_interval", "refresh_interval", "bonus",
                        "scoring", "policies", "use_plan", "field", "mask", "paths", "mode"});
    CliConfig cli;
    EditConfig& cfg = cli.edit;

    if (root.contains("grid")) {
        const json& grid = root.at("grid");
        detail::check_keys(grid, "grid", {"height", "width", "channels", "prompt_len"});
        cfg.height = detail::field_or(grid, "grid", "height", cfg.height);
        cfg.width = detail::field_or(grid, "grid", "width", cfg.width);
        cfg.channels = detail::field_or(grid, "grid", "channels", cfg.channels);
        cfg.prompt_len = detail::field_or(grid, "grid", "prompt_len", cfg.prompt_len);
    }
    cfg.layers = detail::field_or(root, "config", "layers", cfg.layers);
    cfg.steps = detail::field_or(root, "config", "steps", cfg.steps);
    cfg.skip_interval = detail::field_or(root, "config", "skip_interval", cfg.skip_interval);
    cfg.refresh_interval = detail::field_or(root, "config", "refresh_interval", cfg.refresh_interval);
    cfg.use_plan = detail::field_or(root, "config", "use_plan", cfg.use_plan);

    if (root.contains("bonus")) {
        const json& bonus = root.at("bonus");
        detail::check_keys(bonus, "bonus", {"factor", "decay", "max_depth"});
        cfg.bonus.factor = detail::field_or(bonus, "bonus", "factor", cfg.bonus.factor);
        cfg.bonus.decay = detail::field_or(bonus, "bonus", "decay", cfg.bonus.decay);
        cfg.bonus.max_depth = detail::field_or(bonus, "bonus", "max_depth", cfg.bonus.max_depth);
    }
    if (root.contains("scoring")) {
        const json& scoring = root.at("scoring");
        detail::check_keys(scoring, "scoring", {"ratio", "gamma", "seed"});
        cfg.ratio = detail::field_or(scoring, "scoring", "ratio", cfg.ratio);
        cfg.gamma = detail::field_or(scoring, "scoring", "gamma", cfg.gamma);
        cfg.seed = detail::field_or(scoring, "scoring", "seed", cfg.seed);
    }
    if (root.contains("policies")) {
        const json& policies = root.at("policies");
        detail::check_keys(policies, "policies", {"self_attention", "cross_attention", "mlp"});
        try {
            cfg.policies.self_attention = kind_policy_from_string(detail::field_or<std::string>(
                policies, "policies", "self_attention", to_string(cfg.policies.self_attention)));
            cfg.policies.cross_attention = kind_policy_from_string(detail::field_or<std::string>(
                policies, "policies", "cross_attention", to_string(cfg.policies.cross_attention)));
            cfg.policies.mlp = kind_policy_from_string(detail::field_or<std::string>(
                policies, "policies", "mlp", to_string(cfg.policies.mlp)));
        } catch (const std::invalid_argument& e) {
            throw config_error(std::string("policies: ") + e.what());
        }
    }
    if (root.contains("field")) {
        const json& field = root.at("field");
        detail::check_keys(field, "field", {"mode", "value", "rate", "target"});
        const std::string mode = detail::field_or<std::string>(field, "field", "mode", "linear_contraction");
        try {
            if (mode == "constant") {
                cfg.field = VelocityField::constant(detail::field_or(field, "field", "value", 0.0f));
            } else if (mode == "linear_contraction") {
                cfg.field = VelocityField::linear_contraction(
                    detail::field_or(field, "field", "rate", 1.5f),
                    detail::field_or(field, "field", "target", 0.0f));
            } else {
                throw config_error("field.mode: must be 'constant' or 'linear_contraction'");
            }
        } catch (const std::invalid_argument& e) {
            throw config_error(std::string("field: ") + e.what());
        }
    }
    if (root.contains("mask")) {
        const json& mask = root.at("mask");
        detail::check_keys(mask, "mask", {"rect"});
        if (mask.contains("rect")) {
            const json& rect = mask.at("rect");
            detail::check_keys(rect, "mask.rect", {"row", "col", "height", "width"});
            MaskRect r;
            r.row = detail::field_or(rect, "mask.rect", "row", 0);
            r.col = detail::field_or(rect, "mask.rect", "col", 0);
            r.height = detail::field_or(rect, "mask.rect", "height", 1);
            r.width = detail::field_or(rect, "mask.rect", "width", 1);
            if (r.height < 1 || r.width < 1 || r.row < 0 || r.col < 0 ||
                r.row + r.height > cfg.height || r.col + r.width > cfg.width)
                throw config_error("mask.rect: rectangle outside the token grid");
            cli.mask_rect = r;
        }
    }
    if (root.contains("paths")) {
        const json& paths = root.at("paths");
        detail::check_keys(paths, "paths", {"input", "mask", "plan", "output", "report"});
        cli.input_path = detail::path_or_none(paths, "paths", "input");
        cli.mask_path = detail::path_or_none(paths, "paths", "mask");
        cli.plan_path = detail::path_or_none(paths, "paths", "plan");
        cli.output_path = detail::path_or_none(paths, "paths", "output");
        cli.report_path = detail::path_or_none(paths, "paths", "report");
    }
    if (root.contains("mode")) {
        const json& mode = root.at("mode");
        detail::check_keys(mode, "mode", {"diagnostic", "reference_run"});
        cli.diagnostic = detail::field_or(mode, "mode", "diagnostic", false);
        cli.reference_run = detail::field_or(mode, "mode", "reference_run", false);
    }

    cfg.validate();
    return cli;
}

inline CliConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw config_error("cannot open config: " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw config_error(path + ": " + e.what());
    }
    return config_from_json(root);
}

// Mask precedence: explicit tensor file, then configured rectangle, then a
// centered quarter-size rectangle.
inline EditMask resolve_mask(const CliConfig& cli) {
    if (cli.mask_path.has_value())
        return mask_from_tensor(read_tensor(*cli.mask_path));
    EditMask mask = make_mask(cli.edit.height, cli.edit.width);
    MaskRect rect;
    if (cli.mask_rect.has_value()) {
        rect = *cli.mask_rect;
    } else {
        rect.height = std::max(1, cli.edit.height / 4);
        rect.width = std::max(1, cli.edit.width / 4);
        rect.row = (cli.edit.height - rect.height) / 2;
        rect.col = (cli.edit.width - rect.width) / 2;
    }
    for (int r = rect.row; r < rect.row + rect.height; ++r)
        for (int c = rect.col; c < rect.col + rect.width; ++c)
            mask.set(r, c, true);
    return mask;
}

// Normalized echo of the effective edit parameters (paths and modes excluded,
// so reports from plan-fed and live runs stay comparable).
inline json config_echo(const EditConfig& cfg) {
    json echo;
    echo["grid"] = {{"height", cfg.height},
                    {"width", cfg.width},
                    {"channels", cfg.channels},
                    {"prompt_len", cfg.prompt_len}};
    echo["layers"] = cfg.layers;
    echo["steps"] = cfg.steps;
    echo["skip_interval"] = cfg.skip_interval;
    echo["refresh_interval"] = cfg.refresh_interval;
    echo["bonus"] = {{"factor", cfg.bonus.factor},
                     {"decay", cfg.bonus.decay},
                     {"max_depth", cfg.bonus.max_depth}};
    echo["scoring"] = {{"ratio", cfg.ratio}, {"gamma", cfg.gamma}, {"seed", cfg.seed}};
    echo["policies"] = {{"self_attention", to_string(cfg.policies.self_attention)},
                        {"cross_attention", to_string(cfg.policies.cross_attention)},
                        {"mlp", to_string(cfg.policies.mlp)}};
    echo["use_plan"] = cfg.use_plan;
    if (cfg.field.mode == VelocityField::Mode::constant)
        echo["field"] = {{"mode", "constant"}, {"value", cfg.field.value}};
    else
        echo["field"] = {{"mode", "linear_contraction"},
                         {"rate", cfg.field.rate},
                         {"target", cfg.field.target}};
    return echo;
}

inline json report_to_json(const EditConfig& cfg, const RunReport& report, double total_ms) {
    json out;
    out["config"] = config_echo(cfg);
    out["flops_full_equivalent"] = report.flops_full_equivalent;
    out["flops_actual"] = report.flops_actual;
    out["speedup_flops"] = report.speedup_flops;
    out["velocity_evals_inversion"] = report.velocity_evals_inversion;
    out["refresh_steps"] = report.refresh_steps;
    out["per_step_bg_exact"] = report.per_step_bg_exact;
    out["schedule"] = {{"refresh_steps", report.refresh_step_ids},
                       {"inversion_computed_steps", report.inversion_computed_steps}};
    if (report.fg_error_vs_reference.has_value())
        out["fg_error_vs_reference"] = *report.fg_error_vs_reference;
    else
        out["fg_error_vs_reference"] = nullptr;
    if (!report.similarity.empty()) {
        json rows = json::array();
        for (const SimilarityRow& row : report.similarity)
            rows.push_back({{"step", row.step},
                            {"self_attention", row.self_attention},
                            {"cross_attention", row.cross_attention},
                            {"mlp", row.mlp}});
        out["similarity"] = rows;
    }
    out["timing"] = {{"total_ms", total_ms}};
    return out;
}

}  // namespace eedit
