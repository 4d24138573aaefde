#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "eedit/eedit.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitDivergence = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::string plan_path;
    std::optional<uint64_t> seed_override;
    bool diagnostic = false;
};

eedit::CliConfig load(const CommonArgs& args) {
    eedit::CliConfig cli = eedit::load_config(args.config_path);
    if (args.seed_override.has_value())
        cli.edit.seed = *args.seed_override;
    if (args.diagnostic)
        cli.diagnostic = true;
    if (!args.plan_path.empty())
        cli.plan_path = args.plan_path;
    return cli;
}

std::optional<eedit::TokenGrid> load_input(const eedit::CliConfig& cli) {
    if (!cli.input_path.has_value())
        return std::nullopt;
    return eedit::grid_from_tensor(eedit::read_tensor(*cli.input_path));
}

int cmd_plan(const CommonArgs& args) {
    const eedit::CliConfig cli = load(args);
    const eedit::EditMask mask = eedit::resolve_mask(cli);
    const eedit::IndexPlan plan = eedit::build_plan(cli.edit, mask);

    std::string out = args.out_path;
    if (out.empty() && cli.plan_path.has_value())
        out = *cli.plan_path;
    if (out.empty())
        throw eedit::config_error("plan output path missing (use --out or paths.plan)");
    eedit::write_plan(plan, out);
    std::cout << "plan written: " << out << " (" << plan.entries.size() << " entries)\n";
    return kExitOk;
}

int cmd_verify(const CommonArgs& args) {
    const eedit::CliConfig cli = load(args);
    const eedit::EditMask mask = eedit::resolve_mask(cli);

    eedit::EquivalenceReport report;
    if (cli.plan_path.has_value()) {
        const eedit::IndexPlan plan = eedit::read_plan(*cli.plan_path);
        report = eedit::verify_equivalence(cli.edit, mask, &plan);
    } else {
        report = eedit::verify_equivalence(cli.edit, mask);
    }
    if (report.equal) {
        std::cout << "equivalent: offline plan matches online selection at every coordinate\n";
        return kExitOk;
    }
    const eedit::PlanCoordinate& at = *report.first_divergence;
    std::cout << "divergence at kind=" << eedit::to_string(at.kind) << " layer=" << at.layer
              << " step=" << at.step << "\n";
    return kExitDivergence;
}

int cmd_run(const CommonArgs& args, bool reference_flag) {
    const auto started = std::chrono::steady_clock::now();
    const eedit::CliConfig cli = load(args);
    const eedit::EditMask mask = eedit::resolve_mask(cli);
    const std::optional<eedit::TokenGrid> input = load_input(cli);

    eedit::IndexPlan plan;
    const eedit::IndexPlan* plan_ptr = nullptr;
    if (cli.edit.use_plan && cli.plan_path.has_value()) {
        plan = eedit::read_plan(*cli.plan_path);
        plan_ptr = &plan;
    }

    eedit::RunOptions options;
    options.diagnostic = cli.diagnostic;
    options.reference_run = cli.reference_run || reference_flag;

    const eedit::RunResult result = eedit::run_edit(cli.edit, mask, options,
                                                    input.has_value() ? &*input : nullptr, plan_ptr);

    std::string out = args.out_path;
    if (out.empty() && cli.output_path.has_value())
        out = *cli.output_path;
    if (!out.empty())
        eedit::write_tensor(eedit::grid_to_tensor(result.final_latent), out);

    const double total_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    const eedit::json report = eedit::report_to_json(cli.edit, result.report, total_ms);
    if (cli.report_path.has_value()) {
        std::ofstream report_out(*cli.report_path);
        if (!report_out)
            throw eedit::format_error("cannot open for writing: " + *cli.report_path);
        report_out << report.dump(2) << "\n";
    }

    std::cout << "speedup_flops: " << result.report.speedup_flops << "\n"
              << "velocity_evals_inversion: " << result.report.velocity_evals_inversion << "\n"
              << "refresh_steps: " << result.report.refresh_steps << "\n"
              << "per_step_bg_exact: " << (result.report.per_step_bg_exact ? "true" : "false") << "\n";
    if (result.report.fg_error_vs_reference.has_value())
        std::cout << "fg_error_vs_reference: " << *result.report.fg_error_vs_reference << "\n";
    if (!out.empty())
        std::cout << "latent written: " << out << "\n";
    if (cli.report_path.has_value())
        std::cout << "report written: " << *cli.report_path << "\n";
    return kExitOk;
}

int cmd_report(const CommonArgs& args) {
    const eedit::CliConfig cli = load(args);
    if (!cli.report_path.has_value())
        throw eedit::config_error("paths.report missing; nothing to read");
    std::ifstream in(*cli.report_path);
    if (!in)
        throw eedit::format_error("cannot open: " + *cli.report_path);
    eedit::json report;
    try {
        report = eedit::json::parse(in);
    } catch (const eedit::json::parse_error& e) {
        throw eedit::format_error(*cli.report_path + ": " + e.what());
    }

    const auto full = report.at("flops_full_equivalent").get<uint64_t>();
    const auto actual = report.at("flops_actual").get<uint64_t>();
    std::cout << "flops_full_equivalent: " << full << "\n"
              << "flops_actual:          " << actual << "\n"
              << "speedup_flops:         "
              << (actual > 0 ? static_cast<double>(full) / static_cast<double>(actual) : 0.0) << "\n"
              << "velocity_evals_inversion: " << report.at("velocity_evals_inversion") << "\n"
              << "refresh_steps:         " << report.at("refresh_steps") << "\n"
              << "per_step_bg_exact:     " << report.at("per_step_bg_exact") << "\n"
              << "fg_error_vs_reference: " << report.at("fg_error_vs_reference") << "\n";

    if (!args.out_path.empty()) {
        if (!report.contains("similarity"))
            throw eedit::state_error("report has no similarity table (run with --diagnostic)");
        std::ofstream csv(args.out_path);
        if (!csv)
            throw eedit::format_error("cannot open for writing: " + args.out_path);
        csv << "step,self_attention,cross_attention,mlp\n";
        for (const auto& row : report.at("similarity"))
            csv << row.at("step").get<int>() << ',' << row.at("self_attention").get<float>() << ','
                << row.at("cross_attention").get<float>() << ',' << row.at("mlp").get<float>() << "\n";
        std::cout << "similarity csv written: " << args.out_path << "\n";
    }
    return kExitOk;
}

int cmd_dump_bonus(const CommonArgs& args) {
    const eedit::CliConfig cli = load(args);
    if (args.out_path.empty())
        throw eedit::config_error("dump-bonus needs --out");
    const eedit::EditMask mask = eedit::resolve_mask(cli);
    const eedit::BonusMap bonus = eedit::build_bonus(mask, cli.edit.bonus);
    eedit::Tensor tensor;
    tensor.dims = {static_cast<uint64_t>(bonus.height), static_cast<uint64_t>(bonus.width)};
    tensor.data = bonus.values;
    eedit::write_tensor(tensor, args.out_path);
    std::cout << "bonus map written: " << args.out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"eedit: token-wise cached editing engine over a synthetic layer stack"};
    app.require_subcommand(1);

    CommonArgs args;
    uint64_t seed_value = 0;
    bool reference_flag = false;

    auto add_common = [&](CLI::App* cmd, bool config_required = true) {
        auto* config = cmd->add_option("--config", args.config_path, "JSON configuration file");
        if (config_required)
            config->required();
        cmd->add_option("--out", args.out_path, "output path");
        cmd->add_option("--plan", args.plan_path, "index plan path (overrides paths.plan)");
        cmd->add_option("--seed", seed_value, "seed override")
            ->each([&](const std::string&) { args.seed_override = seed_value; });
        cmd->add_flag("--diagnostic", args.diagnostic, "retain module outputs and emit similarity data");
    };

    CLI::App* plan_cmd = app.add_subcommand("plan", "precompute token selections and write the plan");
    add_common(plan_cmd);
    CLI::App* verify_cmd =
        app.add_subcommand("verify", "check offline/online selection equivalence");
    add_common(verify_cmd);
    CLI::App* run_cmd = app.add_subcommand("run", "run the full edit pipeline");
    add_common(run_cmd);
    run_cmd->add_flag("--reference", reference_flag,
                      "also run the uncached baseline and report the relative error");
    CLI::App* report_cmd = app.add_subcommand("report", "pretty-print a run report");
    add_common(report_cmd);
    CLI::App* dump_cmd = app.add_subcommand("dump-bonus", "write the bonus map as a tensor");
    add_common(dump_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (plan_cmd->parsed())
            return cmd_plan(args);
        if (verify_cmd->parsed())
            return cmd_verify(args);
        if (run_cmd->parsed())
            return cmd_run(args, reference_flag);
        if (report_cmd->parsed())
            return cmd_report(args);
        if (dump_cmd->parsed())
            return cmd_dump_bonus(args);
    } catch (const eedit::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
