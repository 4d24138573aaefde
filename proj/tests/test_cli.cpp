#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "eedit/grid.hpp"
#include "eedit/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CommandResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cli_output.txt";
    const std::string command =
        "cd " + dir.string() + " && " + std::string(EEDIT_BIN) + " " + args + " > " +
        log.string() + " 2>&1";
    const int status = std::system(command.c_str());
    CommandResult result;
    result.exit_code = WEXITSTATUS(status);
    std::ifstream in(log);
    std::stringstream buf;
    buf << in.rdbuf();
    result.output = buf.str();
    return result;
}

fs::path make_workdir() {
    const fs::path dir = fs::temp_directory_path() / "eedit_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json base_config() {
    return json{
        {"grid", {{"height", 6}, {"width", 6}, {"channels", 6}, {"prompt_len", 2}}},
        {"layers", 2},
        {"steps", 10},
        {"skip_interval", 3},
        {"refresh_interval", 4},
        {"scoring", {{"ratio", 0.25}, {"gamma", 1.0}, {"seed", 17}}},
        {"mask", {{"rect", {{"row", 1}, {"col", 1}, {"height", 2}, {"width", 2}}}}},
    };
}

void write_json(const fs::path& path, const json& value) {
    std::ofstream out(path);
    out << value.dump(2) << "\n";
}

json strip_timing(json report) {
    report.erase("timing");
    return report;
}

}  // namespace

TEST_CASE("plan, verify and run round trip through the command line") {
    const fs::path dir = make_workdir();
    json config = base_config();
    config["use_plan"] = true;
    config["paths"] = {{"report", "report.json"}, {"output", "final.eet"}};
    write_json(dir / "config.json", config);

    const CommandResult planned = run_cli("plan --config config.json --out plan.eep", dir);
    INFO(planned.output);
    REQUIRE(planned.exit_code == 0);
    REQUIRE(fs::exists(dir / "plan.eep"));

    const CommandResult verified = run_cli("verify --config config.json", dir);
    INFO(verified.output);
    REQUIRE(verified.exit_code == 0);

    const CommandResult with_plan = run_cli("run --config config.json --plan plan.eep", dir);
    INFO(with_plan.output);
    REQUIRE(with_plan.exit_code == 0);
    REQUIRE(fs::exists(dir / "final.eet"));
    std::ifstream report_a_in(dir / "report.json");
    const json report_a = json::parse(report_a_in);

    const CommandResult without_plan = run_cli("run --config config.json", dir);
    INFO(without_plan.output);
    REQUIRE(without_plan.exit_code == 0);
    std::ifstream report_b_in(dir / "report.json");
    const json report_b = json::parse(report_b_in);

    REQUIRE(strip_timing(report_a) == strip_timing(report_b));
    REQUIRE(report_a.at("per_step_bg_exact").get<bool>());
    REQUIRE(report_a.at("speedup_flops").get<double>() > 1.0);

    // documented report schema
    for (const char* key :
         {"config", "flops_full_equivalent", "flops_actual", "speedup_flops",
          "velocity_evals_inversion", "refresh_steps", "per_step_bg_exact",
          "fg_error_vs_reference", "timing"})
        REQUIRE(report_a.contains(key));

    const CommandResult reported = run_cli("report --config config.json", dir);
    INFO(reported.output);
    REQUIRE(reported.exit_code == 0);
    REQUIRE(reported.output.find("speedup_flops") != std::string::npos);

    fs::remove_all(dir);
}

TEST_CASE("verify exits with the divergence code on a corrupted plan") {
    const fs::path dir = make_workdir();
    json config = base_config();
    write_json(dir / "config.json", config);

    REQUIRE(run_cli("plan --config config.json --out plan.eep", dir).exit_code == 0);

    // swap one selected index in a partial entry for an unselected one
    std::ifstream in(dir / "plan.eep");
    std::stringstream contents;
    contents << in.rdbuf();
    in.close();
    std::string text = contents.str();
    const size_t pos = text.find("entry sa 0 9 ");
    REQUIRE(pos != std::string::npos);
    const size_t line_end = text.find('\n', pos);
    std::string line = text.substr(pos, line_end - pos);
    std::istringstream fields(line);
    std::string word;
    std::vector<int> indices;
    for (int skip = 0; skip < 4 && fields >> word; ++skip) {}
    int idx = 0;
    while (fields >> idx)
        indices.push_back(idx);
    int replacement = 0;
    while (std::find(indices.begin(), indices.end(), replacement) != indices.end())
        ++replacement;
    indices.back() = replacement;
    std::sort(indices.begin(), indices.end());
    std::ostringstream rebuilt;
    rebuilt << "entry sa 0 9";
    for (int i : indices)
        rebuilt << ' ' << i;
    text.replace(pos, line_end - pos, rebuilt.str());
    std::ofstream out(dir / "plan.eep", std::ios::trunc);
    out << text;
    out.close();

    const CommandResult diverged = run_cli("verify --config config.json --plan plan.eep", dir);
    INFO(diverged.output);
    REQUIRE(diverged.exit_code == 3);
    REQUIRE(diverged.output.find("divergence") != std::string::npos);

    fs::remove_all(dir);
}

TEST_CASE("missing input files fail with the path in the message") {
    const fs::path dir = make_workdir();
    json config = base_config();
    config["paths"] = {{"input", "no_such_input.eet"}};
    write_json(dir / "config.json", config);

    const CommandResult result = run_cli("run --config config.json", dir);
    REQUIRE(result.exit_code == 2);
    REQUIRE(result.output.find("no_such_input.eet") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("unknown config keys are a usage error") {
    const fs::path dir = make_workdir();
    json config = base_config();
    config["typo_key"] = 1;
    write_json(dir / "config.json", config);
    const CommandResult result = run_cli("run --config config.json", dir);
    REQUIRE(result.exit_code == 1);
    REQUIRE(result.output.find("typo_key") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("seed override changes the output tensor") {
    const fs::path dir = make_workdir();
    json config = base_config();
    write_json(dir / "config.json", config);

    REQUIRE(run_cli("run --config config.json --out a.eet", dir).exit_code == 0);
    REQUIRE(run_cli("run --config config.json --out b.eet --seed 12345", dir).exit_code == 0);
    REQUIRE(run_cli("run --config config.json --out c.eet", dir).exit_code == 0);

    const eedit::Tensor a = eedit::read_tensor((dir / "a.eet").string());
    const eedit::Tensor b = eedit::read_tensor((dir / "b.eet").string());
    const eedit::Tensor c = eedit::read_tensor((dir / "c.eet").string());
    REQUIRE(a.data != b.data);
    REQUIRE(a.data == c.data);
    fs::remove_all(dir);
}

TEST_CASE("input tensors feed the run and the diagnostic csv is emitted") {
    const fs::path dir = make_workdir();

    const eedit::TokenGrid image = eedit::make_grid(6, 6, 6, 0, 555);
    eedit::write_tensor(eedit::grid_to_tensor(image), (dir / "input.eet").string());

    json config = base_config();
    config["paths"] = {{"input", "input.eet"}, {"report", "report.json"}};
    config["mode"] = {{"diagnostic", true}};
    write_json(dir / "config.json", config);

    const CommandResult ran = run_cli("run --config config.json --out edited.eet", dir);
    INFO(ran.output);
    REQUIRE(ran.exit_code == 0);

    const CommandResult reported = run_cli("report --config config.json --out similarity.csv", dir);
    INFO(reported.output);
    REQUIRE(reported.exit_code == 0);
    std::ifstream csv(dir / "similarity.csv");
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "step,self_attention,cross_attention,mlp");
    int rows = 0;
    std::string row;
    while (std::getline(csv, row))
        if (!row.empty())
            ++rows;
    REQUIRE(rows == 9);  // steps - 1

    fs::remove_all(dir);
}

TEST_CASE("dump-bonus writes the bonus map tensor") {
    const fs::path dir = make_workdir();
    write_json(dir / "config.json", base_config());
    const CommandResult result = run_cli("dump-bonus --config config.json --out bonus.eet", dir);
    INFO(result.output);
    REQUIRE(result.exit_code == 0);
    const eedit::Tensor bonus = eedit::read_tensor((dir / "bonus.eet").string());
    REQUIRE(bonus.dims == std::vector<uint64_t>{6, 6});
    int above_one = 0;
    for (float v : bonus.data) {
        REQUIRE(v >= 1.0f);
        above_one += v > 1.0f ? 1 : 0;
    }
    REQUIRE(above_one > 0);
    fs::remove_all(dir);
}
