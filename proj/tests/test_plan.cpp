#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "eedit/plan.hpp"

using namespace eedit;

namespace {

EditConfig small_config() {
    EditConfig config;
    config.height = 4;
    config.width = 4;
    config.channels = 4;
    config.prompt_len = 2;
    config.layers = 2;
    config.steps = 4;
    config.ratio = 0.5f;
    config.gamma = 1.0f;
    config.seed = 7;
    config.refresh_interval = 2;
    return config;
}

EditMask center_mask(int h, int w) {
    EditMask mask = make_mask(h, w);
    mask.set(h / 2, w / 2, true);
    return mask;
}

std::filesystem::path temp_plan(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("eedit_plan_" + name);
}

}  // namespace

TEST_CASE("ratio one records the full index list everywhere") {
    EditConfig config = small_config();
    config.ratio = 1.0f;
    const IndexPlan plan = build_plan(config, center_mask(4, 4));

    std::vector<int32_t> everything(config.image_tokens());
    std::iota(everything.begin(), everything.end(), 0);
    REQUIRE_FALSE(plan.entries.empty());
    for (const PlanEntry& entry : plan.entries)
        REQUIRE(entry.indices == everything);
}

TEST_CASE("plan entries equal a live selector stepped in pipeline order") {
    const EditConfig config = small_config();
    const EditMask mask = center_mask(4, 4);
    const IndexPlan plan = build_plan(config, mask);

    const RefreshSchedule schedule = config.refresh_schedule();
    LiveSelector live(config.image_tokens(), config.layers, config.ratio, config.gamma, config.seed,
                      build_bonus(mask, config.bonus));
    size_t cursor = 0;
    for (int step = config.steps; step >= 1; --step) {
        const bool refresh = is_refresh_step(schedule, step);
        for (int layer = 0; layer < config.layers; ++layer) {
            for (ModuleKind kind : kModuleKinds) {
                if (!refresh && config.policies.for_kind(kind) == KindPolicy::full_or_skip)
                    continue;
                const Selection online = live.next(kind, layer, step, refresh);
                REQUIRE(cursor < plan.entries.size());
                const PlanEntry& entry = plan.entries[cursor++];
                REQUIRE(entry.kind == kind);
                REQUIRE(entry.layer == layer);
                REQUIRE(entry.step == step);
                REQUIRE(entry.full == refresh);
                REQUIRE(entry.indices == online.indices);
            }
        }
    }
    REQUIRE(cursor == plan.entries.size());
}

TEST_CASE("changing only the seed changes the plan") {
    const EditConfig base = small_config();
    const EditMask mask = center_mask(4, 4);
    const IndexPlan original = build_plan(base, mask);
    for (uint64_t seed = 100; seed < 120; ++seed) {
        EditConfig config = base;
        config.seed = seed;
        const IndexPlan other = build_plan(config, mask);
        bool any_difference = false;
        for (size_t i = 0; i < original.entries.size() && !any_difference; ++i)
            any_difference = original.entries[i].indices != other.entries[i].indices;
        REQUIRE(any_difference);
    }
}

TEST_CASE("offline and online selections are equivalent across random configs") {
    std::mt19937 rng(41);
    const float ratios[] = {0.1f, 0.25f, 0.5f, 1.0f};
    const float gammas[] = {0.0f, 0.5f, 1.0f};
    for (int trial = 0; trial < 30; ++trial) {
        EditConfig config;
        config.height = 1 + static_cast<int>(rng() % 8);
        config.width = 1 + static_cast<int>(rng() % 8);
        config.channels = 4;
        config.prompt_len = static_cast<int>(rng() % 3);
        config.layers = 1 + static_cast<int>(rng() % 4);
        config.steps = 1 + static_cast<int>(rng() % 16);
        config.ratio = ratios[rng() % 4];
        config.gamma = gammas[rng() % 3];
        config.seed = rng();
        config.refresh_interval = 1 + static_cast<int>(rng() % 6);

        EditMask mask = make_mask(config.height, config.width);
        mask.bits[rng() % mask.bits.size()] = 1;

        const EquivalenceReport report = verify_equivalence(config, mask);
        INFO("trial " << trial);
        REQUIRE(report.equal);
        REQUIRE_FALSE(report.first_divergence.has_value());
    }
}

TEST_CASE("equivalence holds under heavy score ties") {
    EditConfig config = small_config();
    config.gamma = 0.0f;
    EditMask everything = make_mask(config.height, config.width);
    for (auto& bit : everything.bits)
        bit = 1;  // constant bonus, gamma off: scores tie whenever randoms tie
    REQUIRE(verify_equivalence(config, everything).equal);
}

TEST_CASE("a corrupted plan is reported with its first divergence") {
    const EditConfig config = small_config();
    const EditMask mask = center_mask(4, 4);
    IndexPlan plan = build_plan(config, mask);

    // find a partial entry and swap one index for an unused one
    for (PlanEntry& entry : plan.entries) {
        if (entry.full)
            continue;
        std::vector<uint8_t> used(config.image_tokens(), 0);
        for (int32_t i : entry.indices)
            used[i] = 1;
        for (int32_t candidate = 0; candidate < config.image_tokens(); ++candidate) {
            if (!used[candidate]) {
                entry.indices.back() = candidate;
                std::sort(entry.indices.begin(), entry.indices.end());
                break;
            }
        }
        const EquivalenceReport report = verify_equivalence(config, mask, &plan);
        REQUIRE_FALSE(report.equal);
        REQUIRE(report.first_divergence.has_value());
        REQUIRE(report.first_divergence->kind == entry.kind);
        REQUIRE(report.first_divergence->layer == entry.layer);
        REQUIRE(report.first_divergence->step == entry.step);
        break;
    }
}

TEST_CASE("plans round trip through the text format") {
    const EditConfig config = small_config();
    const EditMask mask = center_mask(4, 4);
    const IndexPlan plan = build_plan(config, mask);
    const auto path = temp_plan("roundtrip.eep");
    write_plan(plan, path.string());
    const IndexPlan back = read_plan(path.string());

    REQUIRE(back.height == plan.height);
    REQUIRE(back.width == plan.width);
    REQUIRE(back.ratio == plan.ratio);
    REQUIRE(back.gamma == plan.gamma);
    REQUIRE(back.seed == plan.seed);
    REQUIRE(back.forced_full_steps == plan.forced_full_steps);
    REQUIRE(back.entries.size() == plan.entries.size());
    for (size_t i = 0; i < plan.entries.size(); ++i) {
        REQUIRE(back.entries[i].kind == plan.entries[i].kind);
        REQUIRE(back.entries[i].layer == plan.entries[i].layer);
        REQUIRE(back.entries[i].step == plan.entries[i].step);
        REQUIRE(back.entries[i].full == plan.entries[i].full);
        REQUIRE(back.entries[i].indices == plan.entries[i].indices);
    }
    REQUIRE(verify_equivalence(config, mask, &back).equal);
    std::filesystem::remove(path);
}

TEST_CASE("a desk-scale plan loads quickly") {
    EditConfig config;
    config.height = 16;
    config.width = 16;
    config.layers = 4;
    config.steps = 28;
    const IndexPlan plan = build_plan(config, center_mask(16, 16));
    const auto path = temp_plan("deskscale.eep");
    write_plan(plan, path.string());

    const auto started = std::chrono::steady_clock::now();
    const IndexPlan loaded = read_plan(path.string());
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    REQUIRE(loaded.entries.size() == plan.entries.size());
    REQUIRE(ms < 50.0);
    std::filesystem::remove(path);
}

TEST_CASE("plan files are validated on read") {
    const EditConfig config = small_config();
    const EditMask mask = center_mask(4, 4);
    const IndexPlan plan = build_plan(config, mask);
    const auto path = temp_plan("tampered.eep");

    auto rewrite = [&](auto mutate) {
        write_plan(plan, path.string());
        std::ifstream in(path);
        std::stringstream contents;
        contents << in.rdbuf();
        in.close();
        std::string text = contents.str();
        mutate(text);
        std::ofstream out(path, std::ios::trunc);
        out << text;
    };

    SECTION("banner / version mismatch") {
        rewrite([](std::string& text) { text.replace(text.find("v1"), 2, "v9"); });
        REQUIRE_THROWS_AS(read_plan(path.string()), format_error);
    }

    SECTION("entry count mismatch vs header") {
        rewrite([&](std::string& text) {
            const std::string needle = "entries " + std::to_string(plan.entries.size());
            text.replace(text.find(needle), needle.size(),
                         "entries " + std::to_string(plan.entries.size() + 3));
        });
        REQUIRE_THROWS_AS(read_plan(path.string()), format_error);
    }

    SECTION("truncated entries") {
        rewrite([](std::string& text) {
            const size_t last_entry = text.rfind("entry ");
            text.erase(last_entry);
        });
        REQUIRE_THROWS_AS(read_plan(path.string()), format_error);
    }

    SECTION("non-ascending indices") {
        rewrite([](std::string& text) {
            const size_t pos = text.find("entry sa 0 4 0 1");
            REQUIRE(pos != std::string::npos);
            text.replace(pos, 16, "entry sa 0 4 1 0");
        });
        REQUIRE_THROWS_AS(read_plan(path.string()), format_error);
    }

    std::filesystem::remove(path);
}

TEST_CASE("plans are rejected for mismatched runs") {
    const EditConfig config = small_config();
    const IndexPlan plan = build_plan(config, center_mask(4, 4));
    EditConfig other = config;
    other.seed = 1234;
    REQUIRE_THROWS_AS(check_plan_matches(plan, other), state_error);
    REQUIRE_NOTHROW(check_plan_matches(plan, config));
}

TEST_CASE("empty masks are rejected by the planner") {
    REQUIRE_THROWS_AS(build_plan(small_config(), make_mask(4, 4)), std::invalid_argument);
}
