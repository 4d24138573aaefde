#pragma once

#include <cstdint>

#include "eedit/bonus.hpp"
#include "eedit/cache.hpp"
#include "eedit/flow.hpp"

namespace eedit {

// Full description of one edit run. Together with the mask and the input seed
// this determines every output byte.
struct EditConfig {
    int height = 16;
    int width = 16;
    int channels = 16;
    int prompt_len = 8;

    int layers = 4;         // transformer depth L
    int steps = 28;         // denoise/inversion steps T
    int skip_interval = 3;  // inversion skip m; every m-th step is computed

    BonusParams bonus;
    float ratio = 0.25f;  // fraction of image tokens recomputed on partial steps
    float gamma = 1.0f;   // weight of the reuse counter in the score
    uint64_t seed = 7;

    int refresh_interval = 4;  // N_r
    KindPolicies policies;
    bool use_plan = false;

    VelocityField field = VelocityField::linear_contraction(1.5f, 0.0f);

    int image_tokens() const { return height * width; }
    int total_tokens() const { return height * width + prompt_len; }

    // First and last denoise steps are always fully computed so the cache starts
    // valid and the final latent is fresh.
    RefreshSchedule refresh_schedule() const {
        return make_refresh_schedule(steps, refresh_interval, {steps, 1});
    }

    void validate() const {
        if (height < 1 || width < 1 || channels < 1)
            throw config_error("grid: height, width, channels must be >= 1");
        if (prompt_len < 0)
            throw config_error("grid.prompt_len: must be >= 0");
        if (layers < 1)
            throw config_error("layers: must be >= 1");
        if (steps < 1)
            throw config_error("steps: must be >= 1");
        if (skip_interval < 1)
            throw config_error("skip_interval: must be >= 1");
        if (!(ratio > 0.0f && ratio <= 1.0f))
            throw config_error("scoring.ratio: must be in (0, 1]");
        if (!(gamma >= 0.0f))
            throw config_error("scoring.gamma: must be >= 0");
        if (refresh_interval < 1)
            throw config_error("refresh_interval: must be >= 1");
        try {
            bonus.validate();
        } catch (const std::invalid_argument& e) {
            throw config_error(std::string("bonus: ") + e.what());
        }
    }
};

}  // namespace eedit
