#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "eedit/grid.hpp"

namespace eedit {

// Analytic velocity fields with closed-form flows, so integration error is
// measurable without any training. Sign convention: forward steps move data
// toward noise (the inversion direction), inverse steps move back toward data.

struct VelocityField {
    enum class Mode { constant, linear_contraction };

    Mode mode = Mode::constant;
    float value = 0.0f;   // constant: v = value everywhere
    float rate = 0.0f;    // linear_contraction: v = rate * (target - x)
    float target = 0.0f;
    mutable uint64_t eval_count = 0;  // velocity evaluations, for skip accounting

    static VelocityField constant(float value) {
        VelocityField field;
        field.mode = Mode::constant;
        field.value = value;
        return field;
    }

    // rate bounded so explicit Euler stays contractive for any dt <= 1/2
    static VelocityField linear_contraction(float rate, float target) {
        if (!(rate > 0.0f && rate <= 4.0f))
            throw std::invalid_argument("linear_contraction rate must be in (0, 4]");
        VelocityField field;
        field.mode = Mode::linear_contraction;
        field.rate = rate;
        field.target = target;
        return field;
    }

    float velocity_at(float x, float) const {
        return mode == Mode::constant ? value : rate * (target - x);
    }
};

// (1 - t) * data + t * noise, exact at both endpoints.
inline TokenGrid interpolate(const TokenGrid& data_state, const TokenGrid& noise_state, float t) {
    if (!data_state.same_shape(noise_state))
        throw std::invalid_argument("interpolate operands must share a shape");
    if (!(t >= 0.0f && t <= 1.0f))
        throw std::invalid_argument("interpolation time must be in [0, 1]");
    TokenGrid out = data_state;
    if (t == 0.0f)
        return out;
    if (t == 1.0f)
        return noise_state;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (1.0f - t) * data_state.data[i] + t * noise_state.data[i];
    return out;
}

inline TokenGrid euler_step_forward(const TokenGrid& x, float t, float dt, const VelocityField& field) {
    field.eval_count++;
    TokenGrid out = x;
    for (float& v : out.data)
        v += dt * field.velocity_at(v, t);
    return out;
}

inline TokenGrid euler_step_inverse(const TokenGrid& x, float t, float dt, const VelocityField& field) {
    field.eval_count++;
    TokenGrid out = x;
    for (float& v : out.data)
        v -= dt * field.velocity_at(v, t);
    return out;
}

}  // namespace eedit
