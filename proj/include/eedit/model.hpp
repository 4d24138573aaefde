#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "eedit/grid.hpp"
#include "eedit/prng.hpp"
#include "eedit/scoring.hpp"

namespace eedit {

// Desk-scale stand-in for a multimodal transformer stack. Parameters are seeded,
// value transforms are contractive, and the MLP nonlinearity keeps activations
// bounded across arbitrarily many steps.

struct AttentionParams {
    float temperature = 1.0f;
    std::vector<float> value_scale;  // per channel, in [0.7, 1.0)
};

struct MlpParams {
    std::vector<float> scale;  // per channel, in [0.6, 0.95)
    std::vector<float> mix;    // per channel, in [-0.15, 0.15)
    std::vector<float> bias;   // per channel, in [-0.1, 0.1)
    // step conditioning: the bias drifts smoothly across steps, so hidden
    // states keep moving instead of settling into a fixed point
    std::vector<float> bias_amp;    // per channel, in [0.1, 0.35)
    std::vector<float> bias_omega;  // per channel, in [0.15, 0.5)
    std::vector<float> bias_phase;  // per channel, in [0, 2*pi)

    float effective_bias(int channel, int step) const {
        return bias[channel] +
               bias_amp[channel] *
                   std::sin(bias_omega[channel] * static_cast<float>(step) + bias_phase[channel]);
    }
};

struct LayerParams {
    AttentionParams sa;
    AttentionParams ca;
    MlpParams mlp;
};

struct LayerStack {
    int layer_count = 0;
    int channels = 0;
    uint64_t seed = 0;
    std::vector<LayerParams> layers;

    LayerStack() = default;

    LayerStack(int layer_count_, int channels_, uint64_t seed_)
        : layer_count(layer_count_), channels(channels_), seed(seed_) {
        if (layer_count < 1 || channels < 1)
            throw std::invalid_argument("layer stack needs >= 1 layer and channel");
        layers.resize(layer_count);
        for (int l = 0; l < layer_count; ++l) {
            layers[l].sa = attention_params(ModuleKind::self_attention, l);
            layers[l].ca = attention_params(ModuleKind::cross_attention, l);
            layers[l].mlp = mlp_params(l);
        }
    }

  private:
    float param(ModuleKind kind, int layer, int id, int channel) const {
        return prng::unit_float(prng::stream64(seed, prng::Stream::stack_param,
                                               static_cast<uint64_t>(kind), layer, id, channel));
    }

    AttentionParams attention_params(ModuleKind kind, int layer) const {
        AttentionParams p;
        p.temperature = 0.5f + param(kind, layer, 0, 0);
        p.value_scale.resize(channels);
        for (int c = 0; c < channels; ++c)
            p.value_scale[c] = 0.7f + 0.3f * param(kind, layer, 1, c);
        return p;
    }

    MlpParams mlp_params(int layer) const {
        MlpParams p;
        p.scale.resize(channels);
        p.mix.resize(channels);
        p.bias.resize(channels);
        p.bias_amp.resize(channels);
        p.bias_omega.resize(channels);
        p.bias_phase.resize(channels);
        for (int c = 0; c < channels; ++c) {
            p.scale[c] = 0.6f + 0.35f * param(ModuleKind::mlp, layer, 2, c);
            p.mix[c] = (param(ModuleKind::mlp, layer, 3, c) - 0.5f) * 0.3f;
            p.bias[c] = (param(ModuleKind::mlp, layer, 4, c) - 0.5f) * 0.2f;
            p.bias_amp[c] = 0.1f + 0.25f * param(ModuleKind::mlp, layer, 5, c);
            p.bias_omega[c] = 0.15f + 0.35f * param(ModuleKind::mlp, layer, 6, c);
            p.bias_phase[c] = 6.2831853f * param(ModuleKind::mlp, layer, 7, c);
        }
        return p;
    }
};

namespace detail {

inline void check_layer(const LayerStack& stack, int layer, const TokenGrid& input) {
    if (layer < 0 || layer >= stack.layer_count)
        throw std::invalid_argument("layer index out of range");
    if (input.channels != stack.channels)
        throw std::invalid_argument("input channels do not match stack");
}

}  // namespace detail

// Similarity-weighted mixture over the whole sequence, evaluated at the given
// query rows. Returns rows.size() x C features in row order.
inline std::vector<float> self_attention(const LayerStack& stack, int layer, const TokenGrid& input,
                                         std::span<const int32_t> rows) {
    detail::check_layer(stack, layer, input);
    const AttentionParams& p = stack.layers[layer].sa;
    const int n = input.total_tokens();
    const int c = input.channels;
    const float inv_sqrt_c = 1.0f / std::sqrt(static_cast<float>(c));

    std::vector<float> out(rows.size() * static_cast<size_t>(c), 0.0f);
    std::vector<float> logits(n);
    for (size_t r = 0; r < rows.size(); ++r) {
        const float* q = input.token(rows[r]);
        float max_logit = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < n; ++j) {
            const float* k = input.token(j);
            float dot = 0.0f;
            for (int ch = 0; ch < c; ++ch)
                dot += q[ch] * k[ch];
            logits[j] = p.temperature * dot * inv_sqrt_c;
            max_logit = std::max(max_logit, logits[j]);
        }
        float denom = 0.0f;
        for (int j = 0; j < n; ++j) {
            logits[j] = std::exp(logits[j] - max_logit);
            denom += logits[j];
        }
        float* dst = out.data() + r * static_cast<size_t>(c);
        for (int j = 0; j < n; ++j) {
            const float w = logits[j] / denom;
            const float* v = input.token(j);
            for (int ch = 0; ch < c; ++ch)
                dst[ch] += w * p.value_scale[ch] * v[ch];
        }
    }
    return out;
}

// Per-token mixture with the (fixed) prompt conditioning. With no prompt tokens
// the mixture degenerates to the token's own value transform.
inline std::vector<float> cross_attention(const LayerStack& stack, int layer, const TokenGrid& input,
                                          const std::vector<float>& prompt, int prompt_len,
                                          std::span<const int32_t> rows) {
    detail::check_layer(stack, layer, input);
    const int c = input.channels;
    if (prompt_len > 0 && prompt.size() != static_cast<size_t>(prompt_len) * c)
        throw std::invalid_argument("prompt buffer does not match prompt_len");
    const AttentionParams& p = stack.layers[layer].ca;
    const float inv_sqrt_c = 1.0f / std::sqrt(static_cast<float>(c));

    std::vector<float> out(rows.size() * static_cast<size_t>(c), 0.0f);
    std::vector<float> logits(std::max(prompt_len, 1));
    for (size_t r = 0; r < rows.size(); ++r) {
        const float* q = input.token(rows[r]);
        float* dst = out.data() + r * static_cast<size_t>(c);
        if (prompt_len == 0) {
            for (int ch = 0; ch < c; ++ch)
                dst[ch] = p.value_scale[ch] * q[ch];
            continue;
        }
        float max_logit = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < prompt_len; ++j) {
            const float* k = prompt.data() + static_cast<size_t>(j) * c;
            float dot = 0.0f;
            for (int ch = 0; ch < c; ++ch)
                dot += q[ch] * k[ch];
            logits[j] = p.temperature * dot * inv_sqrt_c;
            max_logit = std::max(max_logit, logits[j]);
        }
        float denom = 0.0f;
        for (int j = 0; j < prompt_len; ++j) {
            logits[j] = std::exp(logits[j] - max_logit);
            denom += logits[j];
        }
        for (int j = 0; j < prompt_len; ++j) {
            const float w = logits[j] / denom;
            const float* v = prompt.data() + static_cast<size_t>(j) * c;
            for (int ch = 0; ch < c; ++ch)
                dst[ch] += w * p.value_scale[ch] * v[ch];
        }
    }
    return out;
}

// Per-token affine with channel mixing and a step-conditioned bias, squashed
// through tanh.
inline std::vector<float> mlp(const LayerStack& stack, int layer, const TokenGrid& input,
                              std::span<const int32_t> rows, int step) {
    detail::check_layer(stack, layer, input);
    const MlpParams& p = stack.layers[layer].mlp;
    const int c = input.channels;

    std::vector<float> out(rows.size() * static_cast<size_t>(c));
    std::vector<float> bias(c);
    for (int ch = 0; ch < c; ++ch)
        bias[ch] = p.effective_bias(ch, step);
    for (size_t r = 0; r < rows.size(); ++r) {
        const float* x = input.token(rows[r]);
        float mean = 0.0f;
        for (int ch = 0; ch < c; ++ch)
            mean += x[ch];
        mean /= static_cast<float>(c);
        float* dst = out.data() + r * static_cast<size_t>(c);
        for (int ch = 0; ch < c; ++ch)
            dst[ch] = std::tanh(p.scale[ch] * x[ch] + p.mix[ch] * mean + bias[ch]);
    }
    return out;
}

}  // namespace eedit
