#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "eedit/prng.hpp"
#include "eedit/tensor_io.hpp"

namespace eedit {

// Latent state over an H x W grid of C-channel tokens, optionally followed by
// P prompt tokens. Row-major, image tokens first.
struct TokenGrid {
    int height = 0;
    int width = 0;
    int channels = 0;
    int prompt_len = 0;
    std::vector<float> data;  // (H*W + P) x C

    int image_tokens() const { return height * width; }
    int total_tokens() const { return height * width + prompt_len; }

    float* token(int i) { return data.data() + static_cast<size_t>(i) * channels; }
    const float* token(int i) const { return data.data() + static_cast<size_t>(i) * channels; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v))
                return false;
        return true;
    }

    bool same_shape(const TokenGrid& other) const {
        return height == other.height && width == other.width &&
               channels == other.channels && prompt_len == other.prompt_len;
    }
};

// Boolean edit region over image tokens. Prompt tokens are never covered.
struct EditMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;  // H*W, nonzero = inside edit region

    bool at(int row, int col) const { return bits[static_cast<size_t>(row) * width + col] != 0; }
    void set(int row, int col, bool value) { bits[static_cast<size_t>(row) * width + col] = value ? 1 : 0; }

    int set_count() const {
        int n = 0;
        for (uint8_t b : bits)
            n += b ? 1 : 0;
        return n;
    }
};

inline EditMask make_mask(int height, int width) {
    if (height < 1 || width < 1)
        throw std::invalid_argument("mask dimensions must be >= 1");
    EditMask mask;
    mask.height = height;
    mask.width = width;
    mask.bits.assign(static_cast<size_t>(height) * width, 0);
    return mask;
}

// Deterministic synthetic latent: uniform [-1, 1) values, a pure function of the
// arguments. Stands in for the encoded image plus prompt embedding.
inline TokenGrid make_grid(int height, int width, int channels, int prompt_len, uint64_t seed) {
    if (height < 1 || width < 1 || channels < 1)
        throw std::invalid_argument("grid dimensions must be >= 1");
    if (prompt_len < 0)
        throw std::invalid_argument("prompt_len must be >= 0");

    TokenGrid grid;
    grid.height = height;
    grid.width = width;
    grid.channels = channels;
    grid.prompt_len = prompt_len;
    grid.data.resize(static_cast<size_t>(grid.total_tokens()) * channels);

    const int image = grid.image_tokens();
    for (int t = 0; t < image; ++t)
        for (int c = 0; c < channels; ++c)
            grid.data[static_cast<size_t>(t) * channels + c] =
                prng::symmetric_float(prng::stream64(seed, prng::Stream::grid_image, t, c));
    for (int p = 0; p < prompt_len; ++p)
        for (int c = 0; c < channels; ++c)
            grid.data[static_cast<size_t>(image + p) * channels + c] =
                prng::symmetric_float(prng::stream64(seed, prng::Stream::grid_prompt, p, c));
    return grid;
}

// Pixel mask -> token mask at the given patch size. A token is inside the edit
// region iff any pixel of its patch is.
inline EditMask rasterize_mask(const EditMask& pixel_mask, int patch) {
    if (patch < 1)
        throw std::invalid_argument("patch must be >= 1");
    if (pixel_mask.height % patch != 0 || pixel_mask.width % patch != 0)
        throw std::invalid_argument("pixel mask dimensions must be divisible by patch");

    EditMask token_mask = make_mask(pixel_mask.height / patch, pixel_mask.width / patch);
    for (int row = 0; row < pixel_mask.height; ++row)
        for (int col = 0; col < pixel_mask.width; ++col)
            if (pixel_mask.at(row, col))
                token_mask.set(row / patch, col / patch, true);
    return token_mask;
}

// Tensor conversions. Grids serialize their image tokens as [H, W, C]; prompt
// tokens are regenerated from the seed, never stored. Masks serialize as
// [H, W] with values exactly 0.0 or 1.0.

inline Tensor grid_to_tensor(const TokenGrid& grid) {
    Tensor tensor;
    tensor.dims = {static_cast<uint64_t>(grid.height), static_cast<uint64_t>(grid.width),
                   static_cast<uint64_t>(grid.channels)};
    tensor.data.assign(grid.data.begin(),
                       grid.data.begin() + static_cast<size_t>(grid.image_tokens()) * grid.channels);
    return tensor;
}

inline TokenGrid grid_from_tensor(const Tensor& tensor) {
    if (tensor.dims.size() != 3)
        throw format_error("grid tensor must have 3 dims [height, width, channels]");
    TokenGrid grid;
    grid.height = static_cast<int>(tensor.dims[0]);
    grid.width = static_cast<int>(tensor.dims[1]);
    grid.channels = static_cast<int>(tensor.dims[2]);
    grid.prompt_len = 0;
    grid.data = tensor.data;
    return grid;
}

inline Tensor mask_to_tensor(const EditMask& mask) {
    Tensor tensor;
    tensor.dims = {static_cast<uint64_t>(mask.height), static_cast<uint64_t>(mask.width)};
    tensor.data.resize(mask.bits.size());
    for (size_t i = 0; i < mask.bits.size(); ++i)
        tensor.data[i] = mask.bits[i] ? 1.0f : 0.0f;
    return tensor;
}

inline EditMask mask_from_tensor(const Tensor& tensor) {
    if (tensor.dims.size() != 2)
        throw format_error("mask tensor must have 2 dims [height, width]");
    EditMask mask = make_mask(static_cast<int>(tensor.dims[0]), static_cast<int>(tensor.dims[1]));
    for (size_t i = 0; i < tensor.data.size(); ++i) {
        if (tensor.data[i] == 0.0f)
            mask.bits[i] = 0;
        else if (tensor.data[i] == 1.0f)
            mask.bits[i] = 1;
        else
            throw format_error("mask tensor values must be exactly 0.0 or 1.0");
    }
    return mask;
}

}  // namespace eedit
