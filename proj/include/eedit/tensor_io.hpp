#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "eedit/errors.hpp"

namespace eedit {

// Binary tensor container. Layout: magic "EEDT", u32 version, u32 ndim,
// ndim x u64 dims, then product(dims) 32-bit floats. All integers and floats
// little-endian. Round trips are bit-exact.

inline constexpr char kTensorMagic[4] = {'E', 'E', 'D', 'T'};
inline constexpr uint32_t kTensorVersion = 1;

struct Tensor {
    std::vector<uint64_t> dims;
    std::vector<float> data;

    uint64_t element_count() const {
        uint64_t n = 1;
        for (uint64_t d : dims)
            n *= d;
        return dims.empty() ? 0 : n;
    }
};

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    if constexpr (std::is_same_v<T, float>) {
        uint32_t u = std::bit_cast<uint32_t>(value);
        for (size_t i = 0; i < 4; ++i)
            bytes[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    } else {
        auto u = static_cast<uint64_t>(value);
        for (size_t i = 0; i < sizeof(T); ++i)
            bytes[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        return false;
    uint64_t u = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        u |= static_cast<uint64_t>(bytes[i]) << (8 * i);
    if constexpr (std::is_same_v<T, float>) {
        value = std::bit_cast<float>(static_cast<uint32_t>(u));
    } else {
        value = static_cast<T>(u);
    }
    return true;
}

}  // namespace detail

inline void write_tensor(const Tensor& tensor, const std::string& path) {
    if (tensor.data.size() != tensor.element_count())
        throw std::invalid_argument("tensor payload does not match dims");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw format_error("cannot open for writing: " + path);
    out.write(kTensorMagic, 4);
    detail::write_le(out, kTensorVersion);
    detail::write_le(out, static_cast<uint32_t>(tensor.dims.size()));
    for (uint64_t d : tensor.dims)
        detail::write_le(out, d);
    for (float v : tensor.data)
        detail::write_le(out, v);
    if (!out)
        throw format_error("write failed: " + path);
}

inline Tensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw format_error("cannot open: " + path);
    char magic[4];
    if (!in.read(magic, 4))
        throw format_error("truncated header (magic): " + path);
    if (std::memcmp(magic, kTensorMagic, 4) != 0)
        throw format_error("bad magic: " + path);
    uint32_t version = 0;
    if (!detail::read_le(in, version))
        throw format_error("truncated header (version): " + path);
    if (version != kTensorVersion)
        throw format_error("unsupported tensor version " + std::to_string(version) + ": " + path);
    uint32_t ndim = 0;
    if (!detail::read_le(in, ndim))
        throw format_error("truncated header (ndim): " + path);
    if (ndim == 0 || ndim > 8)
        throw format_error("invalid ndim " + std::to_string(ndim) + ": " + path);

    Tensor tensor;
    tensor.dims.resize(ndim);
    for (uint32_t i = 0; i < ndim; ++i) {
        if (!detail::read_le(in, tensor.dims[i]))
            throw format_error("truncated header (dims): " + path);
        if (tensor.dims[i] == 0)
            throw format_error("zero dimension: " + path);
    }

    uint64_t count = tensor.element_count();
    tensor.data.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
        if (!detail::read_le(in, tensor.data[i]))
            throw format_error("truncated payload: " + path);
    }
    char extra;
    if (in.read(&extra, 1))
        throw format_error("trailing bytes after payload: " + path);
    return tensor;
}

}  // namespace eedit
