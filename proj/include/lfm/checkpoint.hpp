#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "lfm/nn.hpp"

namespace lfm {

// Flat little-endian container of (name, shape, raw scalars) records.
// Layout: "LFMC" | version u8 | dtype u8 (0=f32, 1=f64) | count u32 |
// records, each: name_len u16 | name | rank u8 | extents u32[rank] | payload.
// Round trip is bit-exact; values are written as raw IEEE-754 bytes.

inline constexpr char kCheckpointMagic[4] = {'L', 'F', 'M', 'C'};
inline constexpr uint8_t kCheckpointVersion = 1;

template <typename T>
constexpr uint8_t dtype_code() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "unsupported scalar type");
    return std::is_same_v<T, float> ? 0 : 1;
}

namespace detail {

template <typename V>
void write_le(std::ostream& os, V v) {
    // assumes little-endian host (checked at container open)
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_le(std::istream& is) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    return v;
}

inline bool host_is_little_endian() {
    const uint32_t probe = 1;
    return *reinterpret_cast<const uint8_t*>(&probe) == 1;
}

}  // namespace detail

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
void save_checkpoint(const std::string& path, const ParamList<T>& params) {
    if (!detail::host_is_little_endian()) throw CheckpointError("checkpoint: big-endian host unsupported");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
    os.write(kCheckpointMagic, 4);
    detail::write_le<uint8_t>(os, kCheckpointVersion);
    detail::write_le<uint8_t>(os, dtype_code<T>());
    detail::write_le<uint32_t>(os, static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
        if (p.name.size() > 0xffff) throw CheckpointError("checkpoint: name too long: " + p.name);
        detail::write_le<uint16_t>(os, static_cast<uint16_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        detail::write_le<uint8_t>(os, static_cast<uint8_t>(shape.size()));
        for (int e : shape) detail::write_le<uint32_t>(os, static_cast<uint32_t>(e));
        os.write(reinterpret_cast<const char*>(p.tensor.ptr()),
                 static_cast<std::streamsize>(p.tensor.size() * sizeof(T)));
    }
    if (!os) throw CheckpointError("checkpoint: write failed for " + path);
}

template <typename T>
std::map<std::string, Tensor<T>> load_checkpoint(const std::string& path) {
    if (!detail::host_is_little_endian()) throw CheckpointError("checkpoint: big-endian host unsupported");
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in " + path);
    const auto version = detail::read_le<uint8_t>(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    const auto dtype = detail::read_le<uint8_t>(is);
    if (dtype != dtype_code<T>())
        throw CheckpointError("checkpoint: dtype mismatch (file " + std::to_string(dtype) + ", expected " +
                              std::to_string(dtype_code<T>()) + ")");
    const auto count = detail::read_le<uint32_t>(is);
    std::map<std::string, Tensor<T>> out;
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = detail::read_le<uint8_t>(is);
        Shape shape(rank);
        for (auto& e : shape) {
            const auto v = detail::read_le<uint32_t>(is);
            if (v == 0 || v > 0x7fffffffu) throw CheckpointError("checkpoint: bad extent in " + name);
            e = static_cast<int>(v);
        }
        const int64_t n = shape_numel(shape);
        std::vector<T> data(static_cast<size_t>(n));
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(T)));
        if (!is) throw CheckpointError("checkpoint: truncated record " + name + " in " + path);
        out.emplace(name, Tensor<T>(shape, std::move(data)));
    }
    return out;
}

// Copies stored values into the live parameter tensors; every parameter must
// be present with a matching shape.
template <typename T>
void apply_checkpoint(ParamList<T>& params, const std::map<std::string, Tensor<T>>& stored) {
    for (auto& p : params) {
        auto it = stored.find(p.name);
        if (it == stored.end()) throw CheckpointError("checkpoint: missing parameter " + p.name);
        if (it->second.shape() != p.tensor.shape())
            throw CheckpointError("checkpoint: shape mismatch for " + p.name + ": file " +
                                  shape_str(it->second.shape()) + " vs model " + shape_str(p.tensor.shape()));
        p.tensor.data() = it->second.data();
    }
}

}  // namespace lfm
