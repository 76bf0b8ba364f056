#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include "lfm/lightfield.hpp"

namespace lfm {

struct LfIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Decoded PNG payload; sample values are stored raw (0..255 or 0..65535).
struct ImageBuffer {
    int h = 0, w = 0, c = 0;  // c in {1,3}
    int bit_depth = 8;        // 8 or 16
    std::vector<uint16_t> pixels;  // row-major, channel-interleaved
};

ImageBuffer read_png(const std::string& path);
void write_png(const std::string& path, const ImageBuffer& img);

struct LfMeta {
    int u = 0, v = 0, h = 0, w = 0;
    int channels = 1;
    int bit_depth = 8;
};

LfMeta read_lf_meta(const std::string& dir);
void write_lf_meta(const std::string& dir, const LfMeta& meta);

inline std::string view_filename(int u, int v) {
    return "view_" + std::to_string(u) + "_" + std::to_string(v) + ".png";
}

// ---------------------------------------------------------------------------
// container: directory of view_{u}_{v}.png plus meta.json

template <typename T>
Tensor<T> image_to_tensor(const ImageBuffer& img) {
    const T scale = T(1) / static_cast<T>(img.bit_depth == 16 ? 65535 : 255);
    std::vector<T> data(img.pixels.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(img.pixels[i]) * scale;
    return Tensor<T>(Shape{img.h, img.w, img.c}, std::move(data));
}

template <typename T>
ImageBuffer tensor_to_image(const Tensor<T>& t, int bit_depth) {
    if (t.rank() != 3 && t.rank() != 2) throw LfIoError("tensor_to_image: image must be [H,W(,C)]");
    if (bit_depth != 8 && bit_depth != 16) throw LfIoError("tensor_to_image: bit depth must be 8 or 16");
    ImageBuffer img;
    img.h = t.dim(0);
    img.w = t.dim(1);
    img.c = t.rank() == 3 ? t.dim(2) : 1;
    img.bit_depth = bit_depth;
    const double peak = bit_depth == 16 ? 65535.0 : 255.0;
    img.pixels.resize(t.data().size());
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::clamp(static_cast<double>(t.data()[i]), 0.0, 1.0);
        img.pixels[i] = static_cast<uint16_t>(std::lround(v * peak));
    }
    return img;
}

template <typename T>
LightField<T> read_lf_container(const std::string& dir) {
    const LfMeta meta = read_lf_meta(dir);
    LightField<T> lf(meta.u, meta.v, meta.h, meta.w, meta.channels);
    const int64_t view_len = static_cast<int64_t>(meta.h) * meta.w * meta.channels;
    for (int uu = 0; uu < meta.u; ++uu)
        for (int vv = 0; vv < meta.v; ++vv) {
            const auto path = (std::filesystem::path(dir) / view_filename(uu, vv)).string();
            ImageBuffer img = read_png(path);
            if (img.h != meta.h || img.w != meta.w || img.c != meta.channels)
                throw LfIoError("lf container: view " + path + " extents do not match meta.json");
            auto t = image_to_tensor<T>(img);
            std::copy(t.ptr(), t.ptr() + view_len,
                      lf.data.ptr() + (static_cast<int64_t>(uu) * meta.v + vv) * view_len);
        }
    return lf;
}

template <typename T>
void write_lf_container(const std::string& dir, const LightField<T>& lf, int bit_depth = 8) {
    std::filesystem::create_directories(dir);
    LfMeta meta{lf.u(), lf.v(), lf.h(), lf.w(), lf.c(), bit_depth};
    write_lf_meta(dir, meta);
    const int64_t view_len = static_cast<int64_t>(lf.h()) * lf.w() * lf.c();
    for (int uu = 0; uu < lf.u(); ++uu)
        for (int vv = 0; vv < lf.v(); ++vv) {
            const int64_t off = (static_cast<int64_t>(uu) * lf.v() + vv) * view_len;
            Tensor<T> view(Shape{lf.h(), lf.w(), lf.c()},
                           std::vector<T>(lf.data.ptr() + off, lf.data.ptr() + off + view_len));
            write_png((std::filesystem::path(dir) / view_filename(uu, vv)).string(),
                      tensor_to_image(view, bit_depth));
        }
}

// ---------------------------------------------------------------------------
// raw tensor format: "LFRT" | version u8 | dtype u8 | extents u32[5] | payload

inline constexpr char kRawMagic[4] = {'L', 'F', 'R', 'T'};
inline constexpr uint8_t kRawVersion = 1;

template <typename T>
void write_lf_raw(const std::string& path, const LightField<T>& lf) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw LfIoError("lf raw: cannot write " + path);
    os.write(kRawMagic, 4);
    const uint8_t version = kRawVersion;
    const uint8_t dtype = std::is_same_v<T, float> ? 0 : 1;
    os.write(reinterpret_cast<const char*>(&version), 1);
    os.write(reinterpret_cast<const char*>(&dtype), 1);
    const int dims[5] = {lf.u(), lf.v(), lf.h(), lf.w(), lf.c()};
    for (int d : dims) {
        const uint32_t e = static_cast<uint32_t>(d);
        os.write(reinterpret_cast<const char*>(&e), 4);
    }
    os.write(reinterpret_cast<const char*>(lf.data.ptr()),
             static_cast<std::streamsize>(lf.data.size() * sizeof(T)));
    if (!os) throw LfIoError("lf raw: write failed for " + path);
}

template <typename T>
LightField<T> read_lf_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LfIoError("lf raw: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kRawMagic, 4) != 0) throw LfIoError("lf raw: bad magic in " + path);
    uint8_t version = 0, dtype = 0;
    is.read(reinterpret_cast<char*>(&version), 1);
    is.read(reinterpret_cast<char*>(&dtype), 1);
    if (version != kRawVersion) throw LfIoError("lf raw: unsupported version");
    const uint8_t expect = std::is_same_v<T, float> ? 0 : 1;
    if (dtype != expect) throw LfIoError("lf raw: dtype mismatch");
    int dims[5];
    for (int& d : dims) {
        uint32_t e = 0;
        is.read(reinterpret_cast<char*>(&e), 4);
        if (e == 0 || e > 0x7fffffffu) throw LfIoError("lf raw: bad extent");
        d = static_cast<int>(e);
    }
    LightField<T> lf(dims[0], dims[1], dims[2], dims[3], dims[4]);
    is.read(reinterpret_cast<char*>(lf.data.ptr()), static_cast<std::streamsize>(lf.data.size() * sizeof(T)));
    if (!is) throw LfIoError("lf raw: truncated payload in " + path);
    return lf;
}

}  // namespace lfm
