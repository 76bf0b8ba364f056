#include "lfm/lf_io.hpp"

#include <png.h>

#include <cstdio>
#include <json.hpp>

namespace lfm {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageBuffer read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw LfIoError("png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw LfIoError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw LfIoError("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw LfIoError("png: decode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    // normalize to 8/16-bit gray or RGB
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // file is big-endian
    png_read_update_info(png, info);

    bit_depth = png_get_bit_depth(png, info);
    color_type = png_get_color_type(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw LfIoError("png: unsupported channel count in " + path);
    }

    ImageBuffer img;
    img.h = static_cast<int>(h);
    img.w = static_cast<int>(w);
    img.c = channels;
    img.bit_depth = bit_depth;
    img.pixels.resize(static_cast<size_t>(h) * w * channels);

    std::vector<png_bytep> rows(h);
    std::vector<uint8_t> raw;
    if (bit_depth == 16) {
        for (png_uint_32 y = 0; y < h; ++y)
            rows[y] = reinterpret_cast<png_bytep>(img.pixels.data() + static_cast<size_t>(y) * w * channels);
    } else {
        raw.resize(static_cast<size_t>(h) * w * channels);
        for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * w * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (bit_depth != 16)
        for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i];
    return img;
}

void write_png(const std::string& path, const ImageBuffer& img) {
    if (img.c != 1 && img.c != 3) throw LfIoError("png: unsupported channel count");
    if (img.bit_depth != 8 && img.bit_depth != 16) throw LfIoError("png: unsupported bit depth");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw LfIoError("png: cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw LfIoError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw LfIoError("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw LfIoError("png: encode failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), img.bit_depth,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (img.bit_depth == 16) png_set_swap(png);

    std::vector<uint8_t> raw;
    std::vector<png_bytep> rows(img.h);
    if (img.bit_depth == 16) {
        for (int y = 0; y < img.h; ++y)
            rows[y] = reinterpret_cast<png_bytep>(const_cast<uint16_t*>(img.pixels.data()) +
                                                  static_cast<size_t>(y) * img.w * img.c);
    } else {
        raw.resize(img.pixels.size());
        for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<uint8_t>(std::min<uint16_t>(img.pixels[i], 255));
        for (int y = 0; y < img.h; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * img.w * img.c;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

LfMeta read_lf_meta(const std::string& dir) {
    const auto path = (std::filesystem::path(dir) / "meta.json").string();
    std::ifstream is(path);
    if (!is) throw LfIoError("lf container: missing " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LfIoError("lf container: malformed meta.json: " + std::string(e.what()));
    }
    LfMeta m;
    try {
        m.u = j.at("U").get<int>();
        m.v = j.at("V").get<int>();
        m.h = j.at("H").get<int>();
        m.w = j.at("W").get<int>();
        m.channels = j.at("channels").get<int>();
        m.bit_depth = j.at("bit_depth").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw LfIoError("lf container: meta.json missing field: " + std::string(e.what()));
    }
    if (m.u < 1 || m.v < 1 || m.h < 1 || m.w < 1 || (m.channels != 1 && m.channels != 3) ||
        (m.bit_depth != 8 && m.bit_depth != 16))
        throw LfIoError("lf container: invalid meta.json values in " + dir);
    return m;
}

void write_lf_meta(const std::string& dir, const LfMeta& meta) {
    nlohmann::json j{{"U", meta.u},
                     {"V", meta.v},
                     {"H", meta.h},
                     {"W", meta.w},
                     {"channels", meta.channels},
                     {"bit_depth", meta.bit_depth}};
    const auto path = (std::filesystem::path(dir) / "meta.json").string();
    std::ofstream os(path);
    if (!os) throw LfIoError("lf container: cannot write " + path);
    os << j.dump(2) << "\n";
}

}  // namespace lfm
