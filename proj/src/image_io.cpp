#include "cinerender/image_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <png.h>

#include "cinerender/error.hpp"

namespace cinerender {

std::string read_binary_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("file_not_found", "cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("io_error", "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("io_error", "write failed for '" + path.string() + "'");
}

std::string encode_pfm(const FloatImage &img) {
    std::string out = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n-1.0\n";
    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * 3 * sizeof(float);
    const std::size_t header = out.size();
    out.resize(header + row_bytes * img.height);
    for (int y = 0; y < img.height; ++y) {
        const float *src = img.rgb.data() + static_cast<std::size_t>(img.height - 1 - y) * img.width * 3;
        std::memcpy(out.data() + header + row_bytes * y, src, row_bytes);
    }
    return out;
}

FloatImage decode_pfm(const std::string &bytes) {
    // Header: three whitespace-separated tokens, each terminated by one whitespace byte.
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        if (start == pos)
            throw Error("malformed_pfm", "truncated PFM header");
        return bytes.substr(start, pos - start);
    };
    if (token() != "PF")
        throw Error("malformed_pfm", "only 3-channel PFM ('PF') is supported");
    FloatImage img;
    double scale = 0;
    try {
        img.width = std::stoi(token());
        img.height = std::stoi(token());
        scale = std::stod(token());
    } catch (const std::logic_error &) {
        throw Error("malformed_pfm", "non-numeric PFM header field");
    }
    if (pos >= bytes.size())
        throw Error("malformed_pfm", "missing PFM payload");
    ++pos;  // single whitespace byte after the scale
    if (img.width <= 0 || img.height <= 0 || scale == 0 || !std::isfinite(scale))
        throw Error("malformed_pfm", "invalid PFM dimensions or scale");

    const std::size_t count = static_cast<std::size_t>(img.width) * img.height * 3;
    if (bytes.size() - pos != count * sizeof(float))
        throw Error("malformed_pfm", "PFM payload size does not match header");
    const bool swap = (scale < 0) != (std::endian::native == std::endian::little);
    img.rgb.resize(count);
    const std::size_t row_floats = static_cast<std::size_t>(img.width) * 3;
    for (int y = 0; y < img.height; ++y) {
        const char *src = bytes.data() + pos + row_floats * sizeof(float) * y;
        float *dst = img.rgb.data() + static_cast<std::size_t>(img.height - 1 - y) * row_floats;
        for (std::size_t i = 0; i < row_floats; ++i) {
            std::uint32_t u;
            std::memcpy(&u, src + i * 4, 4);
            if (swap)
                u = __builtin_bswap32(u);
            std::memcpy(dst + i, &u, 4);
        }
    }
    return img;
}

FloatImage read_pfm(const std::filesystem::path &path) { return decode_pfm(read_binary_file(path)); }

void write_pfm(const FloatImage &img, const std::filesystem::path &path) {
    write_binary_file(path, encode_pfm(img));
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
    auto *out = static_cast<std::string *>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char *>(data), length);
}

void png_flush_noop(png_structp) {}

}  // namespace

std::string encode_png(const Image8 &img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw Error("internal", "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("internal", "png_create_info_struct failed");
    }
    std::string out;
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3);

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("internal", "PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_append, png_flush_noop);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const Image8 &img, const std::filesystem::path &path) {
    write_binary_file(path, encode_png(img));
}

std::uint64_t fnv1a64(const std::string &bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace cinerender
