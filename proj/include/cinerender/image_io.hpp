#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cinerender {

/// Linear float RGB image, row-major, row 0 at the top.
struct FloatImage {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;
};

/// 8-bit sRGB image, row-major, row 0 at the top.
struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    bool operator==(const Image8 &) const = default;
};

/// PFM ("PF", 3 channels). Rows are stored bottom-to-top; the encoder always
/// writes little-endian (negative scale), the decoder accepts both orders.
std::string encode_pfm(const FloatImage &img);
FloatImage decode_pfm(const std::string &bytes);
FloatImage read_pfm(const std::filesystem::path &path);
void write_pfm(const FloatImage &img, const std::filesystem::path &path);

std::string encode_png(const Image8 &img);
void write_png(const Image8 &img, const std::filesystem::path &path);

std::string read_binary_file(const std::filesystem::path &path);
void write_binary_file(const std::filesystem::path &path, const std::string &bytes);

/// FNV-1a 64-bit, used for golden-image hashes.
std::uint64_t fnv1a64(const std::string &bytes);

}  // namespace cinerender
