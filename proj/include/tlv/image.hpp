#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tlv {

// Interleaved 8-bit RGB, row-major, H x W x 3.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool operator==(const Image&) const = default;
};

void write_png(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_png(const Image& image);
// Throws LoadError on missing or undecodable files. Grayscale, palette and
// alpha inputs are converted to 8-bit RGB.
Image read_png(const std::filesystem::path& path);

} // namespace tlv
