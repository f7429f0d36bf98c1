#include "tlv/image.hpp"

#include "tlv/error.hpp"

#include <png.h>

namespace tlv {

void write_png(const std::filesystem::path& path, const Image& image) {
    png_image info{};
    info.version = PNG_IMAGE_VERSION;
    info.width = static_cast<png_uint_32>(image.width);
    info.height = static_cast<png_uint_32>(image.height);
    info.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&info, path.string().c_str(), 0, image.pixels.data(),
                                 image.width * 3, nullptr)) {
        std::string msg = info.message;
        png_image_free(&info);
        throw Error("cannot write " + path.string() + ": " + msg);
    }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    png_image info{};
    info.version = PNG_IMAGE_VERSION;
    info.width = static_cast<png_uint_32>(image.width);
    info.height = static_cast<png_uint_32>(image.height);
    info.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&info, nullptr, &size, 0, image.pixels.data(), image.width * 3, nullptr)) {
        std::string msg = info.message;
        png_image_free(&info);
        throw Error("cannot encode png: " + msg);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&info, out.data(), &size, 0, image.pixels.data(), image.width * 3, nullptr)) {
        std::string msg = info.message;
        png_image_free(&info);
        throw Error("cannot encode png: " + msg);
    }
    out.resize(size);
    return out;
}

Image read_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw LoadError("image not found: " + path.string());
    }
    png_image info{};
    info.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&info, path.string().c_str())) {
        throw LoadError("cannot decode " + path.string() + ": " + info.message);
    }
    info.format = PNG_FORMAT_RGB;
    Image out(static_cast<int>(info.height), static_cast<int>(info.width));
    if (!png_image_finish_read(&info, nullptr, out.pixels.data(), out.width * 3, nullptr)) {
        std::string msg = info.message;
        png_image_free(&info);
        throw LoadError("cannot decode " + path.string() + ": " + msg);
    }
    return out;
}

} // namespace tlv
