#include "image.hpp"

#include <algorithm>
#include <cstring>

#include <png.h>

#include "error.hpp"

namespace shaftpose {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

namespace {

void write_raw(const std::filesystem::path& path, int width, int height, png_uint_32 format, const void* data) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    fail(ErrorCode::kIo, "cannot write PNG '" + path.string() + "': " + msg);
  }
}

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, png_uint_32 format, int& width, int& height) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    fail(ErrorCode::kIo, "cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    fail(ErrorCode::kIo, "cannot decode PNG '" + path.string() + "': " + msg);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buf;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  require(image.channels == 3 || image.channels == 1, "PNG writer supports 1 or 3 channels");
  write_raw(path, image.width, image.height, image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY,
            image.pixels.data());
}

Image read_png(const std::filesystem::path& path) {
  Image out;
  out.channels = 3;
  out.pixels = read_raw(path, PNG_FORMAT_RGB, out.width, out.height);
  return out;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> gray(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), gray.begin(), [](std::uint8_t b) { return b ? 255 : 0; });
  write_raw(path, mask.width, mask.height, PNG_FORMAT_GRAY, gray.data());
}

Mask read_mask_png(const std::filesystem::path& path) {
  Mask out;
  auto gray = read_raw(path, PNG_FORMAT_GRAY, out.width, out.height);
  out.bits.resize(gray.size());
  std::transform(gray.begin(), gray.end(), out.bits.begin(), [](std::uint8_t g) { return g >= 128 ? 1 : 0; });
  return out;
}

}  // namespace shaftpose
