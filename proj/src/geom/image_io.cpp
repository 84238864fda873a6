#include <cstring>

#include <png.h>

#include "evk/error.hpp"
#include "evk/image.hpp"

namespace evk {

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw Error(ErrorKind::ParseError, path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw Error(ErrorKind::ParseError, path.string() + ": " + png.message);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, image.rgb.data(), 0, nullptr))
    throw Error(ErrorKind::IoError, path.string() + ": " + png.message);
}

Mask2D mask_from_image(const Image& image) {
  Mask2D mask(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) mask.set(x, y, luma(image.pixel(x, y)) > 127.0);
  return mask;
}

Mask2D read_mask_png(const std::filesystem::path& path) { return mask_from_image(read_png(path)); }

void write_mask_png(const std::filesystem::path& path, const Mask2D& mask) {
  Image img(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) std::memset(img.pixel(x, y), 255, 3);
  write_png(path, img);
}

}  // namespace evk
