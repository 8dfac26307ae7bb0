#include <cstring>

#include <png.h>

#include "synthct/error.hpp"
#include "synthct/png.hpp"

namespace synthct {

std::vector<std::uint8_t> encode_png(const Gray8Image& image) {
  if (image.rows < 1 || image.cols < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.rows) * static_cast<std::size_t>(image.cols))
    throw Error(ErrorKind::InvalidParameter, "PNG encode: bad image geometry");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.cols);
  img.height = static_cast<png_uint_32>(image.rows);
  img.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw Error(ErrorKind::InvalidParameter, std::string("PNG encode: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw Error(ErrorKind::InvalidParameter, std::string("PNG encode: ") + img.message);
  out.resize(size);
  return out;
}

Gray8Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw Error(ErrorKind::MalformedInput, std::string("PNG decode: ") + img.message);
  img.format = PNG_FORMAT_GRAY;
  Gray8Image out{static_cast<int>(img.height), static_cast<int>(img.width),
                 std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorKind::MalformedInput, std::string("PNG decode: ") + img.message);
  }
  return out;
}

}  // namespace synthct
