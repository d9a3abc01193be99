#pragma once

// PNG codecs for the three raster kinds that cross process boundaries, plus
// base64, SHA-256 and whole-file I/O.
//
//   images: 8-bit RGB
//   masks:  8-bit grayscale, 255 = keep
//   depth:  16-bit grayscale in units of 1/depth_scale meters, 0 = invalid

#include <png.h>

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wcgen/error.hpp"
#include "wcgen/image.hpp"

namespace wcgen {

using Bytes = std::vector<std::uint8_t>;

inline constexpr double kDefaultDepthScale = 4000.0;

namespace detail {

inline Bytes write_png(png_image& img, const void* pixels) {
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr))
    fail(ErrorCode::io_error, std::string("png encode failed: ") + img.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0, nullptr))
    fail(ErrorCode::io_error, std::string("png encode failed: ") + img.message);
  out.resize(size);
  return out;
}

struct PngReader {
  png_image img{};

  explicit PngReader(std::span<const std::uint8_t> bytes) {
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
      fail(ErrorCode::load_error, std::string("png decode failed: ") + img.message);
  }
  ~PngReader() { png_image_free(&img); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  bool sixteen_bit() const { return (img.format & PNG_FORMAT_FLAG_LINEAR) != 0; }

  template <class T>
  std::vector<T> finish(png_uint_32 format) {
    img.format = format;
    std::vector<T> buffer(PNG_IMAGE_SIZE(img) / sizeof(T));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr))
      fail(ErrorCode::load_error, std::string("png decode failed: ") + img.message);
    return buffer;
  }
};

inline png_image make_header(int width, int height, png_uint_32 format) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  return img;
}

}  // namespace detail

inline Bytes encode_png(const ImageBuffer& image) {
  require(!image.empty(), ErrorCode::invalid_argument, "cannot encode an empty image");
  std::vector<std::uint8_t> pixels;
  pixels.reserve(image.size() * 3);
  for (const auto& px : image.values())
    for (float c : px) pixels.push_back(to_byte(c));
  auto header = detail::make_header(image.width(), image.height(), PNG_FORMAT_RGB);
  return detail::write_png(header, pixels.data());
}

inline ImageBuffer decode_png_image(std::span<const std::uint8_t> bytes) {
  detail::PngReader reader(bytes);
  const auto pixels = reader.finish<std::uint8_t>(PNG_FORMAT_RGB);
  ImageBuffer image(static_cast<int>(reader.img.width), static_cast<int>(reader.img.height));
  for (std::size_t i = 0; i < image.size(); ++i)
    for (int c = 0; c < 3; ++c) image.values()[i][c] = pixels[3 * i + c] / 255.0f;
  return image;
}

inline Bytes encode_png_mask(const WeightMask& mask) {
  require(!mask.empty(), ErrorCode::invalid_argument, "cannot encode an empty mask");
  std::vector<std::uint8_t> pixels;
  pixels.reserve(mask.size());
  for (float w : mask.values()) pixels.push_back(to_byte(w));
  auto header = detail::make_header(mask.width(), mask.height(), PNG_FORMAT_GRAY);
  return detail::write_png(header, pixels.data());
}

inline Bytes encode_png_mask(const BinaryMask& mask) {
  WeightMask w(mask.width(), mask.height(), 0.0f);
  for (std::size_t i = 0; i < mask.size(); ++i) w.values()[i] = mask.values()[i] ? 1.0f : 0.0f;
  return encode_png_mask(w);
}

inline WeightMask decode_png_mask(std::span<const std::uint8_t> bytes) {
  detail::PngReader reader(bytes);
  require(!reader.sixteen_bit(), ErrorCode::load_error, "mask PNG must be 8-bit");
  const auto pixels = reader.finish<std::uint8_t>(PNG_FORMAT_GRAY);
  WeightMask mask(static_cast<int>(reader.img.width), static_cast<int>(reader.img.height));
  for (std::size_t i = 0; i < mask.size(); ++i) mask.values()[i] = pixels[i] / 255.0f;
  return mask;
}

/// Depths are rounded to the 1/depth_scale grid; anything that does not fit
/// in 16 bits or is invalid becomes 0.
inline Bytes encode_png_depth(const DepthMap& depth, double depth_scale = kDefaultDepthScale) {
  require(depth.width() > 0 && depth.height() > 0, ErrorCode::invalid_argument,
          "cannot encode an empty depth map");
  require(depth_scale > 0.0, ErrorCode::invalid_argument, "depth_scale must be positive");
  std::vector<png_uint_16> pixels;
  pixels.reserve(static_cast<std::size_t>(depth.width()) * depth.height());
  for (double d : depth.raster().values()) {
    double units = (std::isfinite(d) && d > 0.0) ? std::round(d * depth_scale) : 0.0;
    if (units > 65535.0) units = 0.0;
    pixels.push_back(static_cast<png_uint_16>(units));
  }
  auto header = detail::make_header(depth.width(), depth.height(), PNG_FORMAT_LINEAR_Y);
  return detail::write_png(header, pixels.data());
}

inline DepthMap decode_png_depth(std::span<const std::uint8_t> bytes,
                                 double depth_scale = kDefaultDepthScale) {
  require(depth_scale > 0.0, ErrorCode::invalid_argument, "depth_scale must be positive");
  detail::PngReader reader(bytes);
  require(reader.sixteen_bit() && (reader.img.format & PNG_FORMAT_FLAG_COLOR) == 0,
          ErrorCode::load_error, "depth PNG must be 16-bit grayscale");
  const auto pixels = reader.finish<png_uint_16>(PNG_FORMAT_LINEAR_Y);
  DepthMap depth(static_cast<int>(reader.img.width), static_cast<int>(reader.img.height));
  auto values = depth.raster().values();
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = pixels[i] == 0 ? 0.0 : pixels[i] / depth_scale;
  return depth;
}

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline Bytes base64_decode(std::string_view text) {
  require(text.size() % 4 == 0, ErrorCode::protocol_violation, "base64 length is not a multiple of 4");
  Bytes out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  require(n >= 0, ErrorCode::protocol_violation, "invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes that stand in for '=' padding.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    fail(ErrorCode::io_error, "sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::load_error, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io_error, "short write to " + path.string());
}

inline void write_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

}  // namespace wcgen
