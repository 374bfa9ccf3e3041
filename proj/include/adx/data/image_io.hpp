#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace adx::data {

/// 8-bit interleaved pixels, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

/// Decodes PNG or JPEG by signature. Alpha is dropped, 16-bit samples are
/// reduced to 8 bits. Throws DataError on anything undecodable.
Image decode_image(const std::vector<std::uint8_t>& bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality = 95);
void write_png(const std::filesystem::path& path, const Image& img);
void write_jpeg(const std::filesystem::path& path, const Image& img, int quality = 95);

}  // namespace adx::data
