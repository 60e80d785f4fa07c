#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pda/image.hpp"

namespace pda {

enum class ImageFormat { ppm, png };

/// Decodes PPM/PGM (P2, P3, P5, P6; maxval up to 65535) or PNG (8/16-bit
/// gray or RGB). Samples are divided by the format's max sample value.
/// Throws pda::Error with malformed_header, truncated_payload or
/// unsupported_format.
Image decode_image(std::span<const std::uint8_t> bytes, ImageFormat format);

/// 8-bit binary output (P5 for gray, P6 for RGB; PNG gray/RGB). Samples are
/// quantized as floor(v * 255 + 0.5). Output is deterministic.
std::vector<std::uint8_t> encode_image(const Image& image, ImageFormat format);

/// Format from the file extension: .png is PNG, .ppm/.pgm/.pnm are PPM.
ImageFormat format_for_path(const std::filesystem::path& path);

Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pda
