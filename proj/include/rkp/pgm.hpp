#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rkp/imaging.hpp"

namespace rkp {

/// Raw binary PGM (P5) contents. Samples are row-major; 16-bit files are big-endian on disk.
struct PgmData {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::vector<std::uint16_t> samples;
};

PgmData parse_pgm(std::span<const std::uint8_t> bytes);
PgmData read_pgm(const std::filesystem::path& path);

/// Intensities divided by the header maxval, giving values in [0, 1].
Image2D load_pgm_image(const std::filesystem::path& path);
/// Literal sample values.
LabelMask load_pgm_mask(const std::filesystem::path& path);

Image2D to_image(const PgmData& pgm);
LabelMask to_mask(const PgmData& pgm);

std::vector<std::uint8_t> encode_pgm(const PgmData& pgm);

/// Writes values in [0, 1] quantised to 8 or 16 bits.
void save_pgm(const Image2D& img, const std::filesystem::path& path, int bits = 8);
/// Masks are always written 16-bit; labels must fit in [0, 65535].
void save_pgm(const LabelMask& mask, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rkp
