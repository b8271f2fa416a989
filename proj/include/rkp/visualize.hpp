#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rkp/imaging.hpp"
#include "rkp/keypoints.hpp"
#include "rkp/matcher.hpp"

namespace rkp {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triples

  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}
  void set(int x, int y, const std::array<std::uint8_t, 3>& c);
};

/// Red at confidence 0 through yellow to green at 1.
std::array<std::uint8_t, 3> confidence_color(double confidence);

void draw_line(RgbImage& img, Eigen::Vector2d a, Eigen::Vector2d b, const std::array<std::uint8_t, 3>& color);

/// Both images side by side (grey), keypoints marked, one line per match.
RgbImage render_matches(const Image2D& left, const Image2D& right, const KeypointGraph& a, const KeypointGraph& b,
                        const MatchSet& matches);

std::vector<std::uint8_t> encode_ppm(const RgbImage& img);
void save_ppm(const std::filesystem::path& path, const RgbImage& img);

}  // namespace rkp
