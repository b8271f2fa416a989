#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rkp/imaging.hpp"

namespace rkp {

inline constexpr int kFirstOrderCount = 19;
inline constexpr int kShapeCount = 10;
inline constexpr int kGlcmCount = 24;
inline constexpr int kDescriptorSize = kFirstOrderCount + kShapeCount + kGlcmCount;

using Pixel = Eigen::Vector2i;  // (x, y)

/// One labelled region of an image. Pixels are kept in (y, x) raster order.
struct RegionOfInterest {
  const Image2D* image = nullptr;
  std::vector<Pixel> pixels;
  int label = 0;

  std::vector<double> intensities() const;
};

RegionOfInterest region_of(const Image2D& img, const LabelMask& mask, int label);
/// Every non-zero label, ascending.
std::map<int, RegionOfInterest> regions_of(const Image2D& img, const LabelMask& mask);

struct RadiomicsConfig {
  int bins = 32;
};

struct RadiomicDescriptor {
  Eigen::Matrix<double, kDescriptorSize, 1> values;
  std::string registry_version;
};

struct FeatureInfo {
  int index;
  std::string_view family;
  std::string_view name;
};

const std::array<FeatureInfo, kDescriptorSize>& feature_registry();
/// Index of a feature by name, e.g. "firstorder.Mean" or "Mean" (first match).
int feature_index(std::string_view name);
std::string registry_version(const RadiomicsConfig& config);
/// "index,family,name" per line.
std::string registry_text();

/// Fixed bin count over [min, max]; a constant input maps entirely to bin 0.
std::vector<int> discretize(std::span<const double> values, int bins);

/// Symmetric, normalised co-occurrence matrix.
struct GlcmMatrix {
  Eigen::MatrixXd p;
  int bins() const { return static_cast<int>(p.rows()); }
};

/// Distance-1 co-occurrences along 0, 45, 90 and 135 degrees, both pixels in the region,
/// accumulated, symmetrised and normalised. Throws when the region has no pixel pairs.
GlcmMatrix glcm(const RegionOfInterest& roi, int bins);
GlcmMatrix glcm_from_levels(std::span<const Pixel> pixels, std::span<const int> levels, int bins);

Eigen::Matrix<double, kFirstOrderCount, 1> first_order_features(std::span<const double> values,
                                                                int bins);
Eigen::Matrix<double, kShapeCount, 1> shape_features(std::span<const Pixel> pixels);
Eigen::Matrix<double, kGlcmCount, 1> glcm_features(const GlcmMatrix& m);

RadiomicDescriptor extract_descriptor(const RegionOfInterest& roi, const RadiomicsConfig& config = {});

/// Binary export: text line "RKD1 count=N\n" then N records of 53 little-endian float32.
void write_descriptors(const std::filesystem::path& path, std::span<const RadiomicDescriptor> ds);
std::vector<Eigen::VectorXf> read_descriptors(const std::filesystem::path& path);

}  // namespace rkp
