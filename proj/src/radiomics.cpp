#include "rkp/radiomics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "rkp/error.hpp"
#include "rkp/pgm.hpp"

namespace rkp {

namespace {

constexpr std::array<FeatureInfo, kDescriptorSize> kRegistry{{
    {0, "firstorder", "Energy"},
    {1, "firstorder", "TotalEnergy"},
    {2, "firstorder", "Entropy"},
    {3, "firstorder", "Minimum"},
    {4, "firstorder", "10Percentile"},
    {5, "firstorder", "90Percentile"},
    {6, "firstorder", "Maximum"},
    {7, "firstorder", "Mean"},
    {8, "firstorder", "Median"},
    {9, "firstorder", "InterquartileRange"},
    {10, "firstorder", "Range"},
    {11, "firstorder", "MeanAbsoluteDeviation"},
    {12, "firstorder", "RobustMeanAbsoluteDeviation"},
    {13, "firstorder", "RootMeanSquared"},
    {14, "firstorder", "StandardDeviation"},
    {15, "firstorder", "Skewness"},
    {16, "firstorder", "Kurtosis"},
    {17, "firstorder", "Variance"},
    {18, "firstorder", "Uniformity"},
    {19, "shape2D", "MeshSurface"},
    {20, "shape2D", "PixelSurface"},
    {21, "shape2D", "Perimeter"},
    {22, "shape2D", "PerimeterSurfaceRatio"},
    {23, "shape2D", "Sphericity"},
    {24, "shape2D", "SphericalDisproportion"},
    {25, "shape2D", "MaximumDiameter"},
    {26, "shape2D", "MajorAxisLength"},
    {27, "shape2D", "MinorAxisLength"},
    {28, "shape2D", "Elongation"},
    {29, "glcm", "Autocorrelation"},
    {30, "glcm", "JointAverage"},
    {31, "glcm", "ClusterProminence"},
    {32, "glcm", "ClusterShade"},
    {33, "glcm", "ClusterTendency"},
    {34, "glcm", "Contrast"},
    {35, "glcm", "Correlation"},
    {36, "glcm", "DifferenceAverage"},
    {37, "glcm", "DifferenceEntropy"},
    {38, "glcm", "DifferenceVariance"},
    {39, "glcm", "JointEnergy"},
    {40, "glcm", "JointEntropy"},
    {41, "glcm", "Imc1"},
    {42, "glcm", "Imc2"},
    {43, "glcm", "Idm"},
    {44, "glcm", "Idmn"},
    {45, "glcm", "Id"},
    {46, "glcm", "Idn"},
    {47, "glcm", "InverseVariance"},
    {48, "glcm", "MaximumProbability"},
    {49, "glcm", "SumAverage"},
    {50, "glcm", "SumEntropy"},
    {51, "glcm", "SumSquares"},
    {52, "glcm", "MCC"},
}};

// numpy.percentile with linear interpolation, on sorted input.
double percentile(std::span<const double> sorted, double q) {
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

std::vector<double> RegionOfInterest::intensities() const {
  std::vector<double> v;
  v.reserve(pixels.size());
  for (const auto& p : pixels) v.push_back((*image)(p.y(), p.x()));
  return v;
}

RegionOfInterest region_of(const Image2D& img, const LabelMask& mask, int label) {
  if (img.rows() != mask.rows() || img.cols() != mask.cols())
    throw ContractError("region_of: image and mask dimensions differ");
  RegionOfInterest roi{&img, {}, label};
  for (Eigen::Index y = 0; y < mask.rows(); ++y)
    for (Eigen::Index x = 0; x < mask.cols(); ++x)
      if (mask(y, x) == label) roi.pixels.emplace_back(static_cast<int>(x), static_cast<int>(y));
  return roi;
}

std::map<int, RegionOfInterest> regions_of(const Image2D& img, const LabelMask& mask) {
  if (img.rows() != mask.rows() || img.cols() != mask.cols())
    throw ContractError("regions_of: image and mask dimensions differ");
  std::map<int, RegionOfInterest> out;
  for (Eigen::Index y = 0; y < mask.rows(); ++y) {
    for (Eigen::Index x = 0; x < mask.cols(); ++x) {
      const int label = mask(y, x);
      if (label == 0) continue;
      auto [it, inserted] = out.try_emplace(label);
      if (inserted) {
        it->second.image = &img;
        it->second.label = label;
      }
      it->second.pixels.emplace_back(static_cast<int>(x), static_cast<int>(y));
    }
  }
  return out;
}

const std::array<FeatureInfo, kDescriptorSize>& feature_registry() { return kRegistry; }

int feature_index(std::string_view name) {
  for (const auto& f : kRegistry) {
    const std::string qualified = std::string(f.family) + "." + std::string(f.name);
    if (f.name == name || qualified == name) return f.index;
  }
  throw std::invalid_argument("unknown radiomic feature: " + std::string(name));
}

std::string registry_version(const RadiomicsConfig& config) {
  return "rkp-radiomics-1;bins=" + std::to_string(config.bins) + ";discretization=fixed-count";
}

std::string registry_text() {
  std::string out;
  for (const auto& f : kRegistry)
    out += std::to_string(f.index) + "," + std::string(f.family) + "," + std::string(f.name) + "\n";
  return out;
}

std::vector<int> discretize(std::span<const double> values, int bins) {
  if (bins < 2) throw std::invalid_argument("discretize: bins must be >= 2");
  std::vector<int> levels(values.size(), 0);
  if (values.empty()) return levels;
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double mn = *mn_it;
  const double range = *mx_it - mn;
  if (range <= 0) return levels;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int b = static_cast<int>(std::floor((values[i] - mn) / range * bins));
    levels[i] = std::clamp(b, 0, bins - 1);
  }
  return levels;
}

Eigen::Matrix<double, kFirstOrderCount, 1> first_order_features(std::span<const double> values,
                                                                int bins) {
  if (values.empty()) throw std::invalid_argument("first_order_features: empty region");
  const auto n = static_cast<double>(values.size());
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  double energy = 0.0;
  for (double v : values) energy += v * v;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    mad += std::abs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  mad /= n;

  const double p10 = percentile(sorted, 10);
  const double p25 = percentile(sorted, 25);
  const double p75 = percentile(sorted, 75);
  const double p90 = percentile(sorted, 90);

  double robust_sum = 0.0;
  int robust_n = 0;
  for (double v : values) {
    if (v >= p10 && v <= p90) {
      robust_sum += v;
      ++robust_n;
    }
  }
  // Two-pixel regions can leave the 10-90 band empty; report 0 then.
  double rmad = 0.0;
  if (robust_n > 0) {
    const double robust_mean = robust_sum / robust_n;
    for (double v : values)
      if (v >= p10 && v <= p90) rmad += std::abs(v - robust_mean);
    rmad /= robust_n;
  }

  const std::vector<int> levels = discretize(values, bins);
  std::vector<double> hist(bins, 0.0);
  for (int l : levels) hist[l] += 1.0;
  double entropy = 0.0, uniformity = 0.0;
  for (double c : hist) {
    if (c == 0) continue;
    const double p = c / n;
    entropy -= p * std::log2(p);
    uniformity += p * p;
  }

  // Zero variance: skewness and excess kurtosis are defined as 0.
  const double skewness = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  const double kurtosis = m2 > 0 ? m4 / (m2 * m2) - 3.0 : 0.0;

  Eigen::Matrix<double, kFirstOrderCount, 1> f;
  f << energy, energy, entropy, sorted.front(), p10, p90, sorted.back(), mean,
      percentile(sorted, 50), p75 - p25, sorted.back() - sorted.front(), mad, rmad,
      std::sqrt(energy / n), std::sqrt(m2), skewness, kurtosis, m2, uniformity;
  return f;
}

RadiomicDescriptor extract_descriptor(const RegionOfInterest& roi, const RadiomicsConfig& config) {
  if (roi.pixels.empty() || roi.image == nullptr)
    throw std::invalid_argument("extract_descriptor: empty region");
  if (config.bins < 2) throw std::invalid_argument("extract_descriptor: bins must be >= 2");

  const std::vector<double> values = roi.intensities();
  const std::vector<int> levels = discretize(values, config.bins);

  GlcmMatrix texture;
  try {
    texture = glcm_from_levels(roi.pixels, levels, config.bins);
  } catch (const std::invalid_argument&) {
    // No neighbouring pairs: every pixel co-occurs only with itself.
    texture.p = Eigen::MatrixXd::Zero(config.bins, config.bins);
    for (int l : levels) texture.p(l, l) += 1.0;
    texture.p /= static_cast<double>(levels.size());
  }

  RadiomicDescriptor d;
  d.values << first_order_features(values, config.bins), shape_features(roi.pixels),
      glcm_features(texture);
  d.registry_version = registry_version(config);
  return d;
}

void write_descriptors(const std::filesystem::path& path, std::span<const RadiomicDescriptor> ds) {
  const std::string header = "RKD1 count=" + std::to_string(ds.size()) + "\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (const auto& d : ds) {
    for (int i = 0; i < kDescriptorSize; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(d.values[i]));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  write_file_bytes(path, bytes);
}

std::vector<Eigen::VectorXf> read_descriptors(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end()) throw FormatError("RKD1 header missing newline", bytes.size());
  const std::string header(bytes.begin(), nl);
  const std::string prefix = "RKD1 count=";
  if (header.rfind(prefix, 0) != 0) throw FormatError("not an RKD1 descriptor file", 0);
  std::size_t count = 0;
  try {
    count = std::stoul(header.substr(prefix.size()));
  } catch (const std::exception&) {
    throw FormatError("malformed RKD1 count", prefix.size());
  }
  std::size_t pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  if (bytes.size() - pos != count * kDescriptorSize * 4)
    throw FormatError("unexpected end of data", bytes.size());
  std::vector<Eigen::VectorXf> out;
  for (std::size_t r = 0; r < count; ++r) {
    Eigen::VectorXf v(kDescriptorSize);
    for (int i = 0; i < kDescriptorSize; ++i, pos += 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[pos + b]) << (8 * b);
      v[i] = std::bit_cast<float>(bits);
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace rkp
