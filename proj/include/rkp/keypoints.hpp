#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rkp/affine.hpp"
#include "rkp/imaging.hpp"
#include "rkp/radiomics.hpp"

namespace rkp {

struct Keypoint {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double score = 1.0;
  std::optional<int> label;
  Eigen::VectorXd descriptor;
};

struct KeypointGraph {
  std::vector<Keypoint> keypoints;
  int width = 0;
  int height = 0;
  std::string source_id;

  std::size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
  /// Descriptor length shared by all keypoints (0 when none carry one).
  Eigen::Index descriptor_dim() const;
  std::vector<Eigen::Vector2d> positions() const;
};

enum class CentroidMode { Unweighted, IntensityWeighted };

struct KeypointConfig {
  int min_area = 4;
  RadiomicsConfig radiomics;
  CentroidMode centroid = CentroidMode::Unweighted;
};

/// Centre of a pixel set. When the centroid's pixel is not part of the set it snaps to the
/// nearest member pixel centre (first in raster order on ties).
Eigen::Vector2d region_center(const RegionOfInterest& roi, CentroidMode mode = CentroidMode::Unweighted);

/// One keypoint per non-zero label (ascending), carrying that region's radiomic descriptor.
KeypointGraph extract_radiomic_keypoints(const Image2D& img, const LabelMask& mask,
                                         const KeypointConfig& config = {});

/// Fraction of `a` whose transformed position lands within epsilon of a distinct keypoint of `b`.
/// Pairs are accepted greedily by increasing distance.
double repeatability(const KeypointGraph& a, const KeypointGraph& b, const AffineTransform& t,
                     double epsilon);

/// Per-dimension z-scoring fitted on a set of graphs.
struct DescriptorStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

DescriptorStats fit_descriptor_stats(std::span<const KeypointGraph> graphs);
KeypointGraph standardize(KeypointGraph graph, const DescriptorStats& stats);

/// JSON lines: an optional {"image":{...}} header followed by one keypoint per line,
/// {"x","y","score","label","desc":[...]}. "desc" may be absent.
void write_keypoints(std::ostream& out, const KeypointGraph& graph);
KeypointGraph read_keypoints(std::istream& in);
void save_keypoints(const std::filesystem::path& path, const KeypointGraph& graph);
KeypointGraph load_keypoints(const std::filesystem::path& path);

}  // namespace rkp
