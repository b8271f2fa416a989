#include "rkp/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <tuple>

#include "rkp/error.hpp"

namespace rkp {

Eigen::Index KeypointGraph::descriptor_dim() const {
  return keypoints.empty() ? 0 : keypoints.front().descriptor.size();
}

std::vector<Eigen::Vector2d> KeypointGraph::positions() const {
  std::vector<Eigen::Vector2d> out;
  out.reserve(keypoints.size());
  for (const auto& k : keypoints) out.push_back(k.position);
  return out;
}

Eigen::Vector2d region_center(const RegionOfInterest& roi, CentroidMode mode) {
  if (roi.pixels.empty()) throw std::invalid_argument("region_center: empty region");
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  double total = 0.0;
  for (const auto& p : roi.pixels) {
    const double w = mode == CentroidMode::IntensityWeighted ? (*roi.image)(p.y(), p.x()) : 1.0;
    c += w * p.cast<double>();
    total += w;
  }
  if (total <= 0) {
    // All-zero intensities carry no weight; fall back to the plain centroid.
    return region_center(roi, CentroidMode::Unweighted);
  }
  c /= total;

  const Pixel home(static_cast<int>(std::floor(c.x() + 0.5)), static_cast<int>(std::floor(c.y() + 0.5)));
  if (std::find(roi.pixels.begin(), roi.pixels.end(), home) != roi.pixels.end()) return c;

  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector2d snapped = c;
  for (const auto& p : roi.pixels) {
    const double d = (p.cast<double>() - c).squaredNorm();
    if (d < best) {
      best = d;
      snapped = p.cast<double>();
    }
  }
  return snapped;
}

KeypointGraph extract_radiomic_keypoints(const Image2D& img, const LabelMask& mask,
                                         const KeypointConfig& config) {
  if (img.rows() != mask.rows() || img.cols() != mask.cols())
    throw ContractError("extract_radiomic_keypoints: image " + std::to_string(img.cols()) + "x" +
                        std::to_string(img.rows()) + " vs mask " + std::to_string(mask.cols()) +
                        "x" + std::to_string(mask.rows()));
  const auto regions = regions_of(img, mask);
  if (regions.empty()) throw std::invalid_argument("extract_radiomic_keypoints: no regions");

  KeypointGraph graph;
  graph.width = static_cast<int>(img.cols());
  graph.height = static_cast<int>(img.rows());
  for (const auto& [label, roi] : regions) {
    if (static_cast<int>(roi.pixels.size()) < config.min_area) continue;
    Keypoint k;
    k.position = region_center(roi, config.centroid);
    k.score = 1.0;
    k.label = label;
    k.descriptor = extract_descriptor(roi, config.radiomics).values;
    graph.keypoints.push_back(std::move(k));
  }
  return graph;
}

double repeatability(const KeypointGraph& a, const KeypointGraph& b, const AffineTransform& t,
                     double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("repeatability: epsilon must be positive");
  if (a.empty() || b.empty()) return 0.0;

  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Eigen::Vector2d p = t.apply(a.keypoints[i].position);
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = (b.keypoints[j].position - p).norm();
      if (d <= epsilon) candidates.emplace_back(d, i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  std::size_t matched = 0;
  for (const auto& [d, i, j] : candidates) {
    if (used_a[i] || used_b[j]) continue;
    used_a[i] = used_b[j] = true;
    ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(a.size());
}

DescriptorStats fit_descriptor_stats(std::span<const KeypointGraph> graphs) {
  Eigen::Index dim = 0;
  std::size_t n = 0;
  for (const auto& g : graphs) {
    for (const auto& k : g.keypoints) {
      if (dim == 0) dim = k.descriptor.size();
      if (k.descriptor.size() != dim) throw ContractError("fit_descriptor_stats: mixed descriptor sizes");
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("fit_descriptor_stats: no descriptors");
  DescriptorStats s{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
  for (const auto& g : graphs)
    for (const auto& k : g.keypoints) s.mean += k.descriptor;
  s.mean /= static_cast<double>(n);
  for (const auto& g : graphs)
    for (const auto& k : g.keypoints) s.scale += (k.descriptor - s.mean).cwiseAbs2();
  s.scale = (s.scale / static_cast<double>(n)).cwiseSqrt();
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(s.scale[i] > 1e-12)) s.scale[i] = 1.0;
  return s;
}

KeypointGraph standardize(KeypointGraph graph, const DescriptorStats& stats) {
  for (auto& k : graph.keypoints) {
    if (k.descriptor.size() != stats.mean.size())
      throw ContractError("standardize: descriptor has " + std::to_string(k.descriptor.size()) +
                          " dims, stats have " + std::to_string(stats.mean.size()));
    k.descriptor = (k.descriptor - stats.mean).cwiseQuotient(stats.scale);
  }
  return graph;
}

void write_keypoints(std::ostream& out, const KeypointGraph& graph) {
  nlohmann::json header = {{"image", {{"width", graph.width}, {"height", graph.height}, {"source", graph.source_id}}}};
  out << header.dump() << '\n';
  for (const auto& k : graph.keypoints) {
    nlohmann::json j;
    j["x"] = k.position.x();
    j["y"] = k.position.y();
    j["score"] = k.score;
    j["label"] = k.label ? nlohmann::json(*k.label) : nlohmann::json(nullptr);
    if (k.descriptor.size() > 0)
      j["desc"] = std::vector<double>(k.descriptor.data(), k.descriptor.data() + k.descriptor.size());
    out << j.dump() << '\n';
  }
}

KeypointGraph read_keypoints(std::istream& in) {
  KeypointGraph graph;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("keypoint line is not JSON: ") + e.what(), line_start + e.byte);
    }
    if (j.contains("image")) {
      graph.width = j["image"].value("width", 0);
      graph.height = j["image"].value("height", 0);
      graph.source_id = j["image"].value("source", std::string());
      continue;
    }
    if (!j.contains("x") || !j.contains("y")) throw FormatError("keypoint line lacks x/y", line_start);
    Keypoint k;
    k.position = {j["x"].get<double>(), j["y"].get<double>()};
    k.score = j.value("score", 1.0);
    if (j.contains("label") && !j["label"].is_null()) k.label = j["label"].get<int>();
    if (j.contains("desc")) {
      const auto d = j["desc"].get<std::vector<double>>();
      k.descriptor = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    }
    graph.keypoints.push_back(std::move(k));
  }
  return graph;
}

void save_keypoints(const std::filesystem::path& path, const KeypointGraph& graph) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  write_keypoints(out, graph);
}

KeypointGraph load_keypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_keypoints(in);
}

}  // namespace rkp
