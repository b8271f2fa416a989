#include <cmath>
#include <fstream>
#include <stdexcept>

#include "rkp/detector.hpp"
#include "rkp/error.hpp"
#include "rkp/optim.hpp"

namespace rkp {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<Eigen::Vector2d> inside_after(const std::vector<Eigen::Vector2d>& pts, const AffineTransform& t,
                                          Eigen::Index w, Eigen::Index h) {
  std::vector<Eigen::Vector2d> keep;
  for (const auto& p : pts) {
    const Eigen::Vector2d q = t.apply(p);
    if (q.x() >= 0 && q.y() >= 0 && q.x() <= w - 1 && q.y() <= h - 1) keep.push_back(p);
  }
  return keep;
}

KeypointGraph as_graph(std::vector<Keypoint> kps, const Image2D& img) {
  KeypointGraph g;
  g.keypoints = std::move(kps);
  g.width = static_cast<int>(img.cols());
  g.height = static_cast<int>(img.rows());
  return g;
}

}  // namespace

double detector_repeatability(const DetectorNet& net, const Image2D& image, const AffineTransform& t,
                              double threshold, int window, double epsilon) {
  const Image2D warped = warp_affine(image, t, Interpolation::Bilinear);
  const KeypointGraph a = as_graph(nms(net.detect(image), threshold, window), image);
  const KeypointGraph b = as_graph(nms(net.detect(warped), threshold, window), warped);
  return repeatability(a, b, t, epsilon);
}

DetectorTrainResult train_detector(std::span<const TrainingImage> data, const DetectorTrainConfig& config,
                                   const TrainingImage* holdout) {
  if (data.empty()) throw std::invalid_argument("train_detector: no training images");
  if (config.epochs < 0) throw std::invalid_argument("train_detector: negative epoch count");

  DetectorTrainResult result{DetectorNet(config.net), {}, false, {}};
  DetectorNet& net = result.net;
  ad::Adam adam(net.parameters(), ad::AdamConfig{config.learning_rate});

  std::vector<Heatmap> targets;
  for (const auto& item : data)
    targets.push_back(ground_truth_heatmap(item.keypoints, item.image.cols(), item.image.rows(), config.heatmap_sigma));

  ad::ParameterStore last_good = net.parameters().clone();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    DetectorEpochLog entry;
    entry.epoch = epoch + 1;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Image2D& img = data[i].image;
      const Eigen::Vector2d centre((img.cols() - 1) / 2.0, (img.rows() - 1) / 2.0);
      const AffineTransform t = random_affine(mix(config.seed, epoch, i), config.augmentation, centre);
      const Image2D warped = warp_affine(img, t, Interpolation::Bilinear);

      const auto out = net.forward(img);
      const auto out_w = net.forward(warped);
      const DetectionLoss det = loss_det(out.detection, out_w.detection, targets[i], t);

      DescriptorLossConfig dcfg = config.descriptor;
      dcfg.seed = mix(config.seed ^ config.descriptor.seed, epoch + 0x5151, i);
      const auto anchors = inside_after(data[i].keypoints, t, warped.cols(), warped.rows());
      const ad::Tensor des = loss_des(out.descriptors, out_w.descriptors, anchors, t, dcfg);

      const ad::Tensor total = det.total + config.descriptor_weight * des;
      if (!std::isfinite(total.item())) {
        result.diverged = true;
        result.message = "non-finite loss at epoch " + std::to_string(epoch + 1);
        result.net = DetectorNet(std::move(last_good));
        return result;
      }
      adam.zero_grad();
      total.backward();
      adam.step();

      entry.clf += det.clf.item();
      entry.geo += det.geo.item();
      entry.des += des.item();
    }
    const double n = static_cast<double>(data.size());
    entry.clf /= n;
    entry.geo /= n;
    entry.des /= n;

    bool finite = true;
    for (const auto& [name, tensor] : net.parameters().tensors()) finite = finite && tensor.value().allFinite();
    if (!finite) {
      result.diverged = true;
      result.message = "non-finite parameters after epoch " + std::to_string(epoch + 1);
      result.net = DetectorNet(std::move(last_good));
      return result;
    }
    last_good = net.parameters().clone();

    if (holdout != nullptr) {
      const Image2D& img = holdout->image;
      const Eigen::Vector2d centre((img.cols() - 1) / 2.0, (img.rows() - 1) / 2.0);
      const AffineTransform t = random_affine(mix(config.seed, 0xFFFF, 0), config.augmentation, centre);
      entry.repeatability = detector_repeatability(net, img, t, config.nms_threshold, config.nms_window,
                                                   config.repeatability_epsilon);
    }
    result.log.push_back(entry);
  }
  return result;
}

void write_detector_log(const std::filesystem::path& path, std::span<const DetectorEpochLog> log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,l_clf,l_geo,l_des,repeatability\n";
  out.precision(9);
  for (const auto& e : log)
    out << e.epoch << ',' << e.clf << ',' << e.geo << ',' << e.des << ',' << e.repeatability << '\n';
}

}  // namespace rkp
