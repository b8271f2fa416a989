// Acceptance run: one PASS/FAIL line per criterion.
#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "rkp/detector.hpp"
#include "rkp/gradcheck.hpp"
#include "rkp/manifest.hpp"
#include "rkp/radiomics.hpp"
#include "rkp/registration.hpp"
#include "rkp/sinkhorn.hpp"
#include "rkp/synth.hpp"

#ifndef RKP_FIXTURE_DIR
#error "RKP_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace fs = std::filesystem;
using namespace rkp;
using ad::Tensor;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << "rkp " << args.front() << " exited " << code << ": " << e.str();
  return code;
}

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::ArrayXd v(ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(shape, v, true);
}

RegionOfInterest roi(const Image2D& img, std::vector<Pixel> px) {
  std::sort(px.begin(), px.end(), [](const Pixel& a, const Pixel& b) {
    return a.y() < b.y() || (a.y() == b.y() && a.x() < b.x());
  });
  return {&img, std::move(px), 1};
}

// 1. Trained graph matcher beats brute force on both table columns.
Verdict matcher_table(const fs::path& work) {
  Verdict v;
  const fs::path dir = work / "bench";
  const auto t0 = std::chrono::steady_clock::now();
  std::string table;
  const int code = cli({"bench", "--seed", "0", "--pairs", "50", "--train-pairs", "100", "--steps", "1000", "--out",
                        dir.string()},
                       &table);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.require(code == 0, "bench exit code");
  if (code != 0) return v;
  std::ifstream in(dir / "bench.json");
  const auto j = nlohmann::json::parse(in);
  const auto& bf = j.at("rows")[0];
  const auto& gnn = j.at("rows")[1];
  const double bf_n = bf.at("avg_good_matches"), gnn_n = gnn.at("avg_good_matches");
  const double bf_c = bf.at("mean_confidence"), gnn_c = gnn.at("mean_confidence");
  const auto store = ad::load_weights(dir / "matcher.rkw");
  const auto& h = store.hyperparameters();
  v.detail << std::fixed << std::setprecision(3) << "pairs=" << j.at("pairs").size() << " BF " << bf_n << " @ " << bf_c
           << ", GNN " << gnn_n << " @ " << gnn_c << ", " << std::setprecision(1) << secs << " s";
  v.require(j.at("pairs").size() == 50, "50 test pairs");
  v.require(gnn_n > bf_n, "GNN good matches > BF");
  v.require(gnn_c > bf_c, "GNN confidence > BF");
  v.require(secs <= 600.0, "runtime <= 10 min");
  v.require(h.at("feature_dim") == 64 && h.at("layers") == 3, "d=64, 3 layers");
  return v;
}

// 2. Keypoint heatmap loss improves label Dice; known transform is recovered.
Verdict registration(int problems) {
  Verdict v;
  double with_kp = 0, without_kp = 0, corner = 0;
  for (int i = 0; i < problems; ++i) {
    SynthSpec spec;
    spec.seed = 200 + i;
    const auto reg_image = [](const SynthImage& s) {
      return RegistrationImage{s.image, s.mask, extract_radiomic_keypoints(s.image, s.mask)};
    };
    const DeformedPair p = make_deformed_pair(spec, {}, {}, 900 + i);
    const RegistrationProblem prob{reg_image(p.a), reg_image(p.b)};
    RegistrationConfig on, off;
    on.lambda_kp = 1.0;
    off.lambda_kp = 0.0;
    with_kp += register_affine(prob, on).dice / problems;
    without_kp += register_affine(prob, off).dice / problems;

    const DeformedPair clean = make_deformed_pair(spec, {}, {1.0, 0.0}, 900 + i);
    const auto r = register_affine({reg_image(clean.a), reg_image(clean.b)}, off);
    corner += corner_error(r.transform, clean.t, spec.width, spec.height) / problems;
  }
  v.detail << std::fixed << std::setprecision(4) << problems << " problems: Dice kp=1 " << with_kp << ", kp=0 "
           << without_kp << " (gain " << with_kp - without_kp << "); mean corner error " << corner << " px";
  v.require(with_kp - without_kp >= 0.01, "Dice gain >= 0.01");
  v.require(corner < 0.5, "corner error < 0.5 px");
  return v;
}

// 3. Radiomic keypoints are repeatable under random affines.
Verdict keypoint_repeatability(int trials) {
  Verdict v;
  double sum = 0, worst = 1;
  for (int i = 0; i < trials; ++i) {
    SynthSpec spec;
    spec.seed = 5000 + i;
    AffineLimits limits;
    limits.max_rotation_deg = 15;
    limits.max_translation_px = 10;
    const DeformedPair p = make_deformed_pair(spec, limits, {}, 7000 + i);
    const double r = repeatability(extract_radiomic_keypoints(p.a.image, p.a.mask),
                                   extract_radiomic_keypoints(p.b.image, p.b.mask), p.t, 1.5);
    sum += r;
    worst = std::min(worst, r);
  }
  const double mean = sum / trials;
  v.detail << std::fixed << std::setprecision(4) << trials << " trials: mean " << mean << ", worst " << worst;
  v.require(mean >= 0.95, "mean repeatability >= 0.95");
  return v;
}

// 4. Detector losses: gradients and boundary values.
Verdict detector_losses() {
  Verdict v;
  double clf_err = 0, des_err = 0;
  const AffineTransform t = AffineTransform::rotation_about(0.1, {6, 6}) * AffineTransform::translation(1, -1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor p = random_tensor({1, 7, 9}, s, 0, 1), y = random_tensor({1, 7, 9}, s + 500, 0, 1);
    clf_err = std::max(clf_err, ad::grad_check([](const auto& in) { return loss_clf(in[0], in[1]); }, {p, y}, 1e-4)
                                    .max_relative_error);
    const Tensor a = random_tensor({4, 14, 14}, s + 1000, -1, 1), b = random_tensor({4, 14, 14}, s + 2000, -1, 1);
    const std::vector<Eigen::Vector2d> kp{{4.3, 5.6}, {8.2, 3.7}, {6.5, 9.1}};
    DescriptorLossConfig cfg;
    cfg.seed = s;
    des_err = std::max(des_err, ad::grad_check([&](const auto& in) { return loss_des(in[0], in[1], kp, t, cfg); },
                                               {a, b}, 1e-3)
                                    .max_relative_error);
  }
  Heatmap y = Heatmap::Zero(8, 8), q = Heatmap::Zero(8, 8);
  y.block(1, 1, 3, 3).setConstant(0.7);
  q.block(5, 5, 2, 2).setConstant(0.9);
  const double same = loss_clf(y, y), disjoint = loss_clf(y, q);
  v.detail << std::scientific << std::setprecision(2) << "20 seeds: clf max rel err " << clf_err << ", des max rel err "
           << des_err << std::defaultfloat << "; identical " << same << ", disjoint " << disjoint;
  v.require(clf_err < 1e-4, "clf gradient");
  v.require(des_err < 1e-3, "des gradient");
  v.require(same == 0.0, "identical maps give 0");
  v.require(disjoint == 1.0, "disjoint supports give 1");
  return v;
}

// 5. Sinkhorn residual, shift invariance and permutation agreement.
Verdict sinkhorn_suite() {
  Verdict v;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0, 1);
  double residual = 0, shift = 0;
  bool monotone = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + trial % 9, n = 2 + (trial * 7) % 11;
    const Eigen::MatrixXd s = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return g(rng); });
    const auto r = sinkhorn(s, 1.0, 100);
    residual = std::max(residual, r.residual);
    for (std::size_t k = 1; k < r.residual_history.size(); ++k)
      monotone = monotone && r.residual_history[k] <= r.residual_history[k - 1] + 1e-12;
    const double c = 10 * g(rng);
    const auto shifted = sinkhorn((s.array() + c).matrix(), 1.0 + c, 100);
    shift = std::max(shift, (shifted.plan - r.plan).cwiseAbs().maxCoeff());
  }
  int agree = 0, total = 0;
  std::array<int, 3> perm{0, 1, 2};
  do {
    Eigen::Matrix3d s = Eigen::Matrix3d::Constant(-10);
    for (int i = 0; i < 3; ++i) s(i, perm[i]) = 10;
    std::array<int, 3> q{0, 1, 2}, best{};
    double best_score = -INFINITY;
    do {
      const double score = s(0, q[0]) + s(1, q[1]) + s(2, q[2]);
      if (score > best_score) {
        best_score = score;
        best = q;
      }
    } while (std::next_permutation(q.begin(), q.end()));
    const auto r = sinkhorn(s, 1.0);
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      Eigen::Index j = 0;
      r.plan.row(i).head(3).maxCoeff(&j);
      ok = ok && j == best[i];
    }
    agree += ok;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  v.detail << std::scientific << std::setprecision(2) << "max residual " << residual << ", max shift diff " << shift
           << ", permutations " << agree << "/" << total;
  v.require(residual <= 1e-6, "residual <= 1e-6");
  v.require(monotone, "residual non-increasing");
  v.require(shift <= 1e-9, "shift invariance");
  v.require(agree == total, "permutation oracle");
  return v;
}

// 6. Radiomic features: finite, translation invariant, equal to the oracle fixtures.
Verdict radiomics_suite() {
  Verdict v;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  Image2D img(48, 48);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  int non_finite = 0;
  double shift = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Pixel> px;
    const int x0 = static_cast<int>(u(rng) * 20), y0 = static_cast<int>(u(rng) * 20);
    const int w = 1 + static_cast<int>(u(rng) * 20), h = 1 + static_cast<int>(u(rng) * 20);
    const double density = 0.05 + 0.95 * u(rng);
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        if (u(rng) < density) px.emplace_back(x, y);
    if (px.empty()) px.emplace_back(x0, y0);
    const RadiomicsConfig cfg{2 + trial % 63};
    const auto d = extract_descriptor(roi(img, px), cfg);
    non_finite += !d.values.allFinite();

    if (trial % 20 == 0) {
      const Pixel off(static_cast<int>(u(rng) * 7), static_cast<int>(u(rng) * 7));
      Image2D moved_img = Image2D::Zero(48, 48);
      std::vector<Pixel> moved;
      for (const auto& p : px) {
        moved.push_back(p + off);
        moved_img(p.y() + off.y(), p.x() + off.x()) = img(p.y(), p.x());
      }
      const auto e = extract_descriptor(roi(moved_img, moved), cfg);
      shift = std::max(shift, (e.values - d.values).cwiseAbs().maxCoeff());
    }
  }
  std::ifstream in(fs::path(RKP_FIXTURE_DIR) / "radiomics_fixtures.json");
  const auto fixtures = nlohmann::json::parse(in);
  double fixture_err = 0;
  int checked = 0;
  for (const auto& c : fixtures.at("cases")) {
    const int w = c.at("width"), h = c.at("height");
    Image2D f(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) f(y, x) = c.at("image")[y][x].get<double>();
    std::vector<Pixel> px;
    for (const auto& p : c.at("pixels")) px.emplace_back(p[0].get<int>(), p[1].get<int>());
    const auto d = extract_descriptor(roi(f, px), {c.at("bins").get<int>()});
    for (const auto& [name, value] : c.at("features").items()) {
      fixture_err = std::max(fixture_err, std::abs(d.values[feature_index(name)] - value.get<double>()));
      ++checked;
    }
  }
  v.detail << "1000 regions, " << non_finite << " non-finite; max shift diff " << std::scientific
           << std::setprecision(2) << shift << "; " << checked << " fixture values, max err " << fixture_err;
  v.require(non_finite == 0, "all finite");
  v.require(shift <= 1e-9, "translation invariance");
  v.require(checked == static_cast<int>(fixtures.at("cases").size()) * kDescriptorSize, "every feature covered");
  v.require(fixture_err <= 1e-9, "fixtures within 1e-9");
  return v;
}

// 7. Every subcommand replays to identical output hashes.
Verdict determinism(const fs::path& work) {
  Verdict v;
  const fs::path d = work / "replay";
  fs::remove_all(d);
  const auto p = [&](const std::string& name) { return (d / name).string(); };
  const std::vector<std::vector<std::string>> runs{
      {"synth", "--seed", "3", "--regions", "12", "--width", "80", "--height", "80", "--out", p("a")},
      {"synth", "--seed", "4", "--regions", "12", "--width", "80", "--height", "80", "--out", p("b")},
      {"keypoints", "--image", p("a/image.pgm"), "--mask", p("a/mask.pgm"), "--out", p("a.jsonl")},
      {"keypoints", "--image", p("b/image.pgm"), "--mask", p("b/mask.pgm"), "--out", p("b.jsonl")},
      {"match-bf", "--a", p("a.jsonl"), "--b", p("b.jsonl"), "--out", p("bf.json")},
      {"train-matcher", "--seed", "2", "--pairs", "6", "--regions", "12", "--steps", "20", "--out", p("m")},
      {"match-gnn", "--a", p("a.jsonl"), "--b", p("a.jsonl"), "--weights", p("m/matcher.rkw"), "--out", p("gnn.json")},
      {"train-detector", "--seed", "1", "--images", "2", "--size", "32", "--regions", "4", "--epochs", "2", "--out",
       p("det")},
      {"keypoints", "--image", p("a/image.pgm"), "--weights", p("det/detector.rkw"), "--out", p("learned.jsonl")},
      {"register", "--moving-image", p("a/image.pgm"), "--moving-mask", p("a/mask.pgm"), "--fixed-image",
       p("b/image.pgm"), "--fixed-mask", p("b/mask.pgm"), "--iterations", "30", "--out", p("reg.json")},
      {"visualize", "--image-a", p("a/image.pgm"), "--image-b", p("b/image.pgm"), "--a", p("a.jsonl"), "--b",
       p("b.jsonl"), "--matches", p("bf.json"), "--out", p("vis.ppm")},
  };
  int replayed = 0, outputs = 0;
  for (const auto& args : runs) {
    if (cli(args) != 0) {
      v.require(false, args.front() + " run");
      continue;
    }
  }
  std::vector<fs::path> manifests;
  for (const auto& e : fs::recursive_directory_iterator(d))
    if (e.path().filename() == "manifest.json" || e.path().string().ends_with(".manifest.json"))
      manifests.push_back(e.path());
  std::sort(manifests.begin(), manifests.end());
  if (fs::exists(work / "bench" / "manifest.json")) manifests.push_back(work / "bench" / "manifest.json");
  for (const auto& m : manifests) {
    std::string report;
    const int code = cli({"replay", "--manifest", m.string()}, &report);
    outputs += static_cast<int>(load_manifest(m).outputs.size());
    v.require(code == 0 && report.find("DIFFERS") == std::string::npos, "replay of " + m.filename().string());
    ++replayed;
  }
  v.detail << replayed << " manifests, " << outputs << " output files replayed";
  v.require(replayed >= static_cast<int>(runs.size()), "one manifest per run");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path work = fs::temp_directory_path() / "rkp_acceptance";
  int problems = 10, trials = 100;
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--registration-problems", problems)->capture_default_str();
  app.add_option("--repeatability-trials", trials)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"matcher table", [&] { return matcher_table(work); }},
      {"registration", [&] { return registration(problems); }},
      {"keypoint repeatability", [&] { return keypoint_repeatability(trials); }},
      {"detector losses", detector_losses},
      {"sinkhorn", sinkhorn_suite},
      {"radiomics", radiomics_suite},
      {"determinism", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " AC" << i + 1 << " " << criteria[i].first << ": " << v.detail.str()
              << " (" << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
