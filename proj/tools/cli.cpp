#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rkp/bench.hpp"
#include "rkp/detector.hpp"
#include "rkp/error.hpp"
#include "rkp/keypoints.hpp"
#include "rkp/manifest.hpp"
#include "rkp/matcher.hpp"
#include "rkp/pgm.hpp"
#include "rkp/registration.hpp"
#include "rkp/synth.hpp"
#include "rkp/visualize.hpp"

namespace rkp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Session {
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::map<std::string, std::uint64_t> seeds;
  fs::path manifest_path;

  const fs::path& input(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw InputError(p.string());
    inputs.push_back(p);
    return p;
  }
  const fs::path& output(const fs::path& p) {
    outputs.push_back(p);
    return p;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw InputError("cannot create directory " + dir.string());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
}

json stats_json(const DescriptorStats& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
}

DescriptorStats stats_from_json(const json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto scale = j.at("scale").get<std::vector<double>>();
  if (mean.size() != scale.size()) throw FormatError("descriptor stats: mean and scale differ in length", 0);
  return {Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size()),
          Eigen::Map<const Eigen::VectorXd>(scale.data(), scale.size())};
}

/// Descriptor statistics travel inside matcher weights as two buffers.
void embed_stats(ad::ParameterStore& store, const DescriptorStats& s) {
  const int n = static_cast<int>(s.mean.size());
  store.set("desc.mean", ad::Tensor::from({n}, s.mean.array()));
  store.set("desc.scale", ad::Tensor::from({n}, s.scale.array()));
}

std::optional<DescriptorStats> embedded_stats(const ad::ParameterStore& store) {
  if (!store.contains("desc.mean") || !store.contains("desc.scale")) return std::nullopt;
  return DescriptorStats{store.at("desc.mean").value().matrix(), store.at("desc.scale").value().matrix()};
}

struct DeformOptions {
  double rotation = 15.0;
  double translation = 10.0;
  double scale = 0.10;

  void add(CLI::App* app) {
    app->add_option("--deform-rot", rotation, "Max rotation in degrees")->capture_default_str();
    app->add_option("--deform-trans", translation, "Max translation in pixels")->capture_default_str();
    app->add_option("--deform-scale", scale, "Max relative scale change")->capture_default_str();
  }
  AffineLimits limits() const { return {rotation, translation, scale, 0.0}; }
};

json config_snapshot(const CLI::App* sub) {
  json cfg = json::object();
  std::istringstream lines(sub->config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '#' || line[0] == '[') continue;
    std::string key = CLI::detail::trim_copy(line.substr(0, eq));
    std::string value = CLI::detail::trim_copy(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key != "config") cfg[key] = value;
  }
  return cfg;
}

/// Moves "--config FILE" entries into the argument list as flags placed before the explicit
/// ones, so explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> head, rest;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      const fs::path path = args[i + 1];
      if (!fs::is_regular_file(path)) throw InputError(path.string());
      for (const auto& item : CLI::ConfigINI().from_file(path.string())) {
        from_file.push_back("--" + item.fullname());
        for (const auto& v : item.inputs) from_file.push_back(v);
      }
      ++i;
      continue;
    }
    (i == 0 ? head : rest).push_back(args[i]);
  }
  head.insert(head.end(), from_file.begin(), from_file.end());
  head.insert(head.end(), rest.begin(), rest.end());
  return head;
}

fs::path config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") return args[i + 1];
  return {};
}

KeypointGraph load_graph(Session& s, const fs::path& p) { return load_keypoints(s.input(p)); }

void standardize_graphs(KeypointGraph& a, KeypointGraph& b, const DescriptorStats& stats) {
  a = standardize(std::move(a), stats);
  b = standardize(std::move(b), stats);
}

json match_output(const MatchSet& ms, const KeypointGraph& a, const KeypointGraph& b) {
  return to_json(ms, match_metrics(ms, label_correspondences(a, b)));
}

std::vector<TrainingImage> detector_dataset(int count, int size, int regions, std::uint64_t seed) {
  std::vector<TrainingImage> data;
  for (int i = 0; i < count; ++i) {
    SynthSpec spec;
    spec.width = spec.height = size;
    spec.regions = regions;
    spec.seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const SynthImage img = synth_generate(spec);
    data.push_back({img.image, extract_radiomic_keypoints(img.image, img.mask).positions()});
  }
  return data;
}

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err);

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const InputError& e) {
    err << "error: missing or unreadable input: " << e.what() << '\n';
    return kInputError;
  } catch (const FormatError& e) {
    err << "error: malformed input: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kContractError;
  }
}

namespace {

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> args = expand_config(raw_args);

  CLI::App app{"Radiomic keypoints, graph matching and keypoint-guided registration", "rkp"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  Session session;
  std::uint64_t seed = 0;
  std::string config_unused;
  DeformOptions deform;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_unused, "key=value configuration file");
  };

  // synth
  SynthSpec spec;
  fs::path out_dir;
  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic phantom");
  add_common(synth);
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--regions", spec.regions)->capture_default_str();
  synth->add_option("--width", spec.width)->capture_default_str();
  synth->add_option("--height", spec.height)->capture_default_str();
  synth->add_option("--noise", spec.noise_sigma)->capture_default_str();
  synth->add_option("--texture", spec.texture_scale)->capture_default_str();
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->callback([&] {
    ensure_dir(out_dir);
    const SynthImage img = synth_generate(spec);
    save_pgm(img.image, session.output(out_dir / "image.pgm"), 16);
    save_pgm(img.mask, session.output(out_dir / "mask.pgm"));
    session.seeds["synth"] = spec.seed;
    session.manifest_path = out_dir / "manifest.json";
    out << "wrote " << (out_dir / "image.pgm").string() << " and mask with " << spec.regions << " regions\n";
  });

  // keypoints
  fs::path image_path, mask_path, weights_path, out_file;
  KeypointConfig kp_config;
  double nms_threshold = 0.5;
  int nms_window = 5;
  std::string centroid = "unweighted";
  auto* keypoints = app.add_subcommand("keypoints", "Radiomic (or learned) keypoints of one image");
  add_common(keypoints);
  keypoints->add_option("--image", image_path)->required();
  keypoints->add_option("--mask", mask_path, "Label mask (radiomic mode)");
  keypoints->add_option("--weights", weights_path, "Detector weights (learned mode)");
  keypoints->add_option("--bins", kp_config.radiomics.bins)->capture_default_str();
  keypoints->add_option("--min-area", kp_config.min_area)->capture_default_str();
  keypoints->add_option("--centroid", centroid)->check(CLI::IsMember({"unweighted", "weighted"}))->capture_default_str();
  keypoints->add_option("--threshold", nms_threshold, "Detection threshold (learned mode)")->capture_default_str();
  keypoints->add_option("--window", nms_window, "NMS window (learned mode)")->capture_default_str();
  keypoints->add_option("--out", out_file, "Output JSONL")->required();
  keypoints->callback([&] {
    ensure_parent(out_file);
    const Image2D img = load_pgm_image(session.input(image_path));
    KeypointGraph graph;
    if (!weights_path.empty()) {
      const DetectorNet net(ad::load_weights(session.input(weights_path)));
      ad::NoGradGuard no_grad;
      const auto fwd = net.forward(img);
      graph.keypoints = nms(to_heatmap(fwd.detection), nms_threshold, nms_window);
      const auto positions = [&] {
        std::vector<Eigen::Vector2d> p;
        for (const auto& k : graph.keypoints) p.push_back(k.position);
        return p;
      }();
      if (!positions.empty()) {
        const ad::Tensor desc = ad::sample_points(fwd.descriptors, positions);
        const auto m = desc.matrix();
        for (std::size_t i = 0; i < graph.size(); ++i)
          graph.keypoints[i].descriptor = m.row(static_cast<Eigen::Index>(i)).transpose();
      }
      graph.width = static_cast<int>(img.cols());
      graph.height = static_cast<int>(img.rows());
    } else {
      if (mask_path.empty()) throw std::invalid_argument("keypoints: --mask is required without --weights");
      kp_config.centroid = centroid == "weighted" ? CentroidMode::IntensityWeighted : CentroidMode::Unweighted;
      graph = extract_radiomic_keypoints(img, load_pgm_mask(session.input(mask_path)), kp_config);
    }
    graph.source_id = image_path.filename().string();
    save_keypoints(session.output(out_file), graph);
    session.manifest_path = out_file.string() + ".manifest.json";
    out << graph.size() << " keypoints -> " << out_file.string() << '\n';
  });

  // match-bf / match-gnn
  fs::path graph_a, graph_b, stats_path;
  double ratio = 0.75, tau = 0.2;
  auto* match_bf = app.add_subcommand("match-bf", "Brute-force descriptor matching with ratio test");
  add_common(match_bf);
  match_bf->add_option("--a", graph_a)->required();
  match_bf->add_option("--b", graph_b)->required();
  match_bf->add_option("--ratio", ratio)->capture_default_str();
  match_bf->add_option("--stats", stats_path, "Descriptor standardisation JSON");
  match_bf->add_option("--out", out_file)->required();
  match_bf->callback([&] {
    ensure_parent(out_file);
    KeypointGraph a = load_graph(session, graph_a), b = load_graph(session, graph_b);
    if (!stats_path.empty()) standardize_graphs(a, b, stats_from_json(read_json(session.input(stats_path))));
    const MatchSet ms = match_bruteforce(a, b, ratio);
    write_text(session.output(out_file), match_output(ms, a, b).dump(2) + "\n");
    session.manifest_path = out_file.string() + ".manifest.json";
    out << ms.good_count() << " matches, mean confidence " << ms.mean_confidence() << '\n';
  });

  auto* match_gnn = app.add_subcommand("match-gnn", "Attentional graph matching with Sinkhorn");
  add_common(match_gnn);
  match_gnn->add_option("--a", graph_a)->required();
  match_gnn->add_option("--b", graph_b)->required();
  match_gnn->add_option("--weights", weights_path)->required();
  match_gnn->add_option("--threshold", tau, "Minimum assignment probability")->capture_default_str();
  match_gnn->add_option("--out", out_file)->required();
  match_gnn->callback([&] {
    ensure_parent(out_file);
    KeypointGraph a = load_graph(session, graph_a), b = load_graph(session, graph_b);
    const MatcherNet net(ad::load_weights(session.input(weights_path)));
    if (const auto stats = embedded_stats(net.parameters())) standardize_graphs(a, b, *stats);
    const MatchSet ms = gnn_match(a, b, net, tau);
    write_text(session.output(out_file), match_output(ms, a, b).dump(2) + "\n");
    session.manifest_path = out_file.string() + ".manifest.json";
    out << ms.good_count() << " matches, mean confidence " << ms.mean_confidence() << '\n';
  });

  // train-detector
  DetectorTrainConfig det_config;
  int det_images = 20, det_size = 64, det_regions = 8;
  auto* train_det = app.add_subcommand("train-detector", "Train the detector on synthetic phantoms");
  add_common(train_det);
  train_det->add_option("--seed", seed)->capture_default_str();
  train_det->add_option("--images", det_images)->capture_default_str();
  train_det->add_option("--size", det_size)->capture_default_str();
  train_det->add_option("--regions", det_regions)->capture_default_str();
  train_det->add_option("--epochs", det_config.epochs)->capture_default_str();
  train_det->add_option("--lr", det_config.learning_rate)->capture_default_str();
  train_det->add_option("--threshold", det_config.nms_threshold)->capture_default_str();
  train_det->add_option("--out", out_dir)->required();
  train_det->callback([&] {
    ensure_dir(out_dir);
    det_config.seed = seed;
    det_config.net.seed = seed;
    const auto data = detector_dataset(det_images, det_size, det_regions, seed);
    const auto holdout = detector_dataset(1, det_size, det_regions, seed + 0x9E37);
    const DetectorTrainResult r = train_detector(data, det_config, &holdout.front());
    ad::save_weights(r.net.parameters(), session.output(out_dir / "detector.rkw"));
    write_detector_log(session.output(out_dir / "training_log.csv"), r.log);
    session.seeds["train"] = seed;
    session.manifest_path = out_dir / "manifest.json";
    if (r.diverged) err << "warning: " << r.message << '\n';
    if (!r.log.empty())
      out << "epoch " << r.log.back().epoch << ": l_clf " << r.log.back().clf << ", repeatability "
          << r.log.back().repeatability << '\n';
  });

  // train-matcher
  MatcherTrainConfig match_config;
  int train_pairs = 100, regions = 35;
  PerturbConfig perturb;
  auto* train_match = app.add_subcommand("train-matcher", "Train the graph matcher on synthetic pairs");
  add_common(train_match);
  deform.add(train_match);
  train_match->add_option("--seed", seed)->capture_default_str();
  train_match->add_option("--pairs", train_pairs)->capture_default_str();
  train_match->add_option("--regions", regions)->capture_default_str();
  train_match->add_option("--steps", match_config.steps)->capture_default_str();
  train_match->add_option("--lr", match_config.learning_rate)->capture_default_str();
  train_match->add_option("--gamma", perturb.gamma)->capture_default_str();
  train_match->add_option("--noise", perturb.noise_sigma)->capture_default_str();
  train_match->add_option("--out", out_dir)->required();
  train_match->callback([&] {
    ensure_dir(out_dir);
    SynthSpec s;
    s.regions = regions;
    auto pairs = build_graph_pairs({s, deform.limits(), perturb, train_pairs, seed * 2 + 1}, {});
    std::vector<KeypointGraph> graphs;
    for (const auto& p : pairs) {
      graphs.push_back(p.a);
      graphs.push_back(p.b);
    }
    const DescriptorStats stats = fit_descriptor_stats(graphs);
    standardize_pairs(pairs, stats);
    match_config.seed = seed;
    match_config.net.seed = seed;
    MatcherTrainResult r = train_matcher(pairs, match_config);
    embed_stats(r.net.parameters(), stats);
    ad::save_weights(r.net.parameters(), session.output(out_dir / "matcher.rkw"));
    write_matcher_log(session.output(out_dir / "training_log.csv"), r.log);
    write_text(session.output(out_dir / "descriptor_stats.json"), stats_json(stats).dump(2) + "\n");
    session.seeds["train"] = seed;
    session.manifest_path = out_dir / "manifest.json";
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    if (!r.log.empty())
      out << "epoch " << r.log.back().epoch << ": loss " << r.log.back().loss << ", precision "
          << r.log.back().precision << ", recall " << r.log.back().recall << '\n';
  });

  // register
  fs::path moving_image, moving_mask, fixed_image, fixed_mask;
  RegistrationConfig reg_config;
  auto* reg = app.add_subcommand("register", "Affine registration with keypoint heatmap loss");
  add_common(reg);
  reg->add_option("--moving-image", moving_image)->required();
  reg->add_option("--moving-mask", moving_mask)->required();
  reg->add_option("--fixed-image", fixed_image)->required();
  reg->add_option("--fixed-mask", fixed_mask)->required();
  reg->add_option("--lambda-kp", reg_config.lambda_kp)->capture_default_str();
  reg->add_option("--lambda-img", reg_config.lambda_img)->capture_default_str();
  reg->add_option("--sigma", reg_config.heatmap_sigma, "Keypoint heatmap sigma")->capture_default_str();
  reg->add_option("--iterations", reg_config.iterations)->capture_default_str();
  reg->add_option("--lr", reg_config.learning_rate)->capture_default_str();
  reg->add_option("--out", out_file, "Report JSON")->required();
  reg->callback([&] {
    ensure_parent(out_file);
    RegistrationProblem p;
    p.moving.image = load_pgm_image(session.input(moving_image));
    p.moving.mask = load_pgm_mask(session.input(moving_mask));
    p.fixed.image = load_pgm_image(session.input(fixed_image));
    p.fixed.mask = load_pgm_mask(session.input(fixed_mask));
    p.moving.keypoints = extract_radiomic_keypoints(p.moving.image, p.moving.mask);
    p.fixed.keypoints = extract_radiomic_keypoints(p.fixed.image, p.fixed.mask);
    const RegistrationResult r = register_affine(p, reg_config);
    json report = to_json(r);
    report["transform_text"] = r.transform.to_text();
    write_text(session.output(out_file), report.dump(2) + "\n");
    session.manifest_path = out_file.string() + ".manifest.json";
    out << "dice " << r.dice << ", best loss " << r.best_loss << " at iteration " << r.best_iteration << '\n';
  });

  // bench
  BenchConfig bench_config;
  auto* bench = app.add_subcommand("bench", "BF vs graph matcher on synthetic deformed pairs");
  add_common(bench);
  deform.add(bench);
  bench->add_option("--seed", seed)->capture_default_str();
  bench->add_option("--pairs", bench_config.test_pairs, "Test pairs")->capture_default_str();
  bench->add_option("--train-pairs", bench_config.train_pairs)->capture_default_str();
  bench->add_option("--steps", bench_config.training.steps)->capture_default_str();
  bench->add_option("--regions", bench_config.spec.regions)->capture_default_str();
  bench->add_option("--ratio", bench_config.ratio)->capture_default_str();
  bench->add_option("--threshold", bench_config.training.tau)->capture_default_str();
  bench->add_option("--gamma", bench_config.perturb.gamma)->capture_default_str();
  bench->add_option("--noise", bench_config.perturb.noise_sigma)->capture_default_str();
  bench->add_option("--out", out_dir)->required();
  bench->callback([&] {
    ensure_dir(out_dir);
    bench_config.seed = seed;
    bench_config.training.seed = seed;
    bench_config.training.net.seed = seed;
    bench_config.limits = deform.limits();
    BenchOutcome r = run_benchmark(bench_config);
    const std::string table = format_table(r.report);
    write_text(session.output(out_dir / "table.txt"), table);
    write_text(session.output(out_dir / "bench.json"), to_json(r.report).dump(2) + "\n");
    embed_stats(r.training.net.parameters(), r.stats);
    ad::save_weights(r.training.net.parameters(), session.output(out_dir / "matcher.rkw"));
    write_matcher_log(session.output(out_dir / "training_log.csv"), r.training.log);
    session.seeds["bench"] = seed;
    session.manifest_path = out_dir / "manifest.json";
    out << table;
  });

  // visualize
  fs::path image_a, image_b, matches_path;
  auto* vis = app.add_subcommand("visualize", "Side-by-side PPM of matches coloured by confidence");
  add_common(vis);
  vis->add_option("--image-a", image_a)->required();
  vis->add_option("--image-b", image_b)->required();
  vis->add_option("--a", graph_a)->required();
  vis->add_option("--b", graph_b)->required();
  vis->add_option("--matches", matches_path)->required();
  vis->add_option("--out", out_file, "Output PPM")->required();
  vis->callback([&] {
    ensure_parent(out_file);
    const Image2D ia = load_pgm_image(session.input(image_a));
    const Image2D ib = load_pgm_image(session.input(image_b));
    const KeypointGraph a = load_graph(session, graph_a), b = load_graph(session, graph_b);
    const MatchSet ms = match_set_from_json(read_json(session.input(matches_path)));
    save_ppm(session.output(out_file), render_matches(ia, ib, a, b, ms));
    session.manifest_path = out_file.string() + ".manifest.json";
    out << "drew " << ms.good_count() << " matches -> " << out_file.string() << '\n';
  });

  // replay
  fs::path manifest_in;
  int replay_status = kOk;
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare output hashes");
  replay->add_option("--manifest", manifest_in)->required();
  replay->callback([&] {
    const RunManifest m = load_manifest(session.input(manifest_in));
    std::ostringstream quiet_out, quiet_err;
    const int code = run(m.argv, quiet_out, quiet_err);
    if (code != kOk) {
      err << quiet_err.str();
      replay_status = code;
      return;
    }
    bool same = true;
    for (const auto& [path, hash] : m.outputs) {
      const std::string now = fs::is_regular_file(path) ? file_hash(path) : std::string("missing");
      out << (now == hash ? "same    " : "DIFFERS ") << path << '\n';
      same = same && now == hash;
    }
    if (!same) replay_status = kContractError;
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  if (replay->parsed()) return replay_status;

  if (!session.manifest_path.empty()) {
    RunManifest m;
    const CLI::App* sub = app.get_subcommands().front();
    m.command = sub->get_name();
    m.argv = raw_args;
    m.config = config_snapshot(sub);
    if (const fs::path cfg = config_path(raw_args); !cfg.empty()) session.input(cfg);
    m.seeds = session.seeds;
    for (const auto& p : session.inputs) m.inputs[p.string()] = file_hash(p);
    for (const auto& p : session.outputs) m.outputs[p.string()] = file_hash(p);
    save_manifest(session.manifest_path, m);
  }
  return kOk;
}

}  // namespace

}  // namespace rkp::cli
