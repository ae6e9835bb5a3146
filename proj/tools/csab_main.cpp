#include <glob.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csab/augment.hpp"
#include "csab/checkpoint.hpp"
#include "csab/config.hpp"
#include "csab/dataset.hpp"
#include "csab/image.hpp"
#include "csab/infer.hpp"
#include "csab/log.hpp"
#include "csab/model.hpp"
#include "csab/saliency.hpp"
#include "csab/train.hpp"
#include "json.hpp"

namespace {

using namespace csab;
using nlohmann::json;

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g;
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i)
      out.emplace_back(g.gl_pathv[i]);
  ::globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH)
    throw Error("glob failed on pattern '" + pattern + "'");
  std::sort(out.begin(), out.end());
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("short write on '" + path + "'");
}

ModelSpec spec_by_name(const std::string& name) {
  if (name == "tiny") return ModelSpec::tiny();
  if (name == "vgg16") return ModelSpec::vgg16();
  throw UsageError("unknown spec '" + name + "' (expected tiny or vgg16)");
}

void check_label_maps_match(const LabelMap& a, const LabelMap& b) {
  if (a.entries != b.entries || a.class_names != b.class_names)
    throw DataError(
        "manifest label map does not match the checkpoint's label map");
}

// Reconstructs the record list a subset name refers to, using the split
// parameters stored in the checkpoint.
std::vector<SampleRecord> subset_records(const Checkpoint& cp,
                                         const DatasetManifest& manifest,
                                         const std::string& subset) {
  SplitResult split = environment_split(manifest, cp.test_env);
  if (subset == "test") return split.test;
  const ValSplit carve = stratified_val_split(
      split.train, cp.train_config.val_fraction, cp.train_config.seed);
  const auto& idx = subset == "train" ? carve.train_idx : carve.val_idx;
  std::vector<SampleRecord> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(split.train[i]);
  return out;
}

struct TrainFlags {
  std::string manifest_path;
  std::string out_path;
  std::string metrics_path;
  std::string config_path;
  std::string spec_name = "tiny";
  std::string head_name = "csab";
  std::string gmp_scale = "literal";
  int test_env = 0;
  std::uint64_t seed = 0;
  std::uint64_t augment_seed = 0;
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double lr = 0.01;
  double momentum = 0.9;
  double val_fraction = 0.1;
};

// Resolution order: TrainConfig defaults, then the config file, then any
// flag the user actually passed.
TrainConfig resolve_train_config(const TrainFlags& f, const CLI::App* cmd) {
  TrainConfig cfg;
  if (!f.config_path.empty()) apply_config(parse_config_file(f.config_path), cfg);
  if (cmd->count("--epochs")) cfg.epochs = f.epochs;
  if (cmd->count("--batch")) cfg.batch_size = f.batch;
  if (cmd->count("--lr")) cfg.learning_rate = f.lr;
  if (cmd->count("--momentum")) cfg.momentum = f.momentum;
  if (cmd->count("--seed")) cfg.seed = f.seed;
  if (cmd->count("--val-fraction")) cfg.val_fraction = f.val_fraction;
  if (cmd->count("--augment-seed"))
    cfg.augment.seed = f.augment_seed;
  else if (cmd->count("--seed"))
    cfg.augment.seed = f.seed;
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"handwashing step classifier (channel+spatial attention with "
               "bilinear pooling)"};
  app.require_subcommand(1);
  int exit_code = 0;

  // ---- scan ----
  auto* scan = app.add_subcommand(
      "scan", "walk a dataset tree and write its manifest");
  std::string scan_data, scan_labelmap, scan_exclude, scan_out;
  scan->add_option("--data", scan_data, "dataset root (env<k>/<Class>/*)")
      ->required();
  scan->add_option("--labelmap", scan_labelmap,
                   "label map file (default: built-in 12-movement map)");
  scan->add_option("--exclude", scan_exclude,
                   "file of root-relative paths to skip");
  scan->add_option("--out", scan_out, "manifest path (default: stdout)");
  scan->callback([&] {
    const LabelMap lm = scan_labelmap.empty() ? LabelMap::default_map()
                                              : LabelMap::load(scan_labelmap);
    const std::set<std::string> excl =
        scan_exclude.empty() ? std::set<std::string>{}
                             : load_exclude_list(scan_exclude);
    const ScanOutcome sc = scan_dataset(scan_data, lm, excl);
    for (const auto& [path, reason] : sc.skipped)
      log_warn("skipped " + path + ": " + reason);
    if (scan_out.empty())
      std::cout << serialize_manifest(sc.manifest);
    else
      save_manifest(sc.manifest, scan_out);
    log_info("scanned " + std::to_string(sc.manifest.records.size()) +
             " records (" + std::to_string(sc.skipped.size()) + " skipped)");
  });

  // ---- split ----
  auto* split_cmd = app.add_subcommand(
      "split", "hold one environment out and write train/test manifests");
  std::string split_manifest, split_prefix;
  int split_env = 0;
  split_cmd->add_option("--manifest", split_manifest)->required();
  split_cmd->add_option("--test-env", split_env)->required();
  split_cmd->add_option("--out-prefix", split_prefix)->required();
  split_cmd->callback([&] {
    const DatasetManifest m = load_manifest(split_manifest);
    SplitResult sr = environment_split(m, split_env);
    DatasetManifest train_m{sr.train, m.label_map, 0};
    train_m.checksum = train_m.compute_checksum();
    DatasetManifest test_m{sr.test, m.label_map, 0};
    test_m.checksum = test_m.compute_checksum();
    save_manifest(train_m, split_prefix + ".train.tsv");
    save_manifest(test_m, split_prefix + ".test.tsv");
    log_info("train " + std::to_string(sr.train.size()) + " records, test " +
             std::to_string(sr.test.size()) + " records");
  });

  // ---- train ----
  auto* train_cmd =
      app.add_subcommand("train", "train a model on an environment split");
  TrainFlags tf;
  train_cmd->add_option("--manifest", tf.manifest_path)->required();
  train_cmd->add_option("--test-env", tf.test_env)->required();
  train_cmd->add_option("--spec", tf.spec_name, "tiny or vgg16");
  train_cmd->add_option("--head", tf.head_name, "csab or plain");
  train_cmd->add_option("--gmp-scale", tf.gmp_scale,
                        "literal (divide max by H*W) or conventional");
  train_cmd->add_option("--epochs", tf.epochs);
  train_cmd->add_option("--batch", tf.batch);
  train_cmd->add_option("--lr", tf.lr);
  train_cmd->add_option("--momentum", tf.momentum);
  train_cmd->add_option("--seed", tf.seed);
  train_cmd->add_option("--augment-seed", tf.augment_seed);
  train_cmd->add_option("--val-fraction", tf.val_fraction);
  train_cmd->add_option("--config", tf.config_path, "key = value run config");
  train_cmd->add_option("--metrics", tf.metrics_path, "per-epoch CSV path");
  train_cmd->add_option("--out", tf.out_path, "checkpoint path")->required();
  train_cmd->callback([&] {
    const DatasetManifest m = load_manifest(tf.manifest_path);
    ModelSpec spec = spec_by_name(tf.spec_name);
    spec.head = parse_head_kind(tf.head_name);
    spec.num_classes = m.label_map.num_classes();
    if (tf.gmp_scale == "literal")
      spec.gmp_literal_scale = true;
    else if (tf.gmp_scale == "conventional")
      spec.gmp_literal_scale = false;
    else
      throw UsageError("--gmp-scale must be literal or conventional, got '" +
                       tf.gmp_scale + "'");
    const TrainConfig cfg = resolve_train_config(tf, train_cmd);
    const Checkpoint cp = train_model(spec, m, tf.test_env, cfg);
    save_checkpoint(cp, tf.out_path);
    if (!tf.metrics_path.empty())
      write_text(tf.metrics_path, history_csv(cp.history));
    char line[96];
    std::snprintf(line, sizeof(line),
                  "final train_acc=%.4f val_acc=%.4f epochs=%zu\n",
                  cp.history.back().train_acc, cp.history.back().val_acc,
                  cp.history.size());
    std::cout << line;
    log_info("wrote checkpoint " + tf.out_path);
  });

  // ---- eval ----
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on a data subset");
  std::string eval_ckpt, eval_manifest, eval_subset = "test", eval_cm;
  eval_cmd->add_option("--ckpt", eval_ckpt)->required();
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--subset", eval_subset, "train, val or test");
  eval_cmd->add_option("--cm", eval_cm, "confusion matrix CSV path");
  eval_cmd->callback([&] {
    if (eval_subset != "train" && eval_subset != "val" &&
        eval_subset != "test")
      throw UsageError("--subset must be train, val or test, got '" +
                       eval_subset + "'");
    const Checkpoint cp = load_checkpoint(eval_ckpt);
    const DatasetManifest m = load_manifest(eval_manifest);
    check_label_maps_match(m.label_map, cp.label_map);
    const std::vector<SampleRecord> records =
        subset_records(cp, m, eval_subset);
    const EvalResult er = evaluate(cp, records);
    if (!eval_cm.empty())
      write_text(eval_cm, er.cm.to_csv(cp.label_map.class_names));
    char line[96];
    std::snprintf(line, sizeof(line), "subset=%s n=%zu accuracy=%.4f\n",
                  eval_subset.c_str(), records.size(), er.accuracy);
    std::cout << line;
  });

  // ---- compare ----
  auto* compare_cmd = app.add_subcommand(
      "compare", "train csab and plain heads and tabulate accuracies");
  TrainFlags cf;
  compare_cmd->add_option("--manifest", cf.manifest_path)->required();
  compare_cmd->add_option("--test-env", cf.test_env)->required();
  compare_cmd->add_option("--spec", cf.spec_name, "tiny or vgg16");
  compare_cmd->add_option("--epochs", cf.epochs);
  compare_cmd->add_option("--batch", cf.batch);
  compare_cmd->add_option("--lr", cf.lr);
  compare_cmd->add_option("--momentum", cf.momentum);
  compare_cmd->add_option("--seed", cf.seed);
  compare_cmd->add_option("--augment-seed", cf.augment_seed);
  compare_cmd->add_option("--val-fraction", cf.val_fraction);
  compare_cmd->add_option("--config", cf.config_path);
  compare_cmd->add_option("--out", cf.out_path, "CSV path (default: stdout)");
  compare_cmd->callback([&] {
    const DatasetManifest m = load_manifest(cf.manifest_path);
    ModelSpec spec = spec_by_name(cf.spec_name);
    spec.num_classes = m.label_map.num_classes();
    const TrainConfig cfg = resolve_train_config(cf, compare_cmd);
    const ComparisonResult res =
        compare_models(spec, m, cf.test_env, cfg);
    if (cf.out_path.empty()) {
      std::cout << res.csv;
    } else {
      write_text(cf.out_path, res.csv);
      std::cout << res.text;
    }
  });

  // ---- infer ----
  auto* infer_cmd = app.add_subcommand(
      "infer", "classify an ordered frame sequence with temporal smoothing");
  std::string infer_ckpt, infer_frames, infer_out;
  std::size_t infer_window = 9;
  infer_cmd->add_option("--ckpt", infer_ckpt)->required();
  infer_cmd->add_option("--frames", infer_frames, "glob over frame images")
      ->required();
  infer_cmd->add_option("--window", infer_window, "odd vote window");
  infer_cmd->add_option("--out", infer_out, "JSON-lines path (default: stdout)");
  infer_cmd->callback([&] {
    const Checkpoint cp = load_checkpoint(infer_ckpt);
    const std::vector<std::string> frames = expand_glob(infer_frames);
    if (frames.empty())
      throw DataError("no frames matched '" + infer_frames + "'");
    const InferenceResult res = infer_sequence(cp, frames, infer_window);

    std::ostringstream out;
    for (const auto& fr : res.per_frame) {
      json rec{{"frame", fr.index},
               {"path", fr.path},
               {"valid", fr.valid},
               {"label", fr.label},
               {"smoothed", res.smoothed[fr.index]}};
      if (fr.valid) {
        rec["class"] = cp.label_map.class_names[
            static_cast<std::size_t>(fr.label)];
        rec["probs"] = fr.probs;
      } else {
        rec["error"] = fr.error;
      }
      out << rec.dump() << "\n";
    }
    for (const auto& seg : res.segments) {
      json rec{{"segment_start", seg.start},
               {"segment_end", seg.end},
               {"label", seg.label}};
      if (seg.label >= 0)
        rec["class"] =
            cp.label_map.class_names[static_cast<std::size_t>(seg.label)];
      out << rec.dump() << "\n";
    }
    json timing{{"timing_mean_ms", res.timing.mean_ms},
                {"timing_p50_ms", res.timing.p50_ms},
                {"timing_p95_ms", res.timing.p95_ms},
                {"frames_timed", res.timing.iterations}};
    out << timing.dump() << "\n";

    if (infer_out.empty())
      std::cout << out.str();
    else
      write_text(infer_out, out.str());
  });

  // ---- saliency ----
  auto* sal_cmd = app.add_subcommand(
      "saliency", "write a gradient saliency map for one image and class");
  std::string sal_ckpt, sal_image, sal_out;
  int sal_class = 0;
  sal_cmd->add_option("--ckpt", sal_ckpt)->required();
  sal_cmd->add_option("--image", sal_image)->required();
  sal_cmd->add_option("--class", sal_class)->required();
  sal_cmd->add_option("--out", sal_out, "grayscale PPM path")->required();
  sal_cmd->callback([&] {
    const Checkpoint cp = load_checkpoint(sal_ckpt);
    const Tensor<float> img =
        load_image(sal_image, cp.spec.input_h, cp.spec.input_w);
    const Tensor<float> map = saliency_map(cp, img, sal_class);
    write_ppm_gray(sal_out, map);
    log_info("wrote saliency map " + sal_out);
  });

  // ---- augment-preview ----
  auto* prev_cmd = app.add_subcommand(
      "augment-preview", "write a grid of augmented copies of one image");
  std::string prev_config, prev_image, prev_grid = "4x4", prev_out;
  prev_cmd->add_option("--config", prev_config, "key = value run config");
  prev_cmd->add_option("--image", prev_image)->required();
  prev_cmd->add_option("--grid", prev_grid, "RxC cell layout");
  prev_cmd->add_option("--out", prev_out, "PPM path")->required();
  prev_cmd->callback([&] {
    TrainConfig tc;
    if (!prev_config.empty()) apply_config(parse_config_file(prev_config), tc);
    const AugmentConfig acfg = tc.augment;
    acfg.validate();

    const std::size_t x = prev_grid.find('x');
    std::size_t rows = 0, cols = 0;
    try {
      if (x == std::string::npos) throw std::invalid_argument("no x");
      rows = std::stoul(prev_grid.substr(0, x));
      cols = std::stoul(prev_grid.substr(x + 1));
    } catch (...) {
      throw UsageError("--grid expects RxC (like 4x4), got '" + prev_grid +
                       "'");
    }
    if (rows < 1 || cols < 1)
      throw UsageError("--grid needs at least one row and column");

    const Tensor<float> img = read_ppm(prev_image);
    const std::size_t H = img.dim(0), W = img.dim(1);
    Tensor<float> grid({rows * H, cols * W, 3});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const AugmentDraw d = sample_draw(acfg, 0, 0, r * cols + c);
        Tensor<float> aug = geometric_transform(img, d);
        aug = color_jitter(aug, d.contrast, d.brightness);
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t xcol = 0; xcol < W; ++xcol)
            for (std::size_t ch = 0; ch < 3; ++ch)
              grid[(((r * H + y) * cols * W) + c * W + xcol) * 3 + ch] =
                  aug[(y * W + xcol) * 3 + ch];
      }
    write_ppm(prev_out, grid);
    log_info("wrote augmentation preview " + prev_out);
  });

  // ---- bench ----
  auto* bench_cmd = app.add_subcommand(
      "bench", "measure single-frame forward latency for a checkpoint");
  std::string bench_ckpt;
  std::size_t bench_iters = 100;
  bench_cmd->add_option("--ckpt", bench_ckpt)->required();
  bench_cmd->add_option("--iters", bench_iters, "timed iterations (>= 10)");
  bench_cmd->callback([&] {
    const Checkpoint cp = load_checkpoint(bench_ckpt);
    std::cout << bench_report(bench_latency(cp, bench_iters));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
