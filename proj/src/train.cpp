#include "csab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "csab/augment.hpp"
#include "csab/image.hpp"
#include "csab/log.hpp"
#include "csab/rng.hpp"

namespace csab {

namespace {

// Seed-domain tags so the epoch shuffle, val carve and dropout streams
// never collide.
constexpr std::uint64_t kSeedValSplit = 1;
constexpr std::uint64_t kSeedShuffle = 2;
constexpr std::uint64_t kSeedDropout = 3;

Tensor<float> gather_batch(const std::vector<Tensor<float>>& images,
                           const std::vector<std::size_t>& order,
                           std::size_t begin, std::size_t count) {
  const Shape& s = images[order[begin]].shape();
  Tensor<float> batch({count, s[0], s[1], s[2]});
  const std::size_t sz = shape_numel(s);
  for (std::size_t i = 0; i < count; ++i)
    std::copy(images[order[begin + i]].data(),
              images[order[begin + i]].data() + sz, batch.data() + i * sz);
  return batch;
}

// Forward in eval mode over a set of images; returns predicted classes.
std::vector<int> predict(const ModelSpec& spec, ModelParams<float>& params,
                         const std::vector<Tensor<float>>& images,
                         const std::vector<std::size_t>& idx) {
  std::vector<int> preds;
  preds.reserve(idx.size());
  const std::size_t kEvalBatch = 32;
  for (std::size_t at = 0; at < idx.size(); at += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, idx.size() - at);
    std::vector<std::size_t> order(idx.begin() + at, idx.begin() + at + n);
    Tensor<float> batch = gather_batch(images, order, 0, n);
    Tensor<float> logits = forward_logits(spec, params, batch);
    for (int p : argmax_rows(logits)) preds.push_back(p);
  }
  return preds;
}

}  // namespace

std::vector<Tensor<float>> load_record_images(
    const std::vector<SampleRecord>& records, std::size_t h, std::size_t w) {
  std::vector<Tensor<float>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(load_image(r.path, h, w));
  return out;
}

ValSplit stratified_val_split(const std::vector<SampleRecord>& records,
                              double val_fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i)
    by_class[records[i].mapped_class].push_back(i);
  ValSplit out;
  for (auto& [cls, idx] : by_class) {
    Rng rng(hash_seed(seed, kSeedValSplit, static_cast<std::uint64_t>(cls)));
    rng.shuffle(idx);
    const std::size_t n_val = static_cast<std::size_t>(
        std::llround(static_cast<double>(idx.size()) * val_fraction));
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < n_val ? out.val_idx : out.train_idx).push_back(idx[i]);
  }
  std::sort(out.train_idx.begin(), out.train_idx.end());
  std::sort(out.val_idx.begin(), out.val_idx.end());
  return out;
}

Checkpoint train_model(const ModelSpec& spec, const DatasetManifest& manifest,
                       int test_env, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  manifest.label_map.validate();
  if (manifest.label_map.num_classes() != spec.num_classes)
    throw DataError("label map has " +
                    std::to_string(manifest.label_map.num_classes()) +
                    " classes but the model expects " +
                    std::to_string(spec.num_classes));

  SplitResult split = environment_split(manifest, test_env);
  if (split.train.empty())
    throw DataError("training split is empty (test env " +
                    std::to_string(test_env) + ")");

  std::vector<bool> seen(spec.num_classes, false);
  for (const auto& r : split.train)
    seen[static_cast<std::size_t>(r.mapped_class)] = true;
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c])
      log_warn("class '" + manifest.label_map.class_names[c] +
               "' has no training samples");

  const ValSplit carve =
      stratified_val_split(split.train, cfg.val_fraction, cfg.seed);
  std::vector<Tensor<float>> images =
      load_record_images(split.train, spec.input_h, spec.input_w);
  std::vector<int> labels(split.train.size());
  for (std::size_t i = 0; i < split.train.size(); ++i)
    labels[i] = split.train[i].mapped_class;

  ModelParams<float> params = init_params<float>(spec, cfg.seed);
  std::map<std::string, Tensor<float>> velocity;
  for (const auto& p : params.params)
    velocity.emplace(p.name, Tensor<float>(p.value.shape()));

  const float lr = static_cast<float>(cfg.learning_rate);
  const float mom = static_cast<float>(cfg.momentum);

  Checkpoint cp;
  cp.spec = spec;
  cp.label_map = manifest.label_map;
  cp.train_config = cfg;
  cp.test_env = test_env;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = carve.train_idx;
    Rng shuffle_rng(hash_seed(cfg.seed, kSeedShuffle, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t at = 0; at < order.size();
         at += cfg.batch_size, ++batch_index) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - at);
      Tensor<float> batch = gather_batch(images, order, at, n);
      batch = augment_batch(batch, cfg.augment, epoch, batch_index);
      std::vector<int> batch_labels(n);
      for (std::size_t i = 0; i < n; ++i)
        batch_labels[i] = labels[order[at + i]];

      Tape<float> tape;
      auto vars = bind_params(tape, params);
      Var bv = tape.leaf(std::move(batch), "batch");
      Rng dropout_rng(hash_seed(cfg.seed, kSeedDropout, epoch, batch_index));
      Var logits =
          model_forward(tape, spec, vars, bv, RunMode::train, &dropout_rng);
      Var loss = cross_entropy(tape, logits, batch_labels);
      const float loss_val = tape.value(loss)[0];
      if (!std::isfinite(loss_val))
        throw TrainingDiverged(static_cast<int>(epoch + 1),
                               static_cast<int>(batch_index));
      tape.backward(loss);

      for (auto& p : params.params) {
        Tensor<float>& v = velocity.at(p.name);
        for (std::size_t i = 0; i < v.numel(); ++i) {
          v[i] = mom * v[i] - lr * p.grad[i];
          p.value[i] += v[i];
        }
      }

      loss_sum += static_cast<double>(loss_val) * static_cast<double>(n);
      const std::vector<int> preds = argmax_rows(tape.value(logits));
      for (std::size_t i = 0; i < n; ++i)
        if (preds[i] == batch_labels[i]) ++correct;
    }

    EpochStats stats;
    stats.train_loss =
        order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    stats.train_acc = order.empty() ? 0.0
                                    : static_cast<double>(correct) /
                                          static_cast<double>(order.size());
    if (carve.val_idx.empty()) {
      stats.val_acc = 0.0;
    } else {
      const std::vector<int> preds =
          predict(spec, params, images, carve.val_idx);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < carve.val_idx.size(); ++i)
        if (preds[i] == labels[carve.val_idx[i]]) ++ok;
      stats.val_acc = static_cast<double>(ok) /
                      static_cast<double>(carve.val_idx.size());
    }
    cp.history.push_back(stats);

    char line[128];
    std::snprintf(line, sizeof(line),
                  "epoch %zu/%zu loss %.4f train_acc %.4f val_acc %.4f",
                  epoch + 1, cfg.epochs, stats.train_loss, stats.train_acc,
                  stats.val_acc);
    log_info(line);
  }

  cp.params = std::move(params);
  return cp;
}

EvalResult evaluate(const Checkpoint& cp,
                    const std::vector<SampleRecord>& records) {
  if (records.empty()) throw DataError("no records to evaluate");
  const std::size_t k = cp.label_map.num_classes();
  for (const auto& r : records)
    if (r.mapped_class < 0 || r.mapped_class >= static_cast<int>(k))
      throw DataError("record '" + r.path + "' has class " +
                      std::to_string(r.mapped_class) +
                      " outside the checkpoint's label map (" +
                      std::to_string(k) + " classes)");

  std::vector<Tensor<float>> images =
      load_record_images(records, cp.spec.input_h, cp.spec.input_w);
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  ModelParams<float> params = cp.params;
  const std::vector<int> preds = predict(cp.spec, params, images, idx);

  EvalResult out;
  out.cm = ConfusionMatrix(k);
  for (std::size_t i = 0; i < records.size(); ++i)
    out.cm.add(records[i].mapped_class, preds[i]);
  out.accuracy = out.cm.accuracy();
  return out;
}

std::string describe_backbone(const ModelSpec& spec) {
  const ModelSpec vgg = ModelSpec::vgg16();
  if (spec.blocks == vgg.blocks && spec.input_h == vgg.input_h &&
      spec.input_w == vgg.input_w)
    return "vgg16";
  std::string out = "mini-vgg";
  for (const auto& b : spec.blocks) out += "-" + std::to_string(b.channels);
  return out;
}

ComparisonResult compare_models(const ModelSpec& base_spec,
                                const DatasetManifest& manifest, int test_env,
                                const TrainConfig& cfg) {
  ComparisonResult out;
  out.csv =
      "no,attention,backbone,epochs,batch_size,train_acc,val_acc,test_acc\n";
  out.text = "no  attention  backbone          epochs  batch  train    val      test\n";

  int no = 1;
  for (HeadKind head : {HeadKind::csab, HeadKind::plain}) {
    ModelSpec spec = base_spec;
    spec.head = head;
    Checkpoint cp = train_model(spec, manifest, test_env, cfg);
    const SplitResult split = environment_split(manifest, test_env);
    const EvalResult test_eval = evaluate(cp, split.test);

    CompareRow row;
    row.no = no++;
    row.attention = head == HeadKind::csab;
    row.backbone = describe_backbone(spec);
    row.epochs = cfg.epochs;
    row.batch_size = cfg.batch_size;
    row.train_acc = cp.history.back().train_acc;
    row.val_acc = cp.history.back().val_acc;
    row.test_acc = test_eval.accuracy;
    out.rows.push_back(row);

    char line[192];
    std::snprintf(line, sizeof(line), "%d,%s,%s,%zu,%zu,%.4f,%.4f,%.4f\n",
                  row.no, row.attention ? "yes" : "no",
                  row.backbone.c_str(), row.epochs, row.batch_size,
                  row.train_acc, row.val_acc, row.test_acc);
    out.csv += line;
    std::snprintf(line, sizeof(line),
                  "%-3d %-10s %-17s %-7zu %-6zu %-8.4f %-8.4f %-8.4f\n",
                  row.no, row.attention ? "yes" : "no", row.backbone.c_str(),
                  row.epochs, row.batch_size, row.train_acc, row.val_acc,
                  row.test_acc);
    out.text += line;
  }
  return out;
}

}  // namespace csab
