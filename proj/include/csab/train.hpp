#pragma once

#include <string>
#include <vector>

#include "csab/checkpoint.hpp"
#include "csab/dataset.hpp"
#include "csab/metrics.hpp"
#include "csab/model.hpp"

namespace csab {

// Loads every record's image at the given input size, in record order.
std::vector<Tensor<float>> load_record_images(
    const std::vector<SampleRecord>& records, std::size_t h, std::size_t w);

// Per-class carve of `val_fraction` records for validation, leaving the
// rest for gradient updates. Pure function of (records, fraction, seed), so
// evaluation can rebuild the same carve later. Index lists are ascending.
struct ValSplit {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
};
ValSplit stratified_val_split(const std::vector<SampleRecord>& records,
                              double val_fraction, std::uint64_t seed);

// Mini-batch SGD with momentum on cross-entropy. Augmentation applies to
// gradient batches only; validation runs on the raw images each epoch.
Checkpoint train_model(const ModelSpec& spec, const DatasetManifest& manifest,
                       int test_env, const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix cm;
};

// Argmax evaluation of a checkpoint over records (ties take the first
// index); accuracy equals the confusion-matrix trace over its total.
EvalResult evaluate(const Checkpoint& cp,
                    const std::vector<SampleRecord>& records);

struct CompareRow {
  int no = 0;
  bool attention = false;
  std::string backbone;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct ComparisonResult {
  std::vector<CompareRow> rows;
  std::string csv;   // no,attention,backbone,epochs,batch_size,train_acc,val_acc,test_acc
  std::string text;  // aligned table for the terminal
};

// Trains the csab and plain heads of the same backbone under identical
// seeds and data order, then reports train/val/test accuracy per row.
ComparisonResult compare_models(const ModelSpec& base_spec,
                                const DatasetManifest& manifest, int test_env,
                                const TrainConfig& cfg);

std::string describe_backbone(const ModelSpec& spec);

}  // namespace csab
