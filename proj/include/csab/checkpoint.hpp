#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csab/augment.hpp"
#include "csab/dataset.hpp"
#include "csab/model.hpp"

namespace csab {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  double val_fraction = 0.1;

  void validate() const {
    if (epochs < 1) throw UsageError("train config: epochs must be >= 1");
    if (batch_size < 1)
      throw UsageError("train config: batch_size must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw UsageError("train config: val_fraction must be in (0,1)");
    if (momentum < 0.0 || momentum >= 1.0)
      throw UsageError("train config: momentum must be in [0,1)");
    augment.validate();
  }

  bool operator==(const TrainConfig&) const = default;
};

struct EpochStats {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct Checkpoint {
  ModelSpec spec;
  ModelParams<float> params;
  LabelMap label_map;
  TrainConfig train_config;
  std::vector<EpochStats> history;
  // Environment held out during training; lets evaluation rebuild the
  // train/val carve deterministically from the manifest.
  int test_env = -1;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout: magic "CSAB", u32 LE version, u32 LE header length, UTF-8
// JSON header (spec, label map, train config, history, test env), then one
// block per parameter in skeleton order: u32 LE name length, name bytes,
// u32 LE rank, dims as u64 LE, raw 32-bit LE floats.
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Per-epoch metrics CSV: header `epoch,train_loss,train_acc,val_acc`.
std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace csab
