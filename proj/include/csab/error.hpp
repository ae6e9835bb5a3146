#pragma once

#include <stdexcept>
#include <string>

namespace csab {

// Base class for everything thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/operation contract violations (rank, dimension, dtype).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad command line or config input. CLI maps this to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Problems with datasets, images, manifests or checkpoints on disk.
// CLI maps this to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

// Training aborted (NaN loss). Carries the epoch/batch where it happened.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, int batch)
      : Error("training diverged: loss is not finite at epoch " +
              std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch(epoch),
        batch(batch) {}
  int epoch;
  int batch;
};

// Checkpoint file rejected. `kind` discriminates the failure so callers
// (and tests) can tell truncation from a bad magic or a version bump.
class CheckpointError : public DataError {
 public:
  enum class Kind { bad_magic, truncated, version_mismatch, tensor_mismatch };

  CheckpointError(Kind kind, const std::string& what)
      : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace csab
