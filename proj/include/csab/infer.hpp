#pragma once

#include <string>
#include <vector>

#include "csab/checkpoint.hpp"

namespace csab {

struct FrameResult {
  std::size_t index = 0;
  std::string path;
  bool valid = false;
  std::string error;            // why the frame was rejected, when invalid
  int label = -1;               // argmax class, -1 for invalid frames
  std::vector<float> probs;     // softmax over classes, empty when invalid
};

// Inclusive frame range carrying one smoothed label (-1 = invalid run).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  int label = -1;
};

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t iterations = 0;
};

struct InferenceResult {
  std::vector<FrameResult> per_frame;
  std::vector<int> smoothed;
  std::vector<Segment> segments;
  LatencyStats timing;
};

// Centered majority vote over an odd window. Invalid labels (-1) cast no
// votes; a tie (or an empty vote) falls back to the center frame's label,
// or the smallest tied class when the center frame is itself invalid.
std::vector<int> smooth_labels(const std::vector<int>& labels,
                               std::size_t window);

// Merges runs of equal labels into segments that partition [0, n).
std::vector<Segment> segments_from_labels(const std::vector<int>& labels);

// Per-frame forward passes over an ordered frame list, then temporal
// smoothing. Unreadable frames are reported and excluded from voting.
InferenceResult infer_sequence(const Checkpoint& cp,
                               const std::vector<std::string>& frame_paths,
                               std::size_t window);

// Times single-frame forward passes on synthetic input after 3 discarded
// warm-up iterations.
LatencyStats bench_latency(const Checkpoint& cp, std::size_t iterations);

// Renders the bench CSV (header + one row) plus an informational line
// about the reference gpu baseline.
std::string bench_report(const LatencyStats& stats);

}  // namespace csab
