#include "csab/infer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "csab/image.hpp"
#include "csab/rng.hpp"

namespace csab {

namespace {

double percentile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const std::size_t n = sorted.size();
  std::size_t idx = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(n)));
  if (idx > 0) --idx;
  if (idx >= n) idx = n - 1;
  return sorted[idx];
}

LatencyStats stats_from_times(std::vector<double> ms) {
  LatencyStats s;
  s.iterations = ms.size();
  if (ms.empty()) return s;
  double sum = 0.0;
  for (double v : ms) sum += v;
  s.mean_ms = sum / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  s.p50_ms = percentile(ms, 0.50);
  s.p95_ms = percentile(ms, 0.95);
  return s;
}

std::vector<float> softmax_row(const Tensor<float>& logits) {
  const std::size_t k = logits.numel();
  std::vector<float> out(k);
  float mx = logits[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  float denom = 0.0f;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::exp(logits[i] - mx);
    denom += out[i];
  }
  for (std::size_t i = 0; i < k; ++i) out[i] /= denom;
  return out;
}

}  // namespace

std::vector<int> smooth_labels(const std::vector<int>& labels,
                               std::size_t window) {
  if (window < 1 || window % 2 == 0)
    throw UsageError("smoothing window must be odd and >= 1, got " +
                     std::to_string(window));
  const std::size_t n = labels.size();
  const std::size_t half = window / 2;
  std::vector<int> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t > half ? t - half : 0;
    const std::size_t hi = std::min(n == 0 ? 0 : n - 1, t + half);
    std::map<int, std::size_t> votes;
    for (std::size_t j = lo; j <= hi; ++j)
      if (labels[j] >= 0) ++votes[labels[j]];
    if (votes.empty()) {
      out[t] = labels[t];
      continue;
    }
    std::size_t best = 0;
    for (const auto& [cls, count] : votes) best = std::max(best, count);
    std::vector<int> tied;
    for (const auto& [cls, count] : votes)
      if (count == best) tied.push_back(cls);
    if (tied.size() == 1)
      out[t] = tied.front();
    else
      out[t] = labels[t] >= 0 ? labels[t] : tied.front();
  }
  return out;
}

std::vector<Segment> segments_from_labels(const std::vector<int>& labels) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (out.empty() || out.back().label != labels[i])
      out.push_back({i, i, labels[i]});
    else
      out.back().end = i;
  }
  return out;
}

InferenceResult infer_sequence(const Checkpoint& cp,
                               const std::vector<std::string>& frame_paths,
                               std::size_t window) {
  if (frame_paths.empty()) throw DataError("no frames to infer");
  if (window < 1 || window % 2 == 0)
    throw UsageError("smoothing window must be odd and >= 1, got " +
                     std::to_string(window));

  ModelParams<float> params = cp.params;
  validate_params(cp.spec, params);
  InferenceResult out;
  std::vector<int> labels(frame_paths.size(), -1);
  std::vector<double> times;

  for (std::size_t i = 0; i < frame_paths.size(); ++i) {
    FrameResult fr;
    fr.index = i;
    fr.path = frame_paths[i];
    try {
      const Tensor<float> img =
          load_image(frame_paths[i], cp.spec.input_h, cp.spec.input_w);
      const Tensor<float> batch =
          img.reshaped({1, cp.spec.input_h, cp.spec.input_w, cp.spec.input_c});
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor<float> logits = forward_logits(cp.spec, params, batch);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
      fr.valid = true;
      fr.probs = softmax_row(logits);
      fr.label = argmax_rows(logits)[0];
      labels[i] = fr.label;
    } catch (const std::exception& e) {
      fr.valid = false;
      fr.error = e.what();
    }
    out.per_frame.push_back(std::move(fr));
  }

  out.smoothed = smooth_labels(labels, window);
  out.segments = segments_from_labels(out.smoothed);
  out.timing = stats_from_times(std::move(times));
  return out;
}

LatencyStats bench_latency(const Checkpoint& cp, std::size_t iterations) {
  if (iterations < 10)
    throw UsageError("bench: iterations must be >= 10, got " +
                     std::to_string(iterations));
  ModelParams<float> params = cp.params;
  validate_params(cp.spec, params);

  Tensor<float> batch({1, cp.spec.input_h, cp.spec.input_w, cp.spec.input_c});
  Rng rng(1234);
  for (std::size_t i = 0; i < batch.numel(); ++i)
    batch[i] = static_cast<float>(rng.uniform());

  constexpr std::size_t kWarmup = 3;
  std::vector<double> times;
  times.reserve(iterations);
  for (std::size_t i = 0; i < kWarmup + iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    forward_logits(cp.spec, params, batch);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= kWarmup)
      times.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return stats_from_times(std::move(times));
}

std::string bench_report(const LatencyStats& stats) {
  char line[160];
  std::string out = "mean_ms,p50_ms,p95_ms,iterations\n";
  std::snprintf(line, sizeof(line), "%.3f,%.3f,%.3f,%zu\n", stats.mean_ms,
                stats.p50_ms, stats.p95_ms, stats.iterations);
  out += line;
  out += "# reference: gpu baseline < 5 ms/frame (informational, not asserted)\n";
  return out;
}

}  // namespace csab
