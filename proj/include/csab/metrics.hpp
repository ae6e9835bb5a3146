#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "csab/error.hpp"

namespace csab {

// K x K count grid, rows = true class, cols = predicted class.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;

  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : k(num_classes), counts(num_classes * num_classes, 0) {}

  void add(int truth, int pred) {
    if (truth < 0 || pred < 0 || truth >= static_cast<int>(k) ||
        pred >= static_cast<int>(k))
      throw Error("confusion matrix: class pair (" + std::to_string(truth) +
                  "," + std::to_string(pred) + ") outside " +
                  std::to_string(k) + " classes");
    ++counts[static_cast<std::size_t>(truth) * k +
             static_cast<std::size_t>(pred)];
  }

  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * k + pred];
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }

  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k; ++i) s += counts[i * k + i];
    return s;
  }

  std::uint64_t row_sum(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < k; ++j) s += counts[truth * k + j];
    return s;
  }

  double accuracy() const {
    const std::uint64_t t = total();
    return t == 0 ? 0.0
                  : static_cast<double>(trace()) / static_cast<double>(t);
  }

  // CSV grid with a header row and column of class names.
  std::string to_csv(const std::vector<std::string>& names) const {
    std::ostringstream out;
    out << "true\\pred";
    for (std::size_t j = 0; j < k; ++j)
      out << "," << (j < names.size() ? names[j] : std::to_string(j));
    out << "\n";
    for (std::size_t i = 0; i < k; ++i) {
      out << (i < names.size() ? names[i] : std::to_string(i));
      for (std::size_t j = 0; j < k; ++j) out << "," << at(i, j);
      out << "\n";
    }
    return out.str();
  }
};

}  // namespace csab
