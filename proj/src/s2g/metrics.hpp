#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace s2g {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

// Counts for one binary label; predictions and truth are 0/1 per frame.
ConfusionCounts confusion(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> predicted);

// 2tp / (2tp + fp + fn), 0 when the denominator is 0.
double f1(const ConfusionCounts& c);

// Mean of the positive-class and the negative-class F1.
double macro_f1(const ConfusionCounts& c);

}  // namespace s2g
