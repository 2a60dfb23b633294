#include "s2g/metrics.hpp"

#include "s2g/common.hpp"

namespace s2g {

ConfusionCounts confusion(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> predicted) {
  require(truth.size() == predicted.size(), ErrorCode::InvalidArgument, "truth/prediction length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool y = truth[i] != 0;
    const bool p = predicted[i] != 0;
    if (y && p)
      ++c.tp;
    else if (!y && p)
      ++c.fp;
    else if (y && !p)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double f1(const ConfusionCounts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double macro_f1(const ConfusionCounts& c) {
  const ConfusionCounts negative{c.tn, c.fn, c.fp, c.tp};
  return 0.5 * (f1(c) + f1(negative));
}

}  // namespace s2g
