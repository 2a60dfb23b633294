#pragma once

// Dilated temporal CNN classifiers over a sliding feature window.
//
// Layout of one model:
//   input.mean, input.std  [d_in]          fixed standardisation
//   proj.weight [C, d_in], proj.bias [C]   per-step linear projection
//   block{j}.weight [C, K, C], block{j}.bias [C]
//       unpadded dilated conv, ReLU, plus the centre-cropped block input
//   head.weight [L, C], head.bias [L]      on the time-averaged last block
// Outputs are independent logistic probabilities (multi-label).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2g/common.hpp"
#include "s2g/corpus.hpp"
#include "s2g/windows.hpp"

namespace s2g {

struct DilatedConvSpec {
  std::size_t channels = 64;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> dilations{1, 2, 2};  // one per block

  std::size_t n_blocks() const { return dilations.size(); }
  std::size_t receptive_field() const;
  void validate() const;
  json to_json() const;
  static DilatedConvSpec from_json(const json& j);
  bool operator==(const DilatedConvSpec&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool trainable = true;
};

// All weights live in one flat vector; `layout` names the slices.
struct ModelParams {
  DilatedConvSpec spec;
  WindowSpec window;
  std::size_t d_in = 0;
  Tier tier = Tier::Existence;
  std::vector<std::string> labels;
  std::vector<TensorInfo> layout;
  std::vector<double> values;

  std::size_t n_labels() const { return labels.size(); }
  const TensorInfo& tensor(std::string_view name) const;
  std::span<double> view(std::string_view name);
  std::span<const double> view(std::string_view name) const;
  json identity() const;         // spec, window, d_in, tier, labels
  std::string spec_hash() const;  // hash of identity()
  bool operator==(const ModelParams& o) const { return identity() == o.identity() && values == o.values; }
};

ModelParams init_model(const DilatedConvSpec& spec, const WindowSpec& window, std::size_t d_in, Tier tier,
                       std::uint64_t seed);

// Intermediate activations kept for backpropagation.
struct ForwardCache {
  Matrix input;                 // standardised window
  std::vector<Matrix> hidden;   // hidden[0] = projection, hidden[j+1] = block j output
  std::vector<Matrix> preact;   // conv pre-activations per block
  std::vector<double> pooled;
};

std::vector<double> forward_logits(const ModelParams& params, const Matrix& window, ForwardCache* cache = nullptr);
std::vector<double> forward(const ModelParams& params, const Matrix& window);  // probabilities
Matrix forward_batch(const ModelParams& params, const std::vector<Matrix>& windows);

// Accumulates d(loss)/d(values) into grad given d(loss)/d(logits).
void backward(const ModelParams& params, const ForwardCache& cache, std::span<const double> dlogits,
              std::span<double> grad);

// Weighted multi-label binary cross-entropy averaged over labels, evaluated
// from logits; optionally writes d(loss)/d(logits).
double weighted_bce(std::span<const double> logits, std::span<const std::uint8_t> target,
                    std::span<const double> pos_weight, std::span<double> dlogits = {});

// Mean weighted BCE over examples and its gradient with respect to every
// parameter (zero for non-trainable tensors).
double loss_and_gradient(const ModelParams& params, const std::vector<const Example*>& batch,
                         std::span<const double> pos_weight, std::vector<double>* grad);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::optional<std::vector<double>> pos_weights;  // default (1-pi)/pi clipped to [1, max_pos_weight]
  double max_pos_weight = 100.0;
  std::size_t patience = 8;   // epochs without validation improvement; 0 disables
  double val_fraction = 0.1;  // used when no validation set is given
  double threshold = 0.5;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& j);
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
  bool best = false;
  json to_json() const;
  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  ModelParams params;  // best validation epoch
  std::vector<EpochLog> log;
  std::vector<double> pos_weights;
  std::vector<std::string> warnings;
  std::string log_jsonl() const;
};

// w = (1 - pi) / pi clipped to [1, max_weight]; labels without positives get 1.
std::vector<double> positive_weights(const std::vector<const Example*>& examples,
                                     const std::vector<std::string>& labels, double max_weight,
                                     std::vector<std::string>* warnings);

// Trains one tier classifier. `validation` may be empty, in which case a
// seeded val_fraction of `examples` is held out (or, for tiny sets, the
// training set itself is used for model selection).
TrainResult train(const std::vector<Example>& examples, const std::vector<Example>& validation,
                  const TrainConfig& config, const DilatedConvSpec& spec, const WindowSpec& window, Tier tier);

// Row t = forward on the edge-replicated window centred at t.
Matrix predict(const ModelParams& params, const FrameFeatures& features);

void save_params(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_params(const std::filesystem::path& path);
// Additionally refuses a checkpoint whose spec hash differs from `expected_hash`.
ModelParams load_params(const std::filesystem::path& path, const std::string& expected_hash);

}  // namespace s2g
