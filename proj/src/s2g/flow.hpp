#pragma once

// GestureFlow: conditional affine-coupling normalizing flow over per-frame
// pose vectors.
//
// Layer l splits the pose into a pass-through half P and a transformed half T
// (layers alternate which half is which). A conditioner MLP maps
// [x_P, standardised c] -> tanh hidden -> (raw scale, shift) for T and
//   y_T = x_T * exp(S * tanh(raw / S)) + shift,   y_P = x_P.
// The base distribution is a standard normal of dimension d_pose.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2g/common.hpp"
#include "s2g/models.hpp"
#include "s2g/windows.hpp"

namespace s2g {

struct FlowSpec {
  std::size_t d_pose = 12;
  std::size_t d_cond = 26 + 32 + schema::kPropertyCount;
  std::size_t n_layers = 6;
  std::size_t hidden = 64;
  double max_log_scale = 5.0;

  void validate() const;
  json to_json() const;
  static FlowSpec from_json(const json& j);
  bool operator==(const FlowSpec&) const = default;
};

struct FlowParams {
  FlowSpec spec;
  std::vector<TensorInfo> layout;  // cond.mean, cond.std, layer{l}.{w1,b1,w2,b2}
  std::vector<double> values;

  const TensorInfo& tensor(std::string_view name) const;
  std::span<double> view(std::string_view name);
  std::span<const double> view(std::string_view name) const;
  std::string spec_hash() const;
  bool operator==(const FlowParams& o) const { return spec == o.spec && values == o.values; }
};

// Pass-through and transformed pose indices of a coupling layer.
struct CouplingMask {
  std::vector<std::size_t> pass;
  std::vector<std::size_t> transformed;
};
CouplingMask coupling_mask(const FlowSpec& spec, std::size_t layer);

// Output layers start at zero, so the initial flow is the identity.
FlowParams init_flow(const FlowSpec& spec, std::uint64_t seed);

struct FlowResult {
  std::vector<double> z;
  double log_det = 0.0;
};

FlowResult flow_forward(const FlowParams& params, std::span<const double> x, std::span<const double> c);
std::vector<double> flow_inverse(const FlowParams& params, std::span<const double> z, std::span<const double> c);
double log_likelihood(const FlowParams& params, std::span<const double> x, std::span<const double> c);

struct FlowExample {
  std::vector<double> pose;
  std::vector<double> cond;
};

// Mean negative log-likelihood over the batch and, if grad is given, its
// gradient with respect to every trainable parameter.
double nll_and_gradient(const FlowParams& params, const std::vector<const FlowExample*>& batch,
                        std::vector<double>* grad);

struct FlowTrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;
  std::size_t patience = 15;  // 0 disables early stopping

  json to_json() const;
  static FlowTrainConfig from_json(const json& j);
};

struct FlowEpochLog {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  double best_val_nll = 0.0;  // running minimum
  json to_json() const;
};

struct FlowTrainResult {
  FlowParams params;  // best validation epoch
  std::vector<FlowEpochLog> log;
  std::string log_jsonl() const;
};

FlowTrainResult train_flow(const std::vector<FlowExample>& data, const FlowTrainConfig& config,
                           const FlowSpec& spec);

// x_i = flow_inverse(z_i, c) with z_i ~ N(0, I) from a stream seeded by `seed`.
std::vector<std::vector<double>> sample(const FlowParams& params, std::span<const double> c, std::size_t n,
                                        std::uint64_t seed);

// [audio features, text features, 13 property bits].
std::vector<double> make_conditioning(std::span<const double> audio, std::span<const double> text,
                                      std::span<const double> properties);

// Synthetic pose data for gesture frames: pose = sum of per-property offsets
// of the active bits + N(0, I). Used where the corpus carries no motion.
std::vector<double> property_pose_offset(std::size_t property, std::size_t d_pose);
std::vector<FlowExample> planted_pose_data(const std::vector<PreparedRecording>& recordings, std::size_t d_pose,
                                           std::uint64_t seed);

void save_flow(const std::filesystem::path& path, const FlowParams& params);
FlowParams load_flow(const std::filesystem::path& path);

}  // namespace s2g
