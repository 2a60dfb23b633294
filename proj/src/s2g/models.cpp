#include "s2g/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "s2g/metrics.hpp"
#include "s2g/optim.hpp"

namespace s2g {

// ---------------------------------------------------------------------------
// spec

std::size_t DilatedConvSpec::receptive_field() const {
  std::size_t rf = 1;
  for (std::size_t d : dilations) rf += (kernel_size - 1) * d;
  return rf;
}

void DilatedConvSpec::validate() const {
  require(channels >= 1, ErrorCode::InvalidArgument, "channels must be >= 1");
  require(kernel_size >= 1, ErrorCode::InvalidArgument, "kernel_size must be >= 1");
  for (std::size_t d : dilations) require(d >= 1, ErrorCode::InvalidArgument, "dilations must be >= 1");
}

json DilatedConvSpec::to_json() const {
  return {{"channels", channels}, {"kernel_size", kernel_size}, {"dilations", dilations}};
}

DilatedConvSpec DilatedConvSpec::from_json(const json& j) {
  DilatedConvSpec s;
  s.channels = j.value("channels", s.channels);
  s.kernel_size = j.value("kernel_size", s.kernel_size);
  if (j.contains("dilations")) s.dilations = j["dilations"].get<std::vector<std::size_t>>();
  return s;
}

// ---------------------------------------------------------------------------
// params

const TensorInfo& ModelParams::tensor(std::string_view name) const {
  for (const auto& t : layout)
    if (t.name == name) return t;
  fail(ErrorCode::InvalidArgument, "no tensor named " + std::string(name));
}

std::span<double> ModelParams::view(std::string_view name) {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size};
}

std::span<const double> ModelParams::view(std::string_view name) const {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size};
}

json ModelParams::identity() const {
  return {{"spec", spec.to_json()}, {"window", window.to_json()}, {"d_in", d_in},
          {"tier", std::string(schema::tier_name(tier))}, {"labels", labels}};
}

std::string ModelParams::spec_hash() const { return json_hash(identity()); }

namespace {

std::vector<TensorInfo> make_layout(const DilatedConvSpec& spec, std::size_t d_in, std::size_t n_labels) {
  std::vector<TensorInfo> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, bool trainable = true) {
    const std::size_t size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    layout.push_back({std::move(name), std::move(shape), offset, size, trainable});
    offset += size;
  };
  const std::size_t c = spec.channels;
  add("input.mean", {d_in}, false);
  add("input.std", {d_in}, false);
  add("proj.weight", {c, d_in});
  add("proj.bias", {c});
  for (std::size_t j = 0; j < spec.n_blocks(); ++j) {
    add("block" + std::to_string(j) + ".weight", {c, spec.kernel_size, c});
    add("block" + std::to_string(j) + ".bias", {c});
  }
  add("head.weight", {n_labels, c});
  add("head.bias", {n_labels});
  return layout;
}

// Offsets of the hot tensors, resolved once per call.
struct Views {
  const double* mean;
  const double* stdev;
  const double* proj_w;
  const double* proj_b;
  std::vector<const double*> block_w;
  std::vector<const double*> block_b;
  const double* head_w;
  const double* head_b;
  std::size_t proj_w_off, proj_b_off, head_w_off, head_b_off;
  std::vector<std::size_t> block_w_off, block_b_off;

  explicit Views(const ModelParams& p) {
    auto off = [&](std::string_view n) { return p.tensor(n).offset; };
    const double* base = p.values.data();
    mean = base + off("input.mean");
    stdev = base + off("input.std");
    proj_w_off = off("proj.weight");
    proj_b_off = off("proj.bias");
    head_w_off = off("head.weight");
    head_b_off = off("head.bias");
    proj_w = base + proj_w_off;
    proj_b = base + proj_b_off;
    head_w = base + head_w_off;
    head_b = base + head_b_off;
    for (std::size_t j = 0; j < p.spec.n_blocks(); ++j) {
      block_w_off.push_back(off("block" + std::to_string(j) + ".weight"));
      block_b_off.push_back(off("block" + std::to_string(j) + ".bias"));
      block_w.push_back(base + block_w_off.back());
      block_b.push_back(base + block_b_off.back());
    }
  }
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

ModelParams init_model(const DilatedConvSpec& spec, const WindowSpec& window, std::size_t d_in, Tier tier,
                       std::uint64_t seed) {
  spec.validate();
  require(d_in >= 1, ErrorCode::InvalidArgument, "d_in must be >= 1");
  if (spec.receptive_field() > window.length())
    fail(ErrorCode::InvalidArgument, "window too small: receptive field " + std::to_string(spec.receptive_field()) +
                                         " exceeds window length " + std::to_string(window.length()));
  ModelParams p;
  p.spec = spec;
  p.window = window;
  p.d_in = d_in;
  p.tier = tier;
  p.labels = schema::labels(tier);
  require(!p.labels.empty(), ErrorCode::InvalidArgument, "n_labels must be >= 1");
  p.layout = make_layout(spec, d_in, p.labels.size());
  p.values.assign(p.layout.back().offset + p.layout.back().size, 0.0);

  std::fill_n(p.view("input.std").begin(), d_in, 1.0);
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](std::string_view name, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : p.view(name)) v = round_to_float(u(rng));
  };
  fill_uniform("proj.weight", d_in);
  for (std::size_t j = 0; j < spec.n_blocks(); ++j)
    fill_uniform("block" + std::to_string(j) + ".weight", spec.channels * spec.kernel_size);
  fill_uniform("head.weight", spec.channels);
  return p;
}

// ---------------------------------------------------------------------------
// forward / backward

std::vector<double> forward_logits(const ModelParams& params, const Matrix& window, ForwardCache* cache) {
  const std::size_t T = params.window.length();
  const std::size_t D = params.d_in;
  if (window.rows() != T || window.cols() != D)
    fail(ErrorCode::InvalidArgument, "feature window is " + std::to_string(window.rows()) + "x" +
                                         std::to_string(window.cols()) + ", model expects " + std::to_string(T) +
                                         "x" + std::to_string(D));
  const Views v(params);
  const std::size_t C = params.spec.channels;
  const std::size_t K = params.spec.kernel_size;

  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc.input = Matrix(T, D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) fc.input(t, d) = (window(t, d) - v.mean[d]) / v.stdev[d];

  fc.hidden.assign(1, Matrix(T, C));
  fc.preact.clear();
  Matrix& h0 = fc.hidden[0];
  for (std::size_t t = 0; t < T; ++t) {
    const auto x = fc.input.row(t);
    for (std::size_t c = 0; c < C; ++c) {
      const double* w = v.proj_w + c * D;
      double acc = v.proj_b[c];
      for (std::size_t d = 0; d < D; ++d) acc += w[d] * x[d];
      h0(t, c) = acc;
    }
  }

  for (std::size_t j = 0; j < params.spec.n_blocks(); ++j) {
    const std::size_t dil = params.spec.dilations[j];
    const Matrix& h = fc.hidden.back();
    const std::size_t lin = h.rows();
    const std::size_t span = (K - 1) * dil;
    const std::size_t lout = lin - span;
    const std::size_t crop = span / 2;
    Matrix a(lout, C);
    Matrix out(lout, C);
    const double* W = v.block_w[j];
    const double* b = v.block_b[j];
    for (std::size_t t = 0; t < lout; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        double acc = b[c];
        for (std::size_t k = 0; k < K; ++k) {
          const double* w = W + (c * K + k) * C;
          const auto hr = h.row(t + k * dil);
          for (std::size_t ci = 0; ci < C; ++ci) acc += w[ci] * hr[ci];
        }
        a(t, c) = acc;
        out(t, c) = h(t + crop, c) + (acc > 0.0 ? acc : 0.0);
      }
    }
    fc.preact.push_back(std::move(a));
    fc.hidden.push_back(std::move(out));
  }

  const Matrix& last = fc.hidden.back();
  fc.pooled.assign(C, 0.0);
  for (std::size_t t = 0; t < last.rows(); ++t)
    for (std::size_t c = 0; c < C; ++c) fc.pooled[c] += last(t, c);
  for (double& g : fc.pooled) g /= static_cast<double>(last.rows());

  const std::size_t L = params.n_labels();
  std::vector<double> logits(L);
  for (std::size_t l = 0; l < L; ++l) {
    double acc = v.head_b[l];
    for (std::size_t c = 0; c < C; ++c) acc += v.head_w[l * C + c] * fc.pooled[c];
    logits[l] = acc;
  }
  return logits;
}

std::vector<double> forward(const ModelParams& params, const Matrix& window) {
  auto z = forward_logits(params, window);
  for (double& x : z) x = sigmoid(x);
  return z;
}

Matrix forward_batch(const ModelParams& params, const std::vector<Matrix>& windows) {
  Matrix out(windows.size(), params.n_labels());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto p = forward(params, windows[i]);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

void backward(const ModelParams& params, const ForwardCache& fc, std::span<const double> dlogits,
              std::span<double> grad) {
  const Views v(params);
  const std::size_t C = params.spec.channels;
  const std::size_t K = params.spec.kernel_size;
  const std::size_t D = params.d_in;
  const std::size_t L = params.n_labels();

  std::vector<double> dpooled(C, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    grad[v.head_b_off + l] += dlogits[l];
    for (std::size_t c = 0; c < C; ++c) {
      grad[v.head_w_off + l * C + c] += dlogits[l] * fc.pooled[c];
      dpooled[c] += v.head_w[l * C + c] * dlogits[l];
    }
  }

  const Matrix& last = fc.hidden.back();
  Matrix dh(last.rows(), C);
  const double inv = 1.0 / static_cast<double>(last.rows());
  for (std::size_t t = 0; t < last.rows(); ++t)
    for (std::size_t c = 0; c < C; ++c) dh(t, c) = dpooled[c] * inv;

  for (std::size_t jj = params.spec.n_blocks(); jj-- > 0;) {
    const std::size_t dil = params.spec.dilations[jj];
    const Matrix& h = fc.hidden[jj];
    const Matrix& a = fc.preact[jj];
    const std::size_t lout = a.rows();
    const std::size_t crop = (K - 1) * dil / 2;
    const double* W = v.block_w[jj];
    double* dW = grad.data() + v.block_w_off[jj];
    double* db = grad.data() + v.block_b_off[jj];
    Matrix dprev(h.rows(), C);
    for (std::size_t t = 0; t < lout; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        const double g = dh(t, c);
        dprev(t + crop, c) += g;
        if (a(t, c) <= 0.0) continue;
        db[c] += g;
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t src = t + k * dil;
          const double* w = W + (c * K + k) * C;
          double* dw = dW + (c * K + k) * C;
          const auto hr = h.row(src);
          auto dr = dprev.row(src);
          for (std::size_t ci = 0; ci < C; ++ci) {
            dw[ci] += g * hr[ci];
            dr[ci] += g * w[ci];
          }
        }
      }
    }
    dh = std::move(dprev);
  }

  double* dpw = grad.data() + v.proj_w_off;
  double* dpb = grad.data() + v.proj_b_off;
  for (std::size_t t = 0; t < dh.rows(); ++t) {
    const auto x = fc.input.row(t);
    for (std::size_t c = 0; c < C; ++c) {
      const double g = dh(t, c);
      dpb[c] += g;
      double* w = dpw + c * D;
      for (std::size_t d = 0; d < D; ++d) w[d] += g * x[d];
    }
  }
}

double weighted_bce(std::span<const double> logits, std::span<const std::uint8_t> target,
                    std::span<const double> pos_weight, std::span<double> dlogits) {
  const std::size_t L = logits.size();
  double loss = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double z = logits[l];
    const double w = pos_weight.empty() ? 1.0 : pos_weight[l];
    if (target[l]) {
      loss += w * softplus(-z);
      if (!dlogits.empty()) dlogits[l] = w * (sigmoid(z) - 1.0) / static_cast<double>(L);
    } else {
      loss += softplus(z);
      if (!dlogits.empty()) dlogits[l] = sigmoid(z) / static_cast<double>(L);
    }
  }
  return loss / static_cast<double>(L);
}

double loss_and_gradient(const ModelParams& params, const std::vector<const Example*>& batch,
                         std::span<const double> pos_weight, std::vector<double>* grad) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  if (grad) grad->assign(params.values.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> dz(params.n_labels());
  ForwardCache cache;
  double total = 0.0;
  for (const Example* ex : batch) {
    const auto z = forward_logits(params, ex->features, grad ? &cache : nullptr);
    total += weighted_bce(z, ex->target, pos_weight, grad ? std::span<double>(dz) : std::span<double>());
    if (grad) {
      for (double& g : dz) g *= scale;
      backward(params, cache, dz, *grad);
    }
  }
  return total * scale;
}

// ---------------------------------------------------------------------------
// training

void TrainConfig::validate() const {
  require(epochs >= 1 && batch_size >= 1, ErrorCode::InvalidArgument, "epochs and batch_size must be >= 1");
  require(learning_rate > 0.0, ErrorCode::InvalidArgument, "learning_rate must be positive");
  require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorCode::InvalidArgument, "val_fraction must be in [0,1)");
  require(max_pos_weight >= 1.0, ErrorCode::InvalidArgument, "max_pos_weight must be >= 1");
  if (pos_weights)
    for (double w : *pos_weights) require(w > 0.0, ErrorCode::InvalidArgument, "positive weights must be > 0");
}

json TrainConfig::to_json() const {
  json j{{"epochs", epochs},         {"batch_size", batch_size}, {"learning_rate", learning_rate},
         {"seed", seed},             {"max_pos_weight", max_pos_weight}, {"patience", patience},
         {"val_fraction", val_fraction}, {"threshold", threshold}};
  if (pos_weights) j["pos_weights"] = *pos_weights;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.max_pos_weight = j.value("max_pos_weight", c.max_pos_weight);
  c.patience = j.value("patience", c.patience);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("pos_weights")) c.pos_weights = j["pos_weights"].get<std::vector<double>>();
  return c;
}

json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}, {"val_macro_f1", val_macro_f1},
          {"best", best}};
}

std::string TrainResult::log_jsonl() const {
  std::string out;
  for (const auto& e : log) out += e.to_json().dump() + "\n";
  return out;
}

std::vector<double> positive_weights(const std::vector<const Example*>& examples,
                                     const std::vector<std::string>& labels, double max_weight,
                                     std::vector<std::string>* warnings) {
  const std::size_t n_labels = labels.size();
  std::vector<double> pos(n_labels, 0.0);
  for (const Example* ex : examples)
    for (std::size_t l = 0; l < n_labels; ++l) pos[l] += ex->target[l];
  std::vector<double> w(n_labels, 1.0);
  for (std::size_t l = 0; l < n_labels; ++l) {
    const double pi = examples.empty() ? 0.0 : pos[l] / static_cast<double>(examples.size());
    if (pi <= 0.0) {
      if (warnings) warnings->push_back("label '" + labels[l] + "' has no positives; weight falls back to 1");
      continue;
    }
    w[l] = std::clamp((1.0 - pi) / pi, 1.0, max_weight);
  }
  return w;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
}

struct Evaluation {
  double loss = 0.0;
  double macro_f1 = 0.0;
};

Evaluation evaluate(const ModelParams& params, const std::vector<const Example*>& set,
                    std::span<const double> pos_weight, double threshold) {
  const std::size_t L = params.n_labels();
  std::vector<ConfusionCounts> counts(L);
  double loss = 0.0;
  for (const Example* ex : set) {
    const auto z = forward_logits(params, ex->features);
    loss += weighted_bce(z, ex->target, pos_weight);
    for (std::size_t l = 0; l < L; ++l) {
      const std::uint8_t y = ex->target[l];
      const std::uint8_t p = sigmoid(z[l]) >= threshold;
      counts[l] += confusion(std::span(&y, 1), std::span(&p, 1));
    }
  }
  Evaluation e;
  e.loss = loss / static_cast<double>(set.size());
  for (const auto& c : counts) e.macro_f1 += macro_f1(c);
  e.macro_f1 /= static_cast<double>(L);
  return e;
}

std::vector<double> input_mean_std(const std::vector<const Example*>& set, const WindowSpec& window,
                                   std::size_t d_in, std::vector<double>& stdev) {
  std::vector<double> mean(d_in, 0.0);
  std::vector<double> sq(d_in, 0.0);
  const std::size_t centre = window.past_frames;
  for (const Example* ex : set) {
    const auto row = ex->features.row(centre);
    for (std::size_t d = 0; d < d_in; ++d) {
      mean[d] += row[d];
      sq[d] += row[d] * row[d];
    }
  }
  const auto n = static_cast<double>(set.size());
  stdev.assign(d_in, 1.0);
  for (std::size_t d = 0; d < d_in; ++d) {
    mean[d] /= n;
    const double var = std::max(0.0, sq[d] / n - mean[d] * mean[d]);
    stdev[d] = var > 1e-12 ? std::sqrt(var) : 1.0;
    mean[d] = round_to_float(mean[d]);
    stdev[d] = round_to_float(stdev[d]);
  }
  return mean;
}

}  // namespace

TrainResult train(const std::vector<Example>& examples, const std::vector<Example>& validation,
                  const TrainConfig& config, const DilatedConvSpec& spec, const WindowSpec& window, Tier tier) {
  config.validate();
  if (examples.empty()) fail(ErrorCode::Data, "empty training set");
  const std::size_t d_in = examples.front().features.cols();
  const std::size_t n_labels = schema::labels(tier).size();
  for (const auto& ex : examples)
    if (ex.target.size() != n_labels || ex.features.cols() != d_in || ex.features.rows() != window.length())
      fail(ErrorCode::InvalidArgument, "example shape does not match tier/window");

  TrainResult result;
  std::mt19937_64 rng(config.seed ^ 0x5bd1e9955bd1e995ULL);

  std::vector<const Example*> train_set, val_set;
  if (!validation.empty()) {
    for (const auto& ex : examples) train_set.push_back(&ex);
    for (const auto& ex : validation) val_set.push_back(&ex);
  } else {
    const auto n_val = static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(examples.size())));
    std::vector<std::size_t> idx(examples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n_val >= 1 && examples.size() - n_val >= 1) {
      shuffle_indices(idx, rng);
      std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
      std::vector<std::size_t> tr_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
      std::sort(val_idx.begin(), val_idx.end());
      std::sort(tr_idx.begin(), tr_idx.end());
      for (auto i : tr_idx) train_set.push_back(&examples[i]);
      for (auto i : val_idx) val_set.push_back(&examples[i]);
    } else {
      for (const auto& ex : examples) train_set.push_back(&ex);
      val_set = train_set;
    }
  }

  result.pos_weights = positive_weights(train_set, schema::labels(tier), config.max_pos_weight, &result.warnings);
  if (config.pos_weights) {
    require(config.pos_weights->size() == n_labels, ErrorCode::InvalidArgument, "pos_weights length != n_labels");
    result.pos_weights = *config.pos_weights;
  }

  ModelParams params = init_model(spec, window, d_in, tier, config.seed);
  {
    std::vector<double> stdev;
    const auto mean = input_mean_std(train_set, window, d_in, stdev);
    std::copy(mean.begin(), mean.end(), params.view("input.mean").begin());
    std::copy(stdev.begin(), stdev.end(), params.view("input.std").begin());
  }

  Adam adam(params.values.size(), config.learning_rate);
  ModelParams best = params;
  double best_f1 = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  std::vector<const Example*> batch;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(train_set[order[i]]);
      const double loss = loss_and_gradient(params, batch, result.pos_weights, &grad);
      if (!std::isfinite(loss)) fail(ErrorCode::Numeric, "diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(batch.size());
      adam.step(params.values, grad);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) fail(ErrorCode::Numeric, "diverged at epoch " + std::to_string(epoch));

    const Evaluation ev = evaluate(params, val_set, result.pos_weights, config.threshold);
    EpochLog entry{epoch, epoch_loss, ev.loss, ev.macro_f1, false};
    // ties in Macro F1 (common once predictions saturate) go to the lower loss
    if (ev.macro_f1 > best_f1 || (ev.macro_f1 == best_f1 && ev.loss < best_loss)) {
      best_f1 = ev.macro_f1;
      best_loss = ev.loss;
      best = params;
      since_best = 0;
      entry.best = true;
    } else {
      ++since_best;
    }
    result.log.push_back(entry);
    if (config.patience > 0 && since_best >= config.patience) break;
  }

  for (double& v : best.values) v = round_to_float(v);
  result.params = std::move(best);
  return result;
}

Matrix predict(const ModelParams& params, const FrameFeatures& features) {
  require(features.dim() == params.d_in, ErrorCode::InvalidArgument,
          "features have " + std::to_string(features.dim()) + " dims, model expects " + std::to_string(params.d_in));
  Matrix out(features.n_frames(), params.n_labels());
  for (std::size_t t = 0; t < features.n_frames(); ++t) {
    const auto p = forward(params, window_at(features, t, params.window));
    std::copy(p.begin(), p.end(), out.row(t).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

void save_params(const std::filesystem::path& path, const ModelParams& params) {
  json header = params.identity();
  header["kind"] = "s2g.classifier";
  header["version"] = 1;
  header["spec_hash"] = params.spec_hash();
  json tensors = json::array();
  for (const auto& t : params.layout) tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  header["tensors"] = tensors;
  std::vector<float> payload(params.values.begin(), params.values.end());
  write_blob(path, std::move(header), payload);
}

ModelParams load_params(const std::filesystem::path& path) {
  const Blob blob = read_blob(path);
  const json& h = blob.header;
  if (h.value("kind", "") != "s2g.classifier") fail(ErrorCode::Parse, path.string() + ": not a classifier checkpoint");
  ModelParams p;
  try {
    p.spec = DilatedConvSpec::from_json(h.at("spec"));
    p.window = WindowSpec::from_json(h.at("window"));
    p.d_in = h.at("d_in").get<std::size_t>();
    const auto tier = schema::parse_tier(h.at("tier").get<std::string>());
    if (!tier) fail(ErrorCode::Parse, path.string() + ": unknown tier");
    p.tier = *tier;
    p.labels = h.at("labels").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": bad header: " + e.what());
  }
  if (h.value("spec_hash", "") != p.spec_hash())
    fail(ErrorCode::Incompatible, "incompatible checkpoint: spec hash does not match its header");
  if (p.labels != schema::labels(p.tier))
    fail(ErrorCode::Incompatible, "incompatible checkpoint: labels do not match the schema");
  p.spec.validate();
  p.layout = make_layout(p.spec, p.d_in, p.labels.size());
  const std::size_t n = p.layout.back().offset + p.layout.back().size;
  if (blob.payload.size() != n)
    fail(ErrorCode::Parse, path.string() + ": payload has " + std::to_string(blob.payload.size()) +
                               " floats, layout needs " + std::to_string(n));
  p.values.assign(blob.payload.begin(), blob.payload.end());
  return p;
}

ModelParams load_params(const std::filesystem::path& path, const std::string& expected_hash) {
  ModelParams p = load_params(path);
  if (p.spec_hash() != expected_hash) fail(ErrorCode::Incompatible, "incompatible checkpoint: " + path.string());
  return p;
}

}  // namespace s2g
