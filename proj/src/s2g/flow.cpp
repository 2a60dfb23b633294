#include "s2g/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "s2g/optim.hpp"

namespace s2g {

void FlowSpec::validate() const {
  require(d_pose >= 2, ErrorCode::InvalidArgument, "d_pose must be >= 2");
  require(n_layers >= 2, ErrorCode::InvalidArgument, "n_layers must be >= 2 so that every dimension is transformed");
  require(hidden >= 1, ErrorCode::InvalidArgument, "hidden must be >= 1");
  require(max_log_scale > 0.0, ErrorCode::InvalidArgument, "max_log_scale must be positive");
}

json FlowSpec::to_json() const {
  return {{"d_pose", d_pose}, {"d_cond", d_cond}, {"n_layers", n_layers}, {"hidden", hidden},
          {"max_log_scale", max_log_scale}};
}

FlowSpec FlowSpec::from_json(const json& j) {
  FlowSpec s;
  s.d_pose = j.value("d_pose", s.d_pose);
  s.d_cond = j.value("d_cond", s.d_cond);
  s.n_layers = j.value("n_layers", s.n_layers);
  s.hidden = j.value("hidden", s.hidden);
  s.max_log_scale = j.value("max_log_scale", s.max_log_scale);
  return s;
}

const TensorInfo& FlowParams::tensor(std::string_view name) const {
  for (const auto& t : layout)
    if (t.name == name) return t;
  fail(ErrorCode::InvalidArgument, "no tensor named " + std::string(name));
}

std::span<double> FlowParams::view(std::string_view name) {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size};
}

std::span<const double> FlowParams::view(std::string_view name) const {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size};
}

std::string FlowParams::spec_hash() const { return json_hash(spec.to_json()); }

CouplingMask coupling_mask(const FlowSpec& spec, std::size_t layer) {
  const std::size_t half = spec.d_pose / 2;
  CouplingMask m;
  for (std::size_t i = 0; i < spec.d_pose; ++i) {
    const bool first = i < half;
    ((layer % 2 == 0) == first ? m.pass : m.transformed).push_back(i);
  }
  return m;
}

namespace {

std::vector<TensorInfo> flow_layout(const FlowSpec& spec) {
  std::vector<TensorInfo> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, bool trainable = true) {
    const std::size_t size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    layout.push_back({std::move(name), std::move(shape), offset, size, trainable});
    offset += size;
  };
  add("cond.mean", {spec.d_cond}, false);
  add("cond.std", {spec.d_cond}, false);
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    const auto m = coupling_mask(spec, l);
    const std::string p = "layer" + std::to_string(l);
    add(p + ".w1", {spec.hidden, m.pass.size() + spec.d_cond});
    add(p + ".b1", {spec.hidden});
    add(p + ".w2", {2 * m.transformed.size(), spec.hidden});
    add(p + ".b2", {2 * m.transformed.size()});
  }
  return layout;
}

struct LayerCache {
  std::vector<double> x_in;
  std::vector<double> u;
  std::vector<double> h;
  std::vector<double> raw;
  std::vector<double> log_scale;
};

struct LayerRefs {
  CouplingMask mask;
  std::size_t w1, b1, w2, b2;  // offsets
};

std::vector<LayerRefs> layer_refs(const FlowParams& p) {
  std::vector<LayerRefs> refs;
  for (std::size_t l = 0; l < p.spec.n_layers; ++l) {
    const std::string n = "layer" + std::to_string(l);
    refs.push_back({coupling_mask(p.spec, l), p.tensor(n + ".w1").offset, p.tensor(n + ".b1").offset,
                    p.tensor(n + ".w2").offset, p.tensor(n + ".b2").offset});
  }
  return refs;
}

std::vector<double> standardise_cond(const FlowParams& p, std::span<const double> c) {
  const auto mean = p.view("cond.mean");
  const auto sd = p.view("cond.std");
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = (c[i] - mean[i]) / sd[i];
  return out;
}

// Conditioner of one layer: fills cache.u, cache.h, cache.raw, cache.log_scale
// and returns the shifts.
std::vector<double> conditioner(const FlowParams& p, const LayerRefs& r, std::span<const double> x,
                                const std::vector<double>& cnorm, LayerCache& cache) {
  const std::size_t H = p.spec.hidden;
  const std::size_t nt = r.mask.transformed.size();
  const double S = p.spec.max_log_scale;
  cache.u.clear();
  for (std::size_t i : r.mask.pass) cache.u.push_back(x[i]);
  cache.u.insert(cache.u.end(), cnorm.begin(), cnorm.end());
  const std::size_t nu = cache.u.size();
  const double* w1 = p.values.data() + r.w1;
  const double* b1 = p.values.data() + r.b1;
  const double* w2 = p.values.data() + r.w2;
  const double* b2 = p.values.data() + r.b2;
  cache.h.assign(H, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    double a = b1[j];
    const double* w = w1 + j * nu;
    for (std::size_t i = 0; i < nu; ++i) a += w[i] * cache.u[i];
    cache.h[j] = std::tanh(a);
  }
  cache.raw.assign(nt, 0.0);
  cache.log_scale.assign(nt, 0.0);
  std::vector<double> shift(nt, 0.0);
  for (std::size_t o = 0; o < 2 * nt; ++o) {
    double a = b2[o];
    const double* w = w2 + o * H;
    for (std::size_t j = 0; j < H; ++j) a += w[j] * cache.h[j];
    if (o < nt) {
      cache.raw[o] = a;
      cache.log_scale[o] = S * std::tanh(a / S);
    } else {
      shift[o - nt] = a;
    }
  }
  return shift;
}

void check_dims(const FlowParams& p, std::size_t nx, std::size_t nc) {
  if (nx != p.spec.d_pose || nc != p.spec.d_cond)
    fail(ErrorCode::InvalidArgument, "flow expects pose/cond of " + std::to_string(p.spec.d_pose) + "/" +
                                         std::to_string(p.spec.d_cond) + " dims, got " + std::to_string(nx) + "/" +
                                         std::to_string(nc));
}

void check_finite(std::span<const double> v, std::size_t layer) {
  for (double x : v)
    if (!std::isfinite(x)) fail(ErrorCode::Numeric, "numerical overflow in layer " + std::to_string(layer));
}

FlowResult forward_cached(const FlowParams& p, std::span<const double> x, std::span<const double> c,
                          std::vector<LayerCache>* caches) {
  check_dims(p, x.size(), c.size());
  const auto refs = layer_refs(p);
  const auto cnorm = standardise_cond(p, c);
  std::vector<double> cur(x.begin(), x.end());
  FlowResult out;
  LayerCache scratch;
  if (caches) caches->assign(refs.size(), {});
  for (std::size_t l = 0; l < refs.size(); ++l) {
    LayerCache& lc = caches ? (*caches)[l] : scratch;
    lc.x_in = cur;
    const auto shift = conditioner(p, refs[l], cur, cnorm, lc);
    const auto& T = refs[l].mask.transformed;
    for (std::size_t i = 0; i < T.size(); ++i) {
      cur[T[i]] = cur[T[i]] * std::exp(lc.log_scale[i]) + shift[i];
      out.log_det += lc.log_scale[i];
    }
    check_finite(cur, l);
  }
  out.z = std::move(cur);
  return out;
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

FlowParams init_flow(const FlowSpec& spec, std::uint64_t seed) {
  spec.validate();
  FlowParams p;
  p.spec = spec;
  p.layout = flow_layout(spec);
  p.values.assign(p.layout.back().offset + p.layout.back().size, 0.0);
  for (double& v : p.view("cond.std")) v = 1.0;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    auto w1 = p.view("layer" + std::to_string(l) + ".w1");
    const std::size_t fan_in = p.tensor("layer" + std::to_string(l) + ".w1").shape[1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : w1) v = round_to_float(u(rng));
  }
  return p;
}

FlowResult flow_forward(const FlowParams& params, std::span<const double> x, std::span<const double> c) {
  return forward_cached(params, x, c, nullptr);
}

std::vector<double> flow_inverse(const FlowParams& params, std::span<const double> z, std::span<const double> c) {
  check_dims(params, z.size(), c.size());
  const auto refs = layer_refs(params);
  const auto cnorm = standardise_cond(params, c);
  std::vector<double> cur(z.begin(), z.end());
  LayerCache lc;
  for (std::size_t l = refs.size(); l-- > 0;) {
    // pass-through half is unchanged, so the conditioner sees the same input
    const auto shift = conditioner(params, refs[l], cur, cnorm, lc);
    const auto& T = refs[l].mask.transformed;
    for (std::size_t i = 0; i < T.size(); ++i) cur[T[i]] = (cur[T[i]] - shift[i]) * std::exp(-lc.log_scale[i]);
    check_finite(cur, l);
  }
  return cur;
}

double log_likelihood(const FlowParams& params, std::span<const double> x, std::span<const double> c) {
  const FlowResult r = flow_forward(params, x, c);
  double sq = 0.0;
  for (double v : r.z) sq += v * v;
  return -0.5 * sq - 0.5 * static_cast<double>(r.z.size()) * kLog2Pi + r.log_det;
}

double nll_and_gradient(const FlowParams& params, const std::vector<const FlowExample*>& batch,
                        std::vector<double>* grad) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  if (grad) grad->assign(params.values.size(), 0.0);
  const auto refs = layer_refs(params);
  const std::size_t H = params.spec.hidden;
  const double S = params.spec.max_log_scale;
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<LayerCache> caches;
  double total = 0.0;
  for (const FlowExample* ex : batch) {
    const FlowResult r = forward_cached(params, ex->pose, ex->cond, grad ? &caches : nullptr);
    double sq = 0.0;
    for (double v : r.z) sq += v * v;
    total += 0.5 * sq + 0.5 * static_cast<double>(r.z.size()) * kLog2Pi - r.log_det;
    if (!grad) continue;

    std::vector<double> dy(r.z.begin(), r.z.end());
    for (double& g : dy) g *= scale;
    for (std::size_t l = refs.size(); l-- > 0;) {
      const LayerRefs& ref = refs[l];
      const LayerCache& lc = caches[l];
      const auto& T = ref.mask.transformed;
      const std::size_t nt = T.size();
      const std::size_t nu = lc.u.size();
      std::vector<double> dx = dy;
      std::vector<double> dout(2 * nt);
      for (std::size_t i = 0; i < nt; ++i) {
        const double s = std::exp(lc.log_scale[i]);
        const double g = dy[T[i]];
        dx[T[i]] = g * s;
        const double dls = g * lc.x_in[T[i]] * s - scale;  // -log_det contributes -1 per example
        const double th = std::tanh(lc.raw[i] / S);
        dout[i] = dls * (1.0 - th * th);
        dout[nt + i] = g;
      }
      double* gw2 = grad->data() + ref.w2;
      double* gb2 = grad->data() + ref.b2;
      const double* w2 = params.values.data() + ref.w2;
      std::vector<double> dh(H, 0.0);
      for (std::size_t o = 0; o < 2 * nt; ++o) {
        gb2[o] += dout[o];
        for (std::size_t j = 0; j < H; ++j) {
          gw2[o * H + j] += dout[o] * lc.h[j];
          dh[j] += w2[o * H + j] * dout[o];
        }
      }
      double* gw1 = grad->data() + ref.w1;
      double* gb1 = grad->data() + ref.b1;
      const double* w1 = params.values.data() + ref.w1;
      const std::size_t np = ref.mask.pass.size();
      for (std::size_t j = 0; j < H; ++j) {
        const double da = dh[j] * (1.0 - lc.h[j] * lc.h[j]);
        if (da == 0.0) continue;
        gb1[j] += da;
        for (std::size_t i = 0; i < nu; ++i) gw1[j * nu + i] += da * lc.u[i];
        for (std::size_t i = 0; i < np; ++i) dx[ref.mask.pass[i]] += w1[j * nu + i] * da;
      }
      dy = std::move(dx);
    }
  }
  return total * scale;
}

// ---------------------------------------------------------------------------
// training

json FlowTrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"seed", seed},     {"val_fraction", val_fraction}, {"patience", patience}};
}

FlowTrainConfig FlowTrainConfig::from_json(const json& j) {
  FlowTrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.patience = j.value("patience", c.patience);
  return c;
}

json FlowEpochLog::to_json() const {
  return {{"epoch", epoch}, {"train_nll", train_nll}, {"val_nll", val_nll}, {"best_val_nll", best_val_nll}};
}

std::string FlowTrainResult::log_jsonl() const {
  std::string out;
  for (const auto& e : log) out += e.to_json().dump() + "\n";
  return out;
}

FlowTrainResult train_flow(const std::vector<FlowExample>& data, const FlowTrainConfig& config,
                           const FlowSpec& spec) {
  if (data.empty()) fail(ErrorCode::Data, "empty flow training set");
  require(config.epochs >= 1 && config.batch_size >= 1 && config.learning_rate > 0.0, ErrorCode::InvalidArgument,
          "invalid flow training config");
  for (const auto& ex : data)
    if (ex.pose.size() != spec.d_pose || ex.cond.size() != spec.d_cond)
      fail(ErrorCode::InvalidArgument, "flow example dims do not match the flow configuration");

  std::mt19937_64 rng(config.seed ^ 0x2545f4914f6cdd1dULL);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
  };
  std::vector<const FlowExample*> train_set, val_set;
  const auto n_val = static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(data.size())));
  if (n_val >= 1 && data.size() - n_val >= 1) {
    shuffle(idx);
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? val_set : train_set).push_back(&data[idx[i]]);
  } else {
    for (const auto& ex : data) train_set.push_back(&ex);
    val_set = train_set;
  }

  FlowParams params = init_flow(spec, config.seed);
  {
    auto mean = params.view("cond.mean");
    auto sd = params.view("cond.std");
    std::vector<double> sq(spec.d_cond, 0.0);
    for (const FlowExample* ex : train_set)
      for (std::size_t i = 0; i < spec.d_cond; ++i) {
        mean[i] += ex->cond[i];
        sq[i] += ex->cond[i] * ex->cond[i];
      }
    const auto n = static_cast<double>(train_set.size());
    for (std::size_t i = 0; i < spec.d_cond; ++i) {
      mean[i] /= n;
      const double var = std::max(0.0, sq[i] / n - mean[i] * mean[i]);
      sd[i] = round_to_float(var > 1e-12 ? std::sqrt(var) : 1.0);
      mean[i] = round_to_float(mean[i]);
    }
  }

  Adam adam(params.values.size(), config.learning_rate);
  FlowTrainResult result;
  FlowParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  std::vector<const FlowExample*> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(train_set[order[i]]);
      double nll;
      try {
        nll = nll_and_gradient(params, batch, &grad);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::Numeric) fail(ErrorCode::Numeric, "diverged at epoch " + std::to_string(epoch));
        throw;
      }
      if (!std::isfinite(nll)) fail(ErrorCode::Numeric, "diverged at epoch " + std::to_string(epoch));
      total += nll * static_cast<double>(batch.size());
      adam.step(params.values, grad);
    }
    const double val = nll_and_gradient(params, val_set, nullptr);
    if (!std::isfinite(val)) fail(ErrorCode::Numeric, "diverged at epoch " + std::to_string(epoch));
    if (val < best_val) {
      best_val = val;
      best = params;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.log.push_back({epoch, total / static_cast<double>(order.size()), val, best_val});
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  for (double& v : best.values) v = round_to_float(v);
  result.params = std::move(best);
  return result;
}

std::vector<std::vector<double>> sample(const FlowParams& params, std::span<const double> c, std::size_t n,
                                        std::uint64_t seed) {
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  std::vector<double> z(params.spec.d_pose);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : z) v = normal(rng);
    out.push_back(flow_inverse(params, z, c));
  }
  return out;
}

std::vector<double> make_conditioning(std::span<const double> audio, std::span<const double> text,
                                      std::span<const double> properties) {
  require(properties.size() == schema::kPropertyCount, ErrorCode::InvalidArgument,
          "property slice must have 13 entries");
  std::vector<double> c;
  c.reserve(audio.size() + text.size() + properties.size());
  c.insert(c.end(), audio.begin(), audio.end());
  c.insert(c.end(), text.begin(), text.end());
  c.insert(c.end(), properties.begin(), properties.end());
  return c;
}

std::vector<double> property_pose_offset(std::size_t property, std::size_t d_pose) {
  std::vector<double> v(d_pose, 0.0);
  for (std::size_t i = 0; i < d_pose; ++i) {
    const std::uint64_t h = fnv1a64("pose-offset/" + std::to_string(property) + "/" + std::to_string(i));
    v[i] = static_cast<double>(h % 2001) / 1000.0 - 1.0;  // [-1, 1] in steps of 0.001
  }
  return v;
}

std::vector<FlowExample> planted_pose_data(const std::vector<PreparedRecording>& recordings, std::size_t d_pose,
                                           std::uint64_t seed) {
  std::vector<std::vector<double>> offsets;
  for (std::size_t p = 0; p < schema::kPropertyCount; ++p) offsets.push_back(property_pose_offset(p, d_pose));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FlowExample> out;
  for (const auto& rec : recordings) {
    for (std::size_t t = 0; t < rec.grid.n_frames; ++t) {
      if (!rec.grid.existence[t]) continue;
      std::vector<double> bits(schema::kPropertyCount);
      FlowExample ex;
      ex.pose.assign(d_pose, 0.0);
      for (std::size_t p = 0; p < schema::kPropertyCount; ++p) {
        bits[p] = rec.grid.label(t, p);
        if (bits[p] != 0.0)
          for (std::size_t i = 0; i < d_pose; ++i) ex.pose[i] += offsets[p][i];
      }
      for (double& v : ex.pose) v += normal(rng);
      ex.cond = make_conditioning(rec.features.audio.row(t), rec.features.text.row(t), bits);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

void save_flow(const std::filesystem::path& path, const FlowParams& params) {
  json header{{"kind", "s2g.flow"}, {"version", 1}, {"spec", params.spec.to_json()}, {"spec_hash", params.spec_hash()}};
  json tensors = json::array();
  for (const auto& t : params.layout) tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  header["tensors"] = tensors;
  std::vector<float> payload(params.values.begin(), params.values.end());
  write_blob(path, std::move(header), payload);
}

FlowParams load_flow(const std::filesystem::path& path) {
  const Blob blob = read_blob(path);
  const json& h = blob.header;
  if (h.value("kind", "") != "s2g.flow") fail(ErrorCode::Parse, path.string() + ": not a flow checkpoint");
  FlowParams p;
  try {
    p.spec = FlowSpec::from_json(h.at("spec"));
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": bad header: " + e.what());
  }
  if (h.value("spec_hash", "") != p.spec_hash())
    fail(ErrorCode::Incompatible, "incompatible checkpoint: spec hash does not match its header");
  p.spec.validate();
  p.layout = flow_layout(p.spec);
  const std::size_t n = p.layout.back().offset + p.layout.back().size;
  if (blob.payload.size() != n) fail(ErrorCode::Parse, path.string() + ": payload size does not match the layout");
  p.values.assign(blob.payload.begin(), blob.payload.end());
  return p;
}

}  // namespace s2g
