#include "s2g/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace s2g {

std::size_t AudioFeatureConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_length_s * sample_rate_hz));
}

std::size_t AudioFeatureConfig::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop_s * sample_rate_hz));
}

std::size_t AudioFeatureConfig::fft_size() const {
  std::size_t n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

void AudioFeatureConfig::validate() const {
  require(sample_rate_hz > 0.0, ErrorCode::InvalidArgument, "sample rate must be positive");
  require(hop_s > 0.0 && hop_s <= window_length_s, ErrorCode::InvalidArgument, "need 0 < hop_s <= window_length_s");
  require(hop_samples() >= 1 && window_samples() >= 2, ErrorCode::InvalidArgument, "window or hop below one sample");
  require(n_mels >= 1, ErrorCode::InvalidArgument, "n_mels must be >= 1");
  require(fmin_hz >= 0.0 && fmin_hz < effective_fmax() && effective_fmax() <= sample_rate_hz / 2.0 + 1e-9,
          ErrorCode::InvalidArgument, "need 0 <= fmin < fmax <= Nyquist");
  require(log_floor > 0.0, ErrorCode::InvalidArgument, "log_floor must be positive");
}

json AudioFeatureConfig::to_json() const {
  return {{"sample_rate", sample_rate_hz}, {"window_length_s", window_length_s}, {"hop_s", hop_s},
          {"n_mels", n_mels},              {"fmin_hz", fmin_hz},                 {"fmax_hz", effective_fmax()},
          {"log_floor", log_floor}};
}

AudioFeatureConfig AudioFeatureConfig::from_json(const json& j, double sample_rate_hz) {
  AudioFeatureConfig c;
  c.sample_rate_hz = j.value("sample_rate", sample_rate_hz);
  c.window_length_s = j.value("window_length_s", c.window_length_s);
  c.hop_s = j.value("hop_s", c.hop_s);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.fmin_hz = j.value("fmin_hz", c.fmin_hz);
  c.fmax_hz = j.value("fmax_hz", c.fmax_hz);
  c.log_floor = j.value("log_floor", c.log_floor);
  return c;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_edges_hz(const AudioFeatureConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.effective_fmax());
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  return edges;
}

Matrix mel_filterbank(const AudioFeatureConfig& cfg) {
  const std::size_t n_fft = cfg.fft_size();
  const std::size_t n_bins = n_fft / 2 + 1;
  const auto edges = mel_band_edges_hz(cfg);
  Matrix fb(cfg.n_mels, n_bins);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate_hz / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > left && f <= centre)
        w = (f - left) / (centre - left);
      else if (f > centre && f < right)
        w = (right - f) / (right - centre);
      fb(m, k) = w;
    }
  }
  return fb;
}

namespace {

// RAII wrapper around one r2c plan and its buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

SpectralFrames log_mel(std::span<const float> audio, const AudioFeatureConfig& cfg) {
  cfg.validate();
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  if (audio.size() < win) fail(ErrorCode::Data, "audio too short");

  const std::size_t n_spec = 1 + (audio.size() - win) / hop;
  const std::size_t n_fft = cfg.fft_size();
  const std::size_t n_bins = n_fft / 2 + 1;
  const Matrix fb = mel_filterbank(cfg);

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));

  // non-zero filterbank support per band keeps the product cheap
  std::vector<std::pair<std::size_t, std::size_t>> support(cfg.n_mels, {0, 0});
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    std::size_t lo = n_bins, hi = 0;
    for (std::size_t k = 0; k < n_bins; ++k)
      if (fb(m, k) != 0.0) {
        lo = std::min(lo, k);
        hi = k + 1;
      }
    support[m] = lo < hi ? std::make_pair(lo, hi) : std::make_pair(std::size_t{0}, std::size_t{0});
  }

  SpectralFrames out;
  out.values = Matrix(n_spec, cfg.n_mels);
  out.hop_s = static_cast<double>(hop) / cfg.sample_rate_hz;
  out.window_s = static_cast<double>(win) / cfg.sample_rate_hz;
  out.duration_s = static_cast<double>(audio.size()) / cfg.sample_rate_hz;

  RealFft fft(n_fft);
  std::vector<double> power(n_bins);
  const double log_floor = std::log(cfg.log_floor);
  for (std::size_t i = 0; i < n_spec; ++i) {
    double* in = fft.input();
    const std::size_t off = i * hop;
    for (std::size_t s = 0; s < win; ++s) in[s] = static_cast<double>(audio[off + s]) * window[s];
    std::fill(in + win, in + n_fft, 0.0);
    fft.execute();
    for (std::size_t k = 0; k < n_bins; ++k) power[k] = fft.power(k);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = support[m].first; k < support[m].second; ++k) e += fb(m, k) * power[k];
      out.values(i, m) = e > cfg.log_floor ? std::log(e) : log_floor;
    }
  }
  return out;
}

Matrix pool_to_fps(const SpectralFrames& spec, double fps) {
  require(fps > 0.0, ErrorCode::InvalidArgument, "fps must be positive");
  require(fps * spec.hop_s <= 1.0 + 1e-12, ErrorCode::InvalidArgument, "fps * hop must be <= 1");
  const std::size_t n_frames = frames_for_duration(spec.duration_s, fps);
  const std::size_t d = spec.values.cols();
  Matrix out(n_frames, d);
  std::vector<std::size_t> counts(n_frames, 0);
  for (std::size_t i = 0; i < spec.values.rows(); ++i) {
    const double centre = static_cast<double>(i) * spec.hop_s + spec.window_s / 2.0;
    const auto t = static_cast<std::size_t>(std::floor(centre * fps + 1e-9));
    if (t >= n_frames) continue;
    ++counts[t];
    for (std::size_t c = 0; c < d; ++c) out(t, c) += spec.values(i, c);
  }
  for (std::size_t t = 0; t < n_frames; ++t)
    if (counts[t] > 0)
      for (std::size_t c = 0; c < d; ++c) out(t, c) /= static_cast<double>(counts[t]);

  // fill empty bins from the nearest non-empty one (earlier wins ties)
  std::vector<std::size_t> filled;
  for (std::size_t t = 0; t < n_frames; ++t)
    if (counts[t] > 0) filled.push_back(t);
  if (filled.empty()) return out;
  for (std::size_t t = 0; t < n_frames; ++t) {
    if (counts[t] > 0) continue;
    const auto it = std::lower_bound(filled.begin(), filled.end(), t);
    std::size_t src;
    if (it == filled.end()) {
      src = filled.back();
    } else if (it == filled.begin()) {
      src = *it;
    } else {
      const std::size_t after = *it, before = *(it - 1);
      src = (t - before) <= (after - t) ? before : after;
    }
    for (std::size_t c = 0; c < d; ++c) out(t, c) = out(src, c);
  }
  return out;
}

std::vector<std::vector<double>> HashingTextProvider::embed(const std::vector<std::string>& tokens) const {
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  for (const auto& token : tokens) {
    std::vector<double> v(dim_, 0.0);
    std::string marked = "<";
    for (char ch : token) marked.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    marked.push_back('>');
    for (std::size_t i = 0; i + 3 <= marked.size() || (i == 0 && marked.size() < 3); ++i) {
      const std::string_view gram = std::string_view(marked).substr(i, 3);
      const std::uint64_t h = fnv1a64(gram);
      const double sign = (h >> 63) ? -1.0 : 1.0;
      v[h % dim_] += sign;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0)
      for (double& x : v) x /= std::sqrt(norm);
    out.push_back(std::move(v));
  }
  return out;
}

Matrix align_text(const std::vector<Word>& words, const TextEmbeddingProvider& provider, std::size_t n_frames,
                  double fps) {
  require(fps > 0.0, ErrorCode::InvalidArgument, "fps must be positive");
  const std::size_t d = provider.dim();
  Matrix out(n_frames, d);
  if (words.empty() || n_frames == 0) return out;

  std::vector<std::string> tokens;
  tokens.reserve(words.size());
  for (const auto& w : words) tokens.push_back(w.token);
  std::vector<std::vector<double>> emb;
  try {
    emb = provider.embed(tokens);
  } catch (const std::exception& e) {
    fail(ErrorCode::Data, std::string("text provider failed: ") + e.what());
  }
  if (emb.size() != tokens.size())
    fail(ErrorCode::Data, "text provider returned " + std::to_string(emb.size()) + " vectors for " +
                              std::to_string(tokens.size()) + " tokens");
  for (std::size_t i = 0; i < emb.size(); ++i)
    if (emb[i].size() != d)
      fail(ErrorCode::Data, "text provider returned a vector of wrong size for token " + std::to_string(i));

  // order by start so that, among covering words, the later-starting one wins
  std::vector<std::size_t> order(words.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return words[a].start_s < words[b].start_s; });
  for (std::size_t i : order) {
    const auto& w = words[i];
    // frames whose centre (t + 0.5)/fps lies in [start, end)
    const double first = std::ceil(w.start_s * fps - 0.5 - 1e-9);
    for (auto t = static_cast<std::size_t>(std::max(0.0, first)); t < n_frames; ++t) {
      const double centre = (static_cast<double>(t) + 0.5) / fps;
      if (centre >= w.end_s) break;
      if (centre < w.start_s) continue;
      std::copy(emb[i].begin(), emb[i].end(), out.row(t).begin());
    }
  }
  return out;
}

std::vector<double> FrameFeatures::frame(std::size_t t) const {
  std::vector<double> v;
  v.reserve(dim());
  v.insert(v.end(), audio.row(t).begin(), audio.row(t).end());
  v.insert(v.end(), text.row(t).begin(), text.row(t).end());
  return v;
}

FrameFeatures extract_features(const AnnotatedRecording& rec, const AudioFeatureConfig& cfg,
                               const TextEmbeddingProvider& provider, double fps) {
  AudioFeatureConfig c = cfg;
  c.sample_rate_hz = rec.sample_rate_hz;
  FrameFeatures f;
  f.fps = fps;
  f.audio = pool_to_fps(log_mel(rec.audio, c), fps);
  f.text = align_text(rec.words, provider, f.audio.rows(), fps);
  return f;
}

std::string feature_config_hash(const AudioFeatureConfig& cfg, const TextEmbeddingProvider& provider, double fps) {
  json j = cfg.to_json();
  j.erase("sample_rate");  // per-recording
  j["provider"] = provider.name();
  j["fps"] = fps;
  return json_hash(j);
}

void save_feature_cache(const std::filesystem::path& path, const FrameFeatures& f, const std::string& config_hash) {
  json header{{"kind", "s2g.features"}, {"version", 1},          {"n_frames", f.n_frames()},
              {"d_audio", f.audio.cols()}, {"d_text", f.text.cols()}, {"fps", f.fps},
              {"config_hash", config_hash}};
  std::vector<float> payload;
  payload.reserve(f.audio.data().size() + f.text.data().size());
  for (double v : f.audio.data()) payload.push_back(static_cast<float>(v));
  for (double v : f.text.data()) payload.push_back(static_cast<float>(v));
  write_blob(path, std::move(header), payload);
}

FrameFeatures load_feature_cache(const std::filesystem::path& path, const std::string& expected_hash) {
  const Blob blob = read_blob(path);
  const json& h = blob.header;
  if (h.value("kind", "") != "s2g.features") fail(ErrorCode::Parse, path.string() + ": not a feature cache");
  if (h.value("config_hash", "") != expected_hash)
    fail(ErrorCode::Incompatible, path.string() + ": feature cache built with a different config");
  const auto n = h.at("n_frames").get<std::size_t>();
  const auto da = h.at("d_audio").get<std::size_t>();
  const auto dt = h.at("d_text").get<std::size_t>();
  if (blob.payload.size() != n * (da + dt)) fail(ErrorCode::Parse, path.string() + ": payload size mismatch");
  FrameFeatures f;
  f.fps = h.at("fps").get<double>();
  f.audio = Matrix(n, da);
  f.text = Matrix(n, dt);
  for (std::size_t i = 0; i < n * da; ++i) f.audio.data()[i] = blob.payload[i];
  for (std::size_t i = 0; i < n * dt; ++i) f.text.data()[i] = blob.payload[n * da + i];
  return f;
}

}  // namespace s2g
