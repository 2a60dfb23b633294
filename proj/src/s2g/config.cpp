#include "s2g/config.hpp"

#include <set>

namespace s2g {

std::unique_ptr<TextEmbeddingProvider> TextProviderConfig::make() const {
  if (kind != "hashing") fail(ErrorCode::InvalidArgument, "unknown text provider '" + kind + "'");
  require(dim >= 1, ErrorCode::InvalidArgument, "text provider dim must be >= 1");
  return std::make_unique<HashingTextProvider>(dim);
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
  return {{"prevalences", s.prevalences},
          {"n_recordings", s.n_recordings},
          {"n_speakers", s.n_speakers},
          {"duration_s", s.duration_s},
          {"seed", s.seed},
          {"sample_rate", s.sample_rate_hz},
          {"fps", s.fps},
          {"tone_amplitude", s.tone_amplitude},
          {"noise_std", s.noise_std},
          {"min_interval_frames", s.min_interval_frames},
          {"max_interval_frames", s.max_interval_frames},
          {"filler_word_rate", s.filler_word_rate}};
}

json RunConfig::to_json() const {
  json pipe = pipeline.to_json();
  pipe.erase("window");
  pipe.erase("audio");
  pipe.erase("fps");
  return {{"fps", fps},
          {"audio",
           {{"sample_rate", audio.sample_rate_hz},
            {"window_length_s", audio.window_length_s},
            {"hop_s", audio.hop_s},
            {"n_mels", audio.n_mels},
            {"fmin_hz", audio.fmin_hz},
            {"fmax_hz", audio.fmax_hz},
            {"log_floor", audio.log_floor}}},
          {"text_provider", {{"kind", text_provider.kind}, {"dim", text_provider.dim}}},
          {"window", window.to_json()},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"flow", flow.to_json()},
          {"flow_train", flow_train.to_json()},
          {"cv",
           {{"k", cv.k}, {"seed", cv.seed}, {"baseline_trials", cv.baseline_trials},
            {"baseline_seed", cv.baseline_seed}}},
          {"baseline", {{"n_frames", baseline.n_frames}, {"trials", baseline.trials}, {"seed", baseline.seed}}},
          {"pipeline", pipe},
          {"synth", synthetic_spec_to_json(synth)}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, "config must be a JSON object");
  static const std::set<std::string> known{"fps",  "audio",      "text_provider", "window",   "model",   "train",
                                           "flow", "flow_train", "cv",            "baseline", "pipeline", "synth"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) fail(ErrorCode::InvalidArgument, "unknown config section '" + key + "'");

  RunConfig c;
  const json empty = json::object();
  auto section = [&](const char* name) -> const json& { return j.contains(name) ? j.at(name) : empty; };
  try {
    c.fps = j.value("fps", c.fps);
    c.audio = AudioFeatureConfig::from_json(section("audio"), c.audio.sample_rate_hz);
    c.text_provider.kind = section("text_provider").value("kind", c.text_provider.kind);
    c.text_provider.dim = section("text_provider").value("dim", c.text_provider.dim);
    c.window = WindowSpec::from_json(section("window"));
    c.model = DilatedConvSpec::from_json(section("model"));
    c.train = TrainConfig::from_json(section("train"));
    c.flow = FlowSpec::from_json(section("flow"));
    c.flow_train = FlowTrainConfig::from_json(section("flow_train"));
    const json& cv = section("cv");
    c.cv.k = cv.value("k", c.cv.k);
    c.cv.seed = cv.value("seed", c.cv.seed);
    c.cv.baseline_trials = cv.value("baseline_trials", c.cv.baseline_trials);
    c.cv.baseline_seed = cv.value("baseline_seed", c.cv.baseline_seed);
    const json& b = section("baseline");
    c.baseline.n_frames = b.value("n_frames", c.baseline.n_frames);
    c.baseline.trials = b.value("trials", c.baseline.trials);
    c.baseline.seed = b.value("seed", c.baseline.seed);
    c.pipeline = PipelineConfig::from_json(section("pipeline"), c.audio.sample_rate_hz);
    c.synth = synthetic_spec_from_json(section("synth"));
    if (!section("synth").contains("prevalences")) c.synth.prevalences = reference_prevalences();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  if (!section("flow").contains("d_cond"))
    c.flow.d_cond = c.audio.n_mels + c.text_provider.dim + schema::kPropertyCount;
  // the top-level window, audio and fps govern the pipeline too
  c.pipeline.window = c.window;
  c.pipeline.audio = c.audio;
  c.pipeline.fps = c.fps;
  c.audio.validate();
  c.model.validate();
  c.train.validate();
  require(c.fps > 0.0, ErrorCode::InvalidArgument, "fps must be positive");
  require(c.cv.k >= 2, ErrorCode::InvalidArgument, "cv.k must be >= 2");
  return c;
}

AudioFeatureConfig RunConfig::audio_for(double sample_rate_hz) const {
  AudioFeatureConfig a = audio;
  a.sample_rate_hz = sample_rate_hz;
  a.validate();
  return a;
}

CvConfig RunConfig::cv_config() const {
  CvConfig c;
  c.train = train;
  c.spec = model;
  c.window = window;
  c.baseline_trials = cv.baseline_trials;
  c.baseline_seed = cv.baseline_seed;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}


std::filesystem::path feature_cache_path(const std::filesystem::path& cache_dir, const AnnotatedRecording& rec,
                                         const std::string& config_hash) {
  std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(rec.audio.data()),
                                             rec.audio.size() * sizeof(float)));
  h = fnv1a64(std::to_string(rec.sample_rate_hz), h);
  for (const auto& w : rec.words) h = fnv1a64(w.token + "|" + std::to_string(w.start_s) + "|" + std::to_string(w.end_s), h);
  return cache_dir / config_hash / (rec.recording_id + "-" + hex64(h) + ".feat");
}

std::vector<PreparedRecording> prepare_corpus(const std::vector<AnnotatedRecording>& recordings,
                                              const RunConfig& config,
                                              const std::optional<std::filesystem::path>& cache_dir) {
  const auto provider = config.text_provider.make();
  std::vector<PreparedRecording> out;
  out.reserve(recordings.size());
  for (const auto& rec : recordings) {
    PreparedRecording p;
    p.recording_id = rec.recording_id;
    p.speaker_id = rec.speaker_id;
    p.grid = rasterize(rec, config.fps);
    const AudioFeatureConfig audio = config.audio_for(rec.sample_rate_hz);
    const std::string hash = feature_config_hash(audio, *provider, config.fps);
    std::optional<std::filesystem::path> path;
    if (cache_dir) path = feature_cache_path(*cache_dir, rec, hash);
    if (path && std::filesystem::exists(*path)) {
      p.features = load_feature_cache(*path, hash);
    } else {
      p.features = extract_features(rec, audio, *provider, config.fps);
      for (double& v : p.features.audio.data()) v = round_to_float(v);
      for (double& v : p.features.text.data()) v = round_to_float(v);
      if (path) save_feature_cache(*path, p.features, hash);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace s2g
