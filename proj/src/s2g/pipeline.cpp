#include "s2g/pipeline.hpp"

#include <algorithm>

namespace s2g {

json PipelineConfig::to_json() const {
  return {{"existence_threshold", existence_threshold},
          {"property_threshold", property_threshold},
          {"soft_properties", soft_properties},
          {"seed", seed},
          {"fps", fps},
          {"window", window.to_json()},
          {"audio", audio.to_json()},
          {"checkpoints",
           {{"existence", existence_checkpoint.string()},
            {"category", category_checkpoint.string()},
            {"semantics", semantics_checkpoint.string()},
            {"phase", phase_checkpoint.string()},
            {"flow", flow_checkpoint.string()}}}};
}

PipelineConfig PipelineConfig::from_json(const json& j, double sample_rate_hz) {
  PipelineConfig c;
  c.audio.sample_rate_hz = sample_rate_hz;
  c.existence_threshold = j.value("existence_threshold", c.existence_threshold);
  c.property_threshold = j.value("property_threshold", c.property_threshold);
  c.soft_properties = j.value("soft_properties", c.soft_properties);
  c.seed = j.value("seed", c.seed);
  c.fps = j.value("fps", c.fps);
  if (j.contains("window")) c.window = WindowSpec::from_json(j.at("window"));
  if (j.contains("audio")) c.audio = AudioFeatureConfig::from_json(j.at("audio"), sample_rate_hz);
  if (j.contains("checkpoints")) {
    const json& k = j.at("checkpoints");
    c.existence_checkpoint = k.value("existence", "");
    c.category_checkpoint = k.value("category", "");
    c.semantics_checkpoint = k.value("semantics", "");
    c.phase_checkpoint = k.value("phase", "");
    c.flow_checkpoint = k.value("flow", "");
  }
  return c;
}

PipelineModels load_pipeline_models(const PipelineConfig& config) {
  auto need = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) fail(ErrorCode::InvalidArgument, std::string("no ") + what + " checkpoint configured");
    return p;
  };
  PipelineModels m;
  m.existence = load_params(need(config.existence_checkpoint, "existence"));
  m.category = load_params(need(config.category_checkpoint, "category"));
  m.semantics = load_params(need(config.semantics_checkpoint, "semantics"));
  m.phase = load_params(need(config.phase_checkpoint, "phase"));
  m.flow = load_flow(need(config.flow_checkpoint, "flow"));
  return m;
}

void check_pipeline(const PipelineModels& models, const PipelineConfig& config, std::size_t d_audio,
                    std::size_t d_text) {
  const std::pair<const ModelParams*, Tier> slots[] = {{&models.existence, Tier::Existence},
                                                       {&models.category, Tier::Category},
                                                       {&models.semantics, Tier::Semantics},
                                                       {&models.phase, Tier::Phase}};
  for (const auto& [m, tier] : slots) {
    const std::string slot(schema::tier_name(tier));
    if (m->tier != tier)
      fail(ErrorCode::Incompatible, "incompatible checkpoint: " + slot + " slot holds a " +
                                        std::string(schema::tier_name(m->tier)) + " model");
    if (!(m->window == config.window))
      fail(ErrorCode::Incompatible, "incompatible checkpoint: " + slot + " model window differs from the config");
    if (m->d_in != d_audio + d_text)
      fail(ErrorCode::Incompatible, "incompatible checkpoint: " + slot + " model expects " + std::to_string(m->d_in) +
                                        " input features, got " + std::to_string(d_audio + d_text));
  }
  if (models.flow.spec.d_cond != d_audio + d_text + schema::kPropertyCount)
    fail(ErrorCode::Incompatible, "incompatible checkpoint: flow expects conditioning of " +
                                      std::to_string(models.flow.spec.d_cond) + " dims, got " +
                                      std::to_string(d_audio + d_text + schema::kPropertyCount));
}

namespace {

// Independent, reproducible stream per frame.
std::uint64_t frame_seed(std::uint64_t seed, std::size_t frame) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(frame) + 1));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<FrameRecord> run(const FrameFeatures& features, const PipelineModels& models,
                             const PipelineConfig& config) {
  check_pipeline(models, config, features.audio.cols(), features.text.cols());
  const double tau = std::clamp(config.existence_threshold, 0.0, 1.0);
  const double prop_tau = std::clamp(config.property_threshold, 0.0, 1.0);

  std::vector<FrameRecord> out;
  out.reserve(features.n_frames());
  for (std::size_t t = 0; t < features.n_frames(); ++t) {
    FrameRecord r;
    r.frame = t;
    r.time_s = static_cast<double>(t) / features.fps;
    const Matrix w = window_at(features, t, config.window);
    r.existence_prob = forward(models.existence, w).at(0);
    r.gesturing = r.existence_prob >= tau;
    if (r.gesturing) {
      for (const ModelParams* m : {&models.category, &models.semantics, &models.phase}) {
        const auto p = forward(*m, w);
        r.property_probs.insert(r.property_probs.end(), p.begin(), p.end());
      }
      std::vector<double> slice(schema::kPropertyCount);
      for (std::size_t i = 0; i < schema::kPropertyCount; ++i) {
        r.property_bits.push_back(r.property_probs[i] >= prop_tau ? 1 : 0);
        slice[i] = config.soft_properties ? r.property_probs[i] : r.property_bits[i];
      }
      const auto c = make_conditioning(features.audio.row(t), features.text.row(t), slice);
      r.pose = sample(models.flow, c, 1, frame_seed(config.seed, t)).front();
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<FrameRecord> run(const AnnotatedRecording& recording, const PipelineModels& models,
                             const PipelineConfig& config, const TextEmbeddingProvider& provider) {
  check_pipeline(models, config, config.audio.n_mels, provider.dim());
  return run(extract_features(recording, config.audio, provider, config.fps), models, config);
}

double gesture_frequency(const std::vector<FrameRecord>& records) {
  if (records.empty()) fail(ErrorCode::InvalidArgument, "gesture frequency of an empty run");
  const auto n = std::count_if(records.begin(), records.end(), [](const FrameRecord& r) { return r.gesturing; });
  return static_cast<double>(n) / static_cast<double>(records.size());
}

json FrameRecord::to_json() const {
  json j{{"frame", frame},
         {"time_s", time_s},
         {"existence_prob", existence_prob},
         {"gesturing", gesturing}};
  if (gesturing) {
    j["property_probs"] = property_probs;
    j["property_bits"] = property_bits;
  }
  if (pose) j["pose"] = *pose;
  return j;
}

std::string frames_jsonl(const std::vector<FrameRecord>& records, const std::string& recording_id) {
  std::string out;
  for (const auto& r : records) {
    json j{{"schema", kFramesSchema}, {"recording_id", recording_id}};
    j.update(r.to_json());
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace s2g
