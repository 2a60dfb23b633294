#include "s2g/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "s2g/features.hpp"

namespace fs = std::filesystem;

namespace s2g {

// ---------------------------------------------------------------------------
// schema

namespace schema {

const std::vector<Tier>& tiers() {
  static const std::vector<Tier> t{Tier::Existence, Tier::Category, Tier::Semantics, Tier::Phase};
  return t;
}

std::string_view tier_name(Tier tier) {
  switch (tier) {
    case Tier::Existence: return "existence";
    case Tier::Category: return "category";
    case Tier::Semantics: return "semantics";
    case Tier::Phase: return "phase";
  }
  return "?";
}

std::optional<Tier> parse_tier(std::string_view name) {
  for (Tier t : tiers())
    if (tier_name(t) == name) return t;
  return std::nullopt;
}

const std::vector<std::string>& labels(Tier tier) {
  static const std::vector<std::string> existence{"gesture"};
  static const std::vector<std::string> category{"deictic", "beat", "iconic", "discourse"};
  static const std::vector<std::string> semantics{"amount", "shape", "direction", "size"};
  static const std::vector<std::string> phase{"preparation", "pre_stroke_hold", "stroke",
                                              "post_stroke_hold", "retraction"};
  switch (tier) {
    case Tier::Existence: return existence;
    case Tier::Category: return category;
    case Tier::Semantics: return semantics;
    case Tier::Phase: return phase;
  }
  return existence;
}

std::size_t property_offset(Tier tier) {
  switch (tier) {
    case Tier::Category: return 0;
    case Tier::Semantics: return 4;
    case Tier::Phase: return 8;
    case Tier::Existence: break;
  }
  fail(ErrorCode::InvalidArgument, "existence is not part of the property vector");
}

const std::vector<std::string>& property_labels() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v;
    for (Tier t : {Tier::Category, Tier::Semantics, Tier::Phase})
      for (const auto& l : labels(t)) v.push_back(l);
    return v;
  }();
  return all;
}

std::optional<LabelRef> find_label(std::string_view tier, std::string_view label) {
  const auto t = parse_tier(tier);
  if (!t) return std::nullopt;
  const auto& ls = labels(*t);
  for (std::size_t i = 0; i < ls.size(); ++i)
    if (ls[i] == label) return LabelRef{*t, i};
  return std::nullopt;
}

std::optional<LabelRef> find_label(std::string_view label) {
  for (Tier t : tiers()) {
    const auto& ls = labels(t);
    for (std::size_t i = 0; i < ls.size(); ++i)
      if (ls[i] == label) return LabelRef{t, i};
  }
  return std::nullopt;
}

}  // namespace schema

// ---------------------------------------------------------------------------
// validation and interchange format

namespace {

constexpr double kTimeTolerance = 1e-6;

void check_interval(std::vector<CorpusIssue>& issues, const std::string& id, const std::string& field,
                    double start, double end) {
  if (!std::isfinite(start) || !std::isfinite(end)) {
    issues.push_back({id, field, "non-finite time"});
  } else if (end < start) {
    issues.push_back({id, field, "negative-length interval"});
  } else if (end == start) {
    issues.push_back({id, field, "zero-length interval"});
  } else if (start < 0.0) {
    issues.push_back({id, field, "interval starts before 0"});
  }
}

double get_time(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) fail(ErrorCode::Parse, std::string("missing numeric field ") + key);
  return it->get<double>();
}

std::string get_string(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) fail(ErrorCode::Parse, std::string("missing string field ") + key);
  return it->get<std::string>();
}

template <class F>
void for_each_jsonl(const fs::path& path, F&& fn) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorCode::Parse, path.filename().string() + " line " + std::to_string(lineno) + ": invalid JSON");
    }
    try {
      fn(obj);
    } catch (const Error& e) {
      fail(e.code(), path.filename().string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<CorpusIssue> validate_recording(const AnnotatedRecording& rec) {
  std::vector<CorpusIssue> issues;
  const std::string& id = rec.recording_id;
  if (id.empty()) issues.push_back({id, "recording_id", "empty recording id"});
  if (!(rec.sample_rate_hz > 0.0)) issues.push_back({id, "sample_rate", "sample rate must be positive"});
  for (float s : rec.audio) {
    if (!std::isfinite(s)) {
      issues.push_back({id, "audio", "non-finite sample"});
      break;
    }
  }
  const double duration = rec.sample_rate_hz > 0.0 ? rec.duration_s() : 0.0;

  for (std::size_t i = 0; i < rec.words.size(); ++i) {
    const auto& w = rec.words[i];
    const std::string field = "words[" + std::to_string(i) + "]";
    check_interval(issues, id, field, w.start_s, w.end_s);
    if (w.end_s > duration + kTimeTolerance) issues.push_back({id, field, "word ends after audio"});
    if (i > 0 && w.start_s < rec.words[i - 1].end_s - kTimeTolerance)
      issues.push_back({id, field, "words overlap or are unsorted"});
  }
  for (std::size_t i = 0; i < rec.annotations.size(); ++i) {
    const auto& a = rec.annotations[i];
    const std::string field = "annotations[" + std::to_string(i) + "]";
    check_interval(issues, id, field, a.start_s, a.end_s);
    if (a.end_s > duration + kTimeTolerance) issues.push_back({id, field, "annotation ends after audio"});
    if (a.tier_name == "existence") {
      issues.push_back({id, field, "existence is derived from the phase tier and cannot be annotated"});
    } else if (!schema::parse_tier(a.tier_name)) {
      issues.push_back({id, field, "unknown tier '" + a.tier_name + "'"});
    } else if (!schema::find_label(a.tier_name, a.label)) {
      issues.push_back({id, field, "label '" + a.label + "' does not belong to tier '" + a.tier_name + "'"});
    }
  }
  return issues;
}

CorpusLoadResult load_corpus(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) fail(ErrorCode::Io, "missing manifest: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, "manifest.json: " + std::string(e.what()));
  }
  if (!manifest.is_object() || !manifest.contains("recordings") || !manifest["recordings"].is_array())
    fail(ErrorCode::Parse, "manifest.json: expected an object with a 'recordings' array");
  if (manifest.value("schema_version", 1) != 1)
    fail(ErrorCode::Incompatible, "manifest.json: unsupported schema_version");

  CorpusLoadResult result;
  result.fps = manifest.value("fps", 5.0);
  const double default_rate = manifest.value("sample_rate", 16000.0);

  std::set<std::string> seen;
  for (const auto& entry : manifest["recordings"]) {
    AnnotatedRecording rec;
    rec.sample_rate_hz = default_rate;
    if (entry.is_string()) {
      rec.recording_id = entry.get<std::string>();
      rec.speaker_id = rec.recording_id;
    } else if (entry.is_object() && entry.contains("id") && entry["id"].is_string()) {
      rec.recording_id = entry["id"].get<std::string>();
      rec.speaker_id = entry.value("speaker_id", rec.recording_id);
      rec.sample_rate_hz = entry.value("sample_rate", default_rate);
    } else {
      result.issues.push_back({"", "manifest", "recording entry without an id"});
      continue;
    }
    if (!seen.insert(rec.recording_id).second) {
      result.issues.push_back({rec.recording_id, "manifest", "duplicate recording id"});
      continue;
    }

    std::string field = "audio";
    try {
      rec.audio = read_f32_file(dir / (rec.recording_id + ".audio.raw"));
      field = "words";
      for_each_jsonl(dir / (rec.recording_id + ".words.jsonl"), [&](const json& o) {
        rec.words.push_back({get_string(o, "token"), get_time(o, "start_s"), get_time(o, "end_s")});
      });
      field = "annotations";
      const fs::path ann = dir / (rec.recording_id + ".annotations.jsonl");
      if (fs::exists(ann)) {
        for_each_jsonl(ann, [&](const json& o) {
          rec.annotations.push_back(
              {get_string(o, "tier_name"), get_string(o, "label"), get_time(o, "start_s"), get_time(o, "end_s")});
        });
      }
    } catch (const Error& e) {
      result.issues.push_back({rec.recording_id, field, e.what()});
      continue;
    }
    auto issues = validate_recording(rec);
    if (!issues.empty()) {
      result.issues.insert(result.issues.end(), issues.begin(), issues.end());
      continue;
    }
    result.recordings.push_back(std::move(rec));
  }
  std::sort(result.recordings.begin(), result.recordings.end(),
            [](const auto& a, const auto& b) { return a.recording_id < b.recording_id; });
  return result;
}

void save_corpus(const fs::path& dir, const std::vector<AnnotatedRecording>& recordings, double fps) {
  fs::create_directories(dir);
  const double rate = recordings.empty() ? 16000.0 : recordings.front().sample_rate_hz;
  json manifest{{"schema_version", 1}, {"fps", fps}, {"sample_rate", rate}, {"recordings", json::array()}};
  for (const auto& rec : recordings) {
    json entry{{"id", rec.recording_id}, {"speaker_id", rec.speaker_id}};
    if (rec.sample_rate_hz != rate) entry["sample_rate"] = rec.sample_rate_hz;
    manifest["recordings"].push_back(entry);

    write_f32_file(dir / (rec.recording_id + ".audio.raw"), rec.audio);
    std::string words;
    for (const auto& w : rec.words)
      words += json{{"token", w.token}, {"start_s", w.start_s}, {"end_s", w.end_s}}.dump() + "\n";
    write_text_file(dir / (rec.recording_id + ".words.jsonl"), words);
    std::string anns;
    for (const auto& a : rec.annotations)
      anns += json{{"tier_name", a.tier_name}, {"label", a.label}, {"start_s", a.start_s}, {"end_s", a.end_s}}
                  .dump() +
              "\n";
    write_text_file(dir / (rec.recording_id + ".annotations.jsonl"), anns);
  }
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// rasterization

std::vector<std::uint8_t> FrameGrid::tier_targets(std::size_t frame, Tier tier) const {
  if (tier == Tier::Existence) return {existence[frame]};
  const std::size_t off = schema::property_offset(tier);
  const std::size_t n = schema::labels(tier).size();
  return {labels.begin() + static_cast<std::ptrdiff_t>(frame * schema::kPropertyCount + off),
          labels.begin() + static_cast<std::ptrdiff_t>(frame * schema::kPropertyCount + off + n)};
}

FrameGrid rasterize(const AnnotatedRecording& rec, double fps) {
  require(fps > 0.0, ErrorCode::InvalidArgument, "fps must be positive");
  constexpr double eps = 1e-9;
  FrameGrid grid;
  grid.fps = fps;
  grid.n_frames = frames_for_duration(rec.duration_s(), fps);
  grid.labels.assign(grid.n_frames * schema::kPropertyCount, 0);
  grid.existence.assign(grid.n_frames, 0);

  for (const auto& a : rec.annotations) {
    const auto ref = schema::find_label(a.tier_name, a.label);
    if (!ref || ref->tier == Tier::Existence || !(a.end_s > a.start_s)) continue;
    const std::size_t prop = schema::property_offset(ref->tier) + ref->index;
    const double first = std::max(0.0, std::floor(a.start_s * fps + eps));
    const double last_excl = std::ceil(a.end_s * fps - eps);
    for (auto t = static_cast<std::size_t>(first);
         t < grid.n_frames && static_cast<double>(t) < last_excl; ++t)
      grid.labels[t * schema::kPropertyCount + prop] = 1;
  }
  const std::size_t phase0 = schema::property_offset(Tier::Phase);
  for (std::size_t t = 0; t < grid.n_frames; ++t)
    for (std::size_t k = 0; k < schema::labels(Tier::Phase).size(); ++k)
      grid.existence[t] |= grid.labels[t * schema::kPropertyCount + phase0 + k];
  return grid;
}

FrameGrid downsample_or(const FrameGrid& grid) {
  FrameGrid out;
  out.fps = grid.fps / 2.0;
  out.n_frames = (grid.n_frames + 1) / 2;
  out.labels.assign(out.n_frames * schema::kPropertyCount, 0);
  out.existence.assign(out.n_frames, 0);
  for (std::size_t t = 0; t < grid.n_frames; ++t) {
    const std::size_t u = t / 2;
    out.existence[u] |= grid.existence[t];
    for (std::size_t p = 0; p < schema::kPropertyCount; ++p)
      out.labels[u * schema::kPropertyCount + p] |= grid.label(t, p);
  }
  return out;
}

std::optional<PrevalenceScope> parse_scope(std::string_view s) {
  if (s == "all_frames" || s == "all") return PrevalenceScope::AllFrames;
  if (s == "gesture_frames" || s == "gesture") return PrevalenceScope::GestureFrames;
  return std::nullopt;
}

std::vector<std::pair<std::string, double>> prevalence(const std::vector<FrameGrid>& grids,
                                                       PrevalenceScope scope) {
  require(!grids.empty(), ErrorCode::InvalidArgument, "prevalence of an empty corpus");
  std::size_t denom = 0;
  std::size_t gesture = 0;
  std::vector<std::size_t> counts(schema::kPropertyCount, 0);
  for (const auto& g : grids) {
    for (std::size_t t = 0; t < g.n_frames; ++t) {
      const bool keep = scope == PrevalenceScope::AllFrames || g.existence[t];
      if (!keep) continue;
      ++denom;
      gesture += g.existence[t];
      for (std::size_t p = 0; p < schema::kPropertyCount; ++p) counts[p] += g.label(t, p);
    }
  }
  if (denom == 0) {
    if (scope == PrevalenceScope::GestureFrames) fail(ErrorCode::Data, "no positive frames");
    fail(ErrorCode::Data, "corpus has no frames");
  }
  std::vector<std::pair<std::string, double>> out;
  const auto d = static_cast<double>(denom);
  out.emplace_back("gesture", static_cast<double>(gesture) / d);
  for (std::size_t p = 0; p < schema::kPropertyCount; ++p)
    out.emplace_back(schema::property_labels()[p], static_cast<double>(counts[p]) / d);
  return out;
}

// ---------------------------------------------------------------------------
// synthetic corpora

std::map<std::string, double> reference_prevalences() {
  return {{"deictic", 0.2905},  {"beat", 0.1447},         {"iconic", 0.7203},   {"discourse", 0.1278},
          {"amount", 0.047},    {"shape", 0.131},         {"direction", 0.137}, {"size", 0.019},
          {"preparation", 0.308}, {"pre_stroke_hold", 0.006}, {"stroke", 0.409}, {"post_stroke_hold", 0.122},
          {"retraction", 0.148}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  SyntheticSpec s;
  if (j.contains("prevalences")) {
    const auto& p = j["prevalences"];
    if (p.is_string() && p.get<std::string>() == "reference") {
      s.prevalences = reference_prevalences();
    } else if (p.is_object()) {
      for (const auto& [k, v] : p.items()) s.prevalences[k] = v.get<double>();
    } else {
      fail(ErrorCode::InvalidArgument, "prevalences must be an object or \"reference\"");
    }
  }
  s.n_recordings = j.value("n_recordings", s.n_recordings);
  s.n_speakers = j.value("n_speakers", s.n_speakers);
  s.duration_s = j.value("duration_s", s.duration_s);
  s.seed = j.value("seed", s.seed);
  s.sample_rate_hz = j.value("sample_rate", s.sample_rate_hz);
  s.fps = j.value("fps", s.fps);
  s.tone_amplitude = j.value("tone_amplitude", s.tone_amplitude);
  s.noise_std = j.value("noise_std", s.noise_std);
  s.min_interval_frames = j.value("min_interval_frames", s.min_interval_frames);
  s.max_interval_frames = j.value("max_interval_frames", s.max_interval_frames);
  s.filler_word_rate = j.value("filler_word_rate", s.filler_word_rate);
  return s;
}

double planted_tone_hz(std::size_t property_index, double sample_rate_hz) {
  AudioFeatureConfig cfg;
  cfg.sample_rate_hz = sample_rate_hz;
  const auto edges = mel_band_edges_hz(cfg);
  // band 2i+1 of 26; its centre is edge 2i+2
  return edges.at(2 * property_index + 2);
}

std::string planted_keyword(std::string_view label) { return "kw_" + std::string(label); }

namespace {

const std::vector<std::string>& filler_vocabulary() {
  static const std::vector<std::string> v{"the", "and", "then", "you", "go", "left",
                                          "right", "there", "um", "so", "street", "past"};
  return v;
}

// Frame-aligned [start, end) intervals covering ~pi of n frames.
std::vector<std::pair<std::size_t, std::size_t>> plant_intervals(double pi, std::size_t n, std::size_t min_len,
                                                                 std::size_t max_len, std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (pi <= 0.0 || n == 0) return out;
  if (pi >= 1.0) {
    out.emplace_back(0, n);
    return out;
  }
  std::uniform_int_distribution<std::size_t> len_dist(min_len, max_len);
  const double mean_len = 0.5 * static_cast<double>(min_len + max_len);
  const double mean_gap = mean_len * (1.0 - pi) / pi;
  std::geometric_distribution<std::size_t> gap_dist(1.0 / (mean_gap + 1.0));
  // random phase: start inside a gap or an interval in proportion to pi
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::size_t t = 0;
  if (u01(rng) < pi) {
    const std::size_t len = len_dist(rng);
    const std::size_t cut = std::uniform_int_distribution<std::size_t>(1, len)(rng);
    out.emplace_back(0, std::min(cut, n));
    t = cut;
  }
  while (t < n) {
    t += gap_dist(rng);
    if (t >= n) break;
    const std::size_t end = std::min(n, t + len_dist(rng));
    if (!out.empty() && out.back().second == t)
      out.back().second = end;
    else
      out.emplace_back(t, end);
    t = end;
  }
  return out;
}

}  // namespace

std::vector<AnnotatedRecording> make_synthetic_corpus(const SyntheticSpec& spec) {
  require(spec.n_recordings >= 1, ErrorCode::InvalidArgument, "n_recordings must be >= 1");
  require(spec.duration_s > 0.0 && spec.fps > 0.0 && spec.sample_rate_hz > 0.0, ErrorCode::InvalidArgument,
          "duration, fps and sample rate must be positive");
  require(spec.min_interval_frames >= 1 && spec.min_interval_frames <= spec.max_interval_frames,
          ErrorCode::InvalidArgument, "invalid interval length range");
  std::vector<double> pis(schema::kPropertyCount, 0.0);
  for (const auto& [label, pi] : spec.prevalences) {
    const auto ref = schema::find_label(label);
    require(ref && ref->tier != Tier::Existence, ErrorCode::InvalidArgument,
            "cannot plant label '" + label + "'");
    require(pi >= 0.0 && pi <= 1.0, ErrorCode::InvalidArgument,
            "prevalence of '" + label + "' outside [0,1]");
    pis[schema::property_offset(ref->tier) + ref->index] = pi;
  }
  const std::size_t n_speakers = spec.n_speakers == 0 ? spec.n_recordings : spec.n_speakers;
  const std::size_t n_frames = frames_for_duration(spec.duration_s, spec.fps);
  const auto n_samples = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate_hz));
  const double samples_per_frame = spec.sample_rate_hz / spec.fps;

  std::vector<AnnotatedRecording> corpus;
  for (std::size_t r = 0; r < spec.n_recordings; ++r) {
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + r + 1);
    AnnotatedRecording rec;
    char id[32];
    std::snprintf(id, sizeof id, "rec%03zu", r);
    rec.recording_id = id;
    std::snprintf(id, sizeof id, "spk%02zu", r % n_speakers);
    rec.speaker_id = id;
    rec.sample_rate_hz = spec.sample_rate_hz;
    rec.audio.assign(n_samples, 0.0f);

    std::vector<double> audio(n_samples, 0.0);
    if (spec.noise_std > 0.0) {
      std::normal_distribution<double> noise(0.0, spec.noise_std);
      for (auto& s : audio) s = noise(rng);
    }

    std::vector<std::string> slots(n_frames);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> planted(schema::kPropertyCount);
    for (std::size_t p = 0; p < schema::kPropertyCount; ++p)
      planted[p] = plant_intervals(pis[p], n_frames, spec.min_interval_frames, spec.max_interval_frames, rng);

    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    for (std::size_t p = 0; p < schema::kPropertyCount; ++p) {
      const std::string& label = schema::property_labels()[p];
      const auto ref = *schema::find_label(label);
      const double omega = 2.0 * std::numbers::pi * planted_tone_hz(p, spec.sample_rate_hz) / spec.sample_rate_hz;
      const double phase = phase_dist(rng);
      for (const auto& [b, e] : planted[p]) {
        rec.annotations.push_back({std::string(schema::tier_name(ref.tier)), label,
                                   static_cast<double>(b) / spec.fps,
                                   std::min(rec.duration_s(), static_cast<double>(e) / spec.fps)});
        const auto s0 = static_cast<std::size_t>(std::llround(static_cast<double>(b) * samples_per_frame));
        const auto s1 = std::min(n_samples, static_cast<std::size_t>(std::llround(static_cast<double>(e) * samples_per_frame)));
        for (std::size_t s = s0; s < s1; ++s)
          audio[s] += spec.tone_amplitude * std::sin(omega * static_cast<double>(s) + phase);
        for (std::size_t t = b; t < e; ++t) {
          if (slots[t].empty()) {
            slots[t] = planted_keyword(label);
            break;
          }
        }
      }
    }
    std::sort(rec.annotations.begin(), rec.annotations.end(), [](const auto& a, const auto& b) {
      return std::tie(a.start_s, a.tier_name, a.label) < std::tie(b.start_s, b.tier_name, b.label);
    });

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> word_pick(0, filler_vocabulary().size() - 1);
    for (std::size_t t = 0; t < n_frames; ++t) {
      if (slots[t].empty() && u01(rng) < spec.filler_word_rate) slots[t] = filler_vocabulary()[word_pick(rng)];
      if (slots[t].empty()) continue;
      const double start = static_cast<double>(t) / spec.fps;
      const double end = std::min(spec.duration_s, (static_cast<double>(t) + 0.9) / spec.fps);
      if (end > start) rec.words.push_back({slots[t], start, end});
    }

    for (std::size_t s = 0; s < n_samples; ++s) rec.audio[s] = static_cast<float>(audio[s]);
    corpus.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace s2g
