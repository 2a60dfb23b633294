#include "s2g/s2g.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "s2g/config.hpp"

using namespace s2g;

struct s2g_corpus {
  std::vector<AnnotatedRecording> recordings;
  double fps = 5.0;
};

struct s2g_classifier {
  ModelParams params;
};

struct s2g_flow {
  FlowParams params;
};

namespace {

thread_local std::string g_last_error;

s2g_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return S2G_E_INVALID_ARGUMENT;
    case ErrorCode::Io: return S2G_E_IO;
    case ErrorCode::Parse: return S2G_E_PARSE;
    case ErrorCode::Data: return S2G_E_DATA;
    case ErrorCode::Incompatible: return S2G_E_INCOMPATIBLE;
    case ErrorCode::Numeric: return S2G_E_NUMERIC;
  }
  return S2G_E_INTERNAL;
}

template <class F>
s2g_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return S2G_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return S2G_E_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return S2G_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return S2G_E_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

json parse_json_arg(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidArgument, std::string(what) + ": " + e.what());
  }
}

RunConfig parse_config(const char* config_json) { return RunConfig::from_json(parse_json_arg(config_json, "config")); }

Tier parse_tier_arg(const char* tier) {
  need(tier, "tier");
  const auto t = schema::parse_tier(tier);
  if (!t) fail(ErrorCode::InvalidArgument, "unknown tier '" + std::string(tier) + "'");
  return *t;
}

std::optional<std::filesystem::path> cache_arg(const char* dir) {
  if (!dir || !*dir) return std::nullopt;
  return std::filesystem::path(dir);
}

const AnnotatedRecording& recording_at(const s2g_corpus* corpus, std::size_t index) {
  need(corpus, "corpus");
  if (index >= corpus->recordings.size())
    fail(ErrorCode::InvalidArgument, "recording index " + std::to_string(index) + " out of range");
  return corpus->recordings[index];
}

void require_nonempty(const s2g_corpus* corpus) {
  need(corpus, "corpus");
  if (corpus->recordings.empty()) fail(ErrorCode::Data, "corpus has no valid recordings");
}

}  // namespace

extern "C" {

const char* s2g_last_error(void) { return g_last_error.c_str(); }

const char* s2g_version(void) { return "0.1.0"; }

const char* s2g_status_name(s2g_status status) {
  switch (status) {
    case S2G_OK: return "ok";
    case S2G_E_INVALID_ARGUMENT: return "invalid argument";
    case S2G_E_IO: return "i/o error";
    case S2G_E_PARSE: return "parse error";
    case S2G_E_DATA: return "data error";
    case S2G_E_INCOMPATIBLE: return "incompatible";
    case S2G_E_NUMERIC: return "numerical error";
    case S2G_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void s2g_string_free(char* s) { std::free(s); }

s2g_status s2g_config_resolve(const char* config_json, char** resolved_json, char** hash) {
  return guarded([&] {
    const RunConfig c = parse_config(config_json);
    if (resolved_json) *resolved_json = dup_string(c.to_json().dump(2));
    if (hash) *hash = dup_string(c.hash());
  });
}

s2g_status s2g_file_hash(const char* path, char** hash) {
  return guarded([&] {
    need(path, "path");
    need(hash, "hash");
    *hash = dup_string(file_hash(path));
  });
}

s2g_status s2g_string_hash(const char* text, char** hash) {
  return guarded([&] {
    need(text, "text");
    need(hash, "hash");
    *hash = dup_string(hex64(fnv1a64(text)));
  });
}

// ---- corpus -----------------------------------------------------------------

s2g_status s2g_corpus_load(const char* dir, s2g_corpus** out, char** issues_json) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    CorpusLoadResult r = load_corpus(dir);
    if (issues_json) {
      json issues = json::array();
      for (const auto& i : r.issues)
        issues.push_back({{"recording_id", i.recording_id}, {"field", i.field}, {"message", i.message}});
      *issues_json = dup_string(issues.dump());
    }
    auto* c = new s2g_corpus;
    c->recordings = std::move(r.recordings);
    c->fps = r.fps;
    *out = c;
  });
}

s2g_status s2g_corpus_synthesize(const char* spec_json, s2g_corpus** out) {
  return guarded([&] {
    need(out, "out");
    const SyntheticSpec spec = synthetic_spec_from_json(parse_json_arg(spec_json, "synthetic spec"));
    auto* c = new s2g_corpus;
    c->recordings = make_synthetic_corpus(spec);
    c->fps = spec.fps;
    *out = c;
  });
}

s2g_status s2g_corpus_save(const s2g_corpus* corpus, const char* dir) {
  return guarded([&] {
    need(corpus, "corpus");
    need(dir, "dir");
    save_corpus(dir, corpus->recordings, corpus->fps);
  });
}

size_t s2g_corpus_size(const s2g_corpus* corpus) { return corpus ? corpus->recordings.size() : 0; }

s2g_status s2g_corpus_recording_id(const s2g_corpus* corpus, size_t index, char** id) {
  return guarded([&] {
    need(id, "id");
    *id = dup_string(recording_at(corpus, index).recording_id);
  });
}

s2g_status s2g_corpus_prevalence(const s2g_corpus* corpus, const char* scope, char** out_json) {
  return guarded([&] {
    need(corpus, "corpus");
    need(out_json, "out_json");
    const auto sc = parse_scope(scope ? scope : "all");
    if (!sc) fail(ErrorCode::InvalidArgument, "scope must be 'all' or 'gesture'");
    std::vector<FrameGrid> grids;
    for (const auto& r : corpus->recordings) grids.push_back(rasterize(r, corpus->fps));
    json j = json::object();
    for (const auto& [label, p] : prevalence(grids, *sc)) j[label] = p;
    *out_json = dup_string(j.dump());
  });
}

void s2g_corpus_free(s2g_corpus* corpus) { delete corpus; }

s2g_status s2g_features_build_cache(const s2g_corpus* corpus, const char* config_json, const char* cache_dir,
                                    char** out_json) {
  return guarded([&] {
    need(corpus, "corpus");
    need(cache_dir, "cache_dir");
    const RunConfig cfg = parse_config(config_json);
    const auto provider = cfg.text_provider.make();
    const auto prepared = prepare_corpus(corpus->recordings, cfg, std::filesystem::path(cache_dir));
    json out = json::array();
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      const auto& rec = corpus->recordings[i];
      const auto hash = feature_config_hash(cfg.audio_for(rec.sample_rate_hz), *provider, cfg.fps);
      const auto path = feature_cache_path(cache_dir, rec, hash);
      out.push_back({{"recording_id", rec.recording_id},
                     {"path", path.string()},
                     {"n_frames", prepared[i].features.n_frames()},
                     {"hash", file_hash(path)}});
    }
    if (out_json) *out_json = dup_string(out.dump());
  });
}

// ---- classifiers --------------------------------------------------------------

s2g_status s2g_classifier_train(const s2g_corpus* corpus, const char* tier, const char* config_json,
                                const char* cache_dir, s2g_classifier** out, char** log_jsonl) {
  return guarded([&] {
    need(out, "out");
    const Tier t = parse_tier_arg(tier);
    require_nonempty(corpus);
    const RunConfig cfg = parse_config(config_json);
    const auto prepared = prepare_corpus(corpus->recordings, cfg, cache_arg(cache_dir));
    const auto examples = build_examples(prepared, cfg.window, t, default_filter(t));
    if (examples.empty()) fail(ErrorCode::Data, "no training examples for tier " + std::string(tier));
    TrainResult r = train(examples, {}, cfg.train, cfg.model, cfg.window, t);
    if (log_jsonl) {
      std::string log = r.log_jsonl();
      for (const auto& w : r.warnings) log += json{{"warning", w}}.dump() + "\n";
      *log_jsonl = dup_string(log);
    }
    *out = new s2g_classifier{std::move(r.params)};
  });
}

s2g_status s2g_classifier_save(const s2g_classifier* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    save_params(path, model->params);
  });
}

s2g_status s2g_classifier_load(const char* path, s2g_classifier** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new s2g_classifier{load_params(path)};
  });
}

s2g_status s2g_classifier_info(const s2g_classifier* model, char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(out_json, "out_json");
    json j = model->params.identity();
    j["spec_hash"] = model->params.spec_hash();
    j["n_params"] = model->params.values.size();
    *out_json = dup_string(j.dump());
  });
}

s2g_status s2g_classifier_predict(const s2g_classifier* model, const s2g_corpus* corpus, size_t index,
                                  const char* config_json, char** out_json) {
  return guarded([&] {
    need(model, "model");
    need(out_json, "out_json");
    const AnnotatedRecording& rec = recording_at(corpus, index);
    const RunConfig cfg = parse_config(config_json);
    const auto prepared = prepare_corpus({rec}, cfg, std::nullopt);
    if (model->params.d_in != prepared[0].features.dim())
      fail(ErrorCode::Incompatible, "incompatible checkpoint: model expects " + std::to_string(model->params.d_in) +
                                        " input features, got " + std::to_string(prepared[0].features.dim()));
    const Matrix p = predict(model->params, prepared[0].features);
    json probs = json::array();
    for (std::size_t t = 0; t < p.rows(); ++t) probs.push_back(std::vector<double>(p.row(t).begin(), p.row(t).end()));
    *out_json = dup_string(json{{"labels", model->params.labels}, {"probs", probs}}.dump());
  });
}

void s2g_classifier_free(s2g_classifier* model) { delete model; }

// ---- evaluation -----------------------------------------------------------------

s2g_status s2g_cross_validate(const s2g_corpus* corpus, const char* tier, const char* config_json,
                              const char* cache_dir, char** out_report, char** folds_json) {
  return guarded([&] {
    need(out_report, "report_json");
    const Tier t = parse_tier_arg(tier);
    require_nonempty(corpus);
    const RunConfig cfg = parse_config(config_json);
    const auto prepared = prepare_corpus(corpus->recordings, cfg, cache_arg(cache_dir));
    std::vector<std::string> speakers;
    for (const auto& r : prepared) speakers.push_back(r.speaker_id);
    const FoldPlan plan = plan_folds(speakers, cfg.cv.k, cfg.cv.seed);
    const CvResult r = cross_validate(prepared, t, plan, cfg.cv_config());
    *out_report = dup_string(report_json(std::vector{r.summary}).dump(2));
    if (folds_json) {
      json f = fold_results_json(r.folds, t);
      *folds_json = dup_string(json{{"plan", plan.folds}, {"folds", f}}.dump(2));
    }
  });
}

s2g_status s2g_random_baseline(double prevalence, size_t n_frames, size_t n_trials, uint64_t seed,
                               double* f1_mean, double* f1_std, double* macro_f1_mean, double* macro_f1_std) {
  return guarded([&] {
    const BaselineStats b = random_guess_baseline(prevalence, n_frames, n_trials, seed);
    if (f1_mean) *f1_mean = b.f1_mean;
    if (f1_std) *f1_std = b.f1_std;
    if (macro_f1_mean) *macro_f1_mean = b.macro_f1_mean;
    if (macro_f1_std) *macro_f1_std = b.macro_f1_std;
  });
}

s2g_status s2g_report_render(const char* report, char** text) {
  return guarded([&] {
    need(report, "report");
    need(text, "text");
    json doc;
    try {
      doc = json::parse(report);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::Parse, std::string("report: ") + e.what());
    }
    const auto problems = validate_report(doc);
    if (!problems.empty()) fail(ErrorCode::Parse, "report does not conform: " + problems.front());
    *text = dup_string(report_text(summaries_from_json(doc)));
  });
}

// ---- flow -----------------------------------------------------------------------

namespace {

FlowTrainResult train_flow_from(const std::vector<FlowExample>& data, const RunConfig& cfg) {
  return train_flow(data, cfg.flow_train, cfg.flow);
}

void emit_flow(FlowTrainResult&& r, s2g_flow** out, char** log_jsonl) {
  if (log_jsonl) *log_jsonl = dup_string(r.log_jsonl());
  *out = new s2g_flow{std::move(r.params)};
}

}  // namespace

s2g_status s2g_flow_train(const double* poses, const double* cond, size_t n, const char* config_json,
                          s2g_flow** out, char** log_jsonl) {
  return guarded([&] {
    need(out, "out");
    need(poses, "poses");
    need(cond, "cond");
    const RunConfig cfg = parse_config(config_json);
    const std::size_t dp = cfg.flow.d_pose, dc = cfg.flow.d_cond;
    std::vector<FlowExample> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      data[i].pose.assign(poses + i * dp, poses + (i + 1) * dp);
      data[i].cond.assign(cond + i * dc, cond + (i + 1) * dc);
    }
    emit_flow(train_flow_from(data, cfg), out, log_jsonl);
  });
}

s2g_status s2g_flow_train_planted(const s2g_corpus* corpus, const char* config_json, const char* cache_dir,
                                  s2g_flow** out, char** log_jsonl) {
  return guarded([&] {
    need(out, "out");
    require_nonempty(corpus);
    const RunConfig cfg = parse_config(config_json);
    const auto prepared = prepare_corpus(corpus->recordings, cfg, cache_arg(cache_dir));
    const auto data = planted_pose_data(prepared, cfg.flow.d_pose, cfg.flow_train.seed);
    if (data.empty()) fail(ErrorCode::Data, "corpus has no gesture frames to train the flow on");
    emit_flow(train_flow_from(data, cfg), out, log_jsonl);
  });
}

s2g_status s2g_flow_save(const s2g_flow* flow, const char* path) {
  return guarded([&] {
    need(flow, "flow");
    need(path, "path");
    save_flow(path, flow->params);
  });
}

s2g_status s2g_flow_load(const char* path, s2g_flow** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new s2g_flow{load_flow(path)};
  });
}

s2g_status s2g_flow_info(const s2g_flow* flow, char** out_json) {
  return guarded([&] {
    need(flow, "flow");
    need(out_json, "out_json");
    *out_json = dup_string(json{{"spec", flow->params.spec.to_json()},
                                {"spec_hash", flow->params.spec_hash()},
                                {"n_params", flow->params.values.size()}}
                               .dump());
  });
}

s2g_status s2g_flow_sample(const s2g_flow* flow, const double* cond, size_t d_cond, size_t n, uint64_t seed,
                           double* out) {
  return guarded([&] {
    need(flow, "flow");
    need(cond, "cond");
    need(out, "out");
    const auto xs = sample(flow->params, std::span(cond, d_cond), n, seed);
    for (std::size_t i = 0; i < xs.size(); ++i) std::copy(xs[i].begin(), xs[i].end(), out + i * xs[i].size());
  });
}

s2g_status s2g_flow_log_likelihood(const s2g_flow* flow, const double* pose, size_t d_pose, const double* cond,
                                   size_t d_cond, double* out) {
  return guarded([&] {
    need(flow, "flow");
    need(pose, "pose");
    need(cond, "cond");
    need(out, "out");
    *out = log_likelihood(flow->params, std::span(pose, d_pose), std::span(cond, d_cond));
  });
}

void s2g_flow_free(s2g_flow* flow) { delete flow; }

// ---- pipeline -------------------------------------------------------------------

s2g_status s2g_pipeline_run(const s2g_corpus* corpus, size_t index, const char* config_json, char** out_frames,
                            double* gesture_frequency_out) {
  return guarded([&] {
    need(out_frames, "frames_jsonl");
    const AnnotatedRecording& rec = recording_at(corpus, index);
    const RunConfig cfg = parse_config(config_json);
    PipelineConfig pc = cfg.pipeline;
    pc.audio = cfg.audio_for(rec.sample_rate_hz);
    const PipelineModels models = load_pipeline_models(pc);
    const auto provider = cfg.text_provider.make();
    check_pipeline(models, pc, pc.audio.n_mels, provider->dim());
    const auto prepared = prepare_corpus({rec}, cfg, std::nullopt);
    const auto records = run(prepared[0].features, models, pc);
    *out_frames = dup_string(frames_jsonl(records, rec.recording_id));
    if (gesture_frequency_out) *gesture_frequency_out = gesture_frequency(records);
  });
}

}  // extern "C"
