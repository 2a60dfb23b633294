// s2g command-line tool. Every command writes its artifacts and a
// manifest.json into a run directory (default runs/<UTC timestamp>-<hash>).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "s2g/s2g.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kDataError = 1;
constexpr int kMisuse = 2;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(s2g_status s) {
  switch (s) {
    case S2G_OK: return kOk;
    case S2G_E_IO:
    case S2G_E_PARSE:
    case S2G_E_DATA:
    case S2G_E_NUMERIC: return kDataError;
    default: return kMisuse;
  }
}

void check(s2g_status s) {
  if (s != S2G_OK) throw Failure{exit_code_for(s), std::string(s2g_status_name(s)) + ": " + s2g_last_error()};
}

// Owns a string returned by the library.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { s2g_string_free(p); }
  char** out() { return &p; }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
  T** out() { return &p; }
};
using Corpus = Handle<s2g_corpus, s2g_corpus_free>;
using Classifier = Handle<s2g_classifier, s2g_classifier_free>;
using Flow = Handle<s2g_flow, s2g_flow_free>;

std::string hash_file(const fs::path& p) {
  OwnedString h;
  check(s2g_file_hash(p.string().c_str(), h.out()));
  return h.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw Failure{kDataError, "cannot write " + p.string()};
}

json read_json_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Failure{kDataError, "cannot read " + p.string()};
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw Failure{kDataError, p.string() + ": " + e.what()};
  }
}

std::string utc_stamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // section.key=value
  std::string cache_dir;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out_dir, "run directory (default runs/<timestamp>-<hash>)");
  sub->add_option("--seed", c.seed, "seed for every random stream of the command");
  sub->add_option("--set", c.overrides, "override a config value, e.g. --set train.epochs=5");
  sub->add_option("--cache-dir", c.cache_dir, "feature cache directory (default $S2G_CACHE_DIR)");
}

void set_path(json& doc, const std::string& dotted, json value) {
  json* node = &doc;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw Failure{kMisuse, "empty override key"};
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = std::move(value);
}

// Records inputs and outputs of one command and writes the manifest.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, const Common& common, json config)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {
    if (common.seed) {
      for (const char* section : {"train", "flow_train", "synth", "baseline", "pipeline", "cv"})
        config[section]["seed"] = *common.seed;
    }
    for (const auto& o : common.overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw Failure{kMisuse, "--set expects key=value, got '" + o + "'"};
      const std::string raw = o.substr(eq + 1);
      json v;
      try {
        v = json::parse(raw);
      } catch (const json::parse_error&) {
        v = raw;
      }
      set_path(config, o.substr(0, eq), v);
    }
    config_text_ = config.dump();
    OwnedString resolved, hash;
    check(s2g_config_resolve(config_text_.c_str(), resolved.out(), hash.out()));
    resolved_ = json::parse(resolved.str());
    config_hash_ = hash.str();
    seed_ = common.seed;

    if (!common.cache_dir.empty()) {
      cache_dir_ = common.cache_dir;
    } else if (const char* env = std::getenv("S2G_CACHE_DIR"); env && *env) {
      cache_dir_ = env;
    }

    std::string key = command_ + "\n" + config_hash_;
    for (const auto& a : argv_) key += "\n" + a;
    if (!common.out_dir.empty()) {
      dir_ = common.out_dir;
    } else {
      OwnedString kh;
      check(s2g_string_hash(key.c_str(), kh.out()));
      dir_ = fs::path("runs") / (utc_stamp() + "-" + kh.str().substr(0, 8));
    }
    fs::create_directories(dir_);
    write_file(dir_ / "config.json", resolved_.dump(2) + "\n");
  }

  const char* config() const { return config_text_.c_str(); }
  const json& resolved() const { return resolved_; }
  const fs::path& dir() const { return dir_; }
  const char* cache() const { return cache_dir_.empty() ? nullptr : cache_dir_.c_str(); }

  void input_file(const fs::path& p) { inputs_.push_back({{"path", p.string()}, {"hash", hash_file(p)}}); }
  void input_dir(const fs::path& d) {
    if (!fs::is_directory(d)) return;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(d))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) input_file(f);
  }
  fs::path output(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    write_file(p, text);
    outputs_.push_back({{"path", p.string()}, {"hash", hash_file(p)}});
    return p;
  }
  void output_existing(const fs::path& p) { outputs_.push_back({{"path", p.string()}, {"hash", hash_file(p)}}); }

  void finish(int exit_code) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m{{"command", command_},
           {"argv", argv_},
           {"config_hash", config_hash_},
           {"config_path", (dir_ / "config.json").string()},
           {"seed", seed_ ? json(*seed_) : json(nullptr)},
           {"seeds", seeds()},
           {"inputs", inputs_},
           {"outputs", outputs_},
           {"tool_version", s2g_version()},
           {"started_at", started_at_},
           {"wall_clock_s", wall},
           {"exit_code", exit_code}};
    if (!cache_dir_.empty()) m["cache_dir"] = cache_dir_;
    write_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  json seeds() const {
    json s = json::object();
    for (const char* section : {"train", "flow_train", "synth", "baseline", "pipeline", "cv"})
      if (resolved_.contains(section) && resolved_[section].contains("seed")) s[section] = resolved_[section]["seed"];
    return s;
  }

  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_ = utc_stamp();
  std::string config_text_;
  json resolved_;
  std::string config_hash_;
  std::optional<std::uint64_t> seed_;
  std::string cache_dir_;
  fs::path dir_;
  json inputs_ = json::array();
  json outputs_ = json::array();
};

json base_config(const Common& c) {
  if (c.config_path.empty()) return json::object();
  json j = read_json_file(c.config_path);
  if (!j.is_object()) throw Failure{kMisuse, c.config_path + ": config must be a JSON object"};
  return j;
}

void load_corpus(Run& run, const std::string& dir, Corpus& corpus, json* issues_out = nullptr) {
  OwnedString issues;
  check(s2g_corpus_load(dir.c_str(), corpus.out(), issues.out()));
  run.input_dir(dir);
  const json iss = json::parse(issues.str());
  for (const auto& i : iss)
    std::cerr << "warning: skipped " << i.value("recording_id", "?") << " (" << i.value("field", "") << "): "
              << i.value("message", "") << "\n";
  if (issues_out) *issues_out = iss;
}

const std::vector<std::string> kTiers{"existence", "category", "semantics", "phase"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2g: speech to gesture properties and conditioned poses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(s2g_version()));
  std::vector<std::string> args(argv + 1, argv + argc);

  Common common;
  std::string corpus_dir, tier, report_path_out;
  std::vector<std::string> report_paths, recording_ids;
  std::vector<double> prevalences;
  std::optional<std::size_t> k, epochs, n_frames, trials, recordings, speakers;
  std::optional<double> threshold, duration;
  std::string ckpt_existence, ckpt_category, ckpt_semantics, ckpt_phase, ckpt_flow;
  std::string corpus_out;

  auto* validate = app.add_subcommand("validate", "check a corpus directory");
  validate->add_option("corpus", corpus_dir, "corpus directory")->required();
  add_common(validate, common);

  auto* synth = app.add_subcommand("synth", "write a synthetic planted corpus");
  synth->add_option("--recordings", recordings, "number of recordings");
  synth->add_option("--speakers", speakers, "number of speakers (0: one per recording)");
  synth->add_option("--duration", duration, "seconds per recording");
  synth->add_option("--corpus-out", corpus_out, "corpus directory (default <run>/corpus)");
  add_common(synth, common);

  auto* features = app.add_subcommand("features", "build feature caches for a corpus");
  features->add_option("--corpus", corpus_dir, "corpus directory")->required();
  add_common(features, common);

  auto* train = app.add_subcommand("train", "train one tier classifier, or the pose flow");
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train->add_option("--tier", tier, "existence, category, semantics, phase or flow")
      ->required()
      ->check(CLI::IsMember({"existence", "category", "semantics", "phase", "flow"}));
  train->add_option("--epochs", epochs, "training epochs");
  add_common(train, common);

  auto* cv = app.add_subcommand("cv", "speaker-disjoint k-fold cross-validation of one tier");
  cv->add_option("--corpus", corpus_dir, "corpus directory")->required();
  cv->add_option("--tier", tier, "tier to evaluate")->required()->check(CLI::IsMember(kTiers));
  cv->add_option("--k", k, "number of folds");
  cv->add_option("--epochs", epochs, "training epochs per fold");
  add_common(cv, common);

  auto* baseline = app.add_subcommand("baseline", "prevalence-matched random-guess baseline");
  baseline->add_option("--prevalence", prevalences, "label prevalence (repeatable)")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  baseline->add_option("--frames", n_frames, "frames per trial");
  baseline->add_option("--trials", trials, "Monte Carlo trials");
  add_common(baseline, common);

  auto* report = app.add_subcommand("report", "render cross-validation reports as a table");
  report->add_option("reports", report_paths, "report.json files")->required()->check(CLI::ExistingFile);
  add_common(report, common);

  auto* generate = app.add_subcommand("generate", "run the full pipeline on corpus recordings");
  generate->add_option("--corpus", corpus_dir, "corpus directory")->required();
  generate->add_option("--recording", recording_ids, "recording id (repeatable; default all)");
  generate->add_option("--threshold", threshold, "existence threshold tau, clamped to [0,1]");
  generate->add_option("--existence", ckpt_existence, "existence checkpoint");
  generate->add_option("--category", ckpt_category, "category checkpoint");
  generate->add_option("--semantics", ckpt_semantics, "semantics checkpoint");
  generate->add_option("--phase", ckpt_phase, "phase checkpoint");
  generate->add_option("--flow", ckpt_flow, "flow checkpoint");
  add_common(generate, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return kMisuse;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  std::optional<Run> run;
  try {
    json cfg = base_config(common);
    if (epochs) {
      cfg["train"]["epochs"] = *epochs;
      cfg["flow_train"]["epochs"] = *epochs;
    }
    if (k) cfg["cv"]["k"] = *k;
    if (n_frames) cfg["baseline"]["n_frames"] = *n_frames;
    if (trials) cfg["baseline"]["trials"] = *trials;
    if (recordings) cfg["synth"]["n_recordings"] = *recordings;
    if (speakers) cfg["synth"]["n_speakers"] = *speakers;
    if (duration) cfg["synth"]["duration_s"] = *duration;
    if (threshold) cfg["pipeline"]["existence_threshold"] = *threshold;
    const std::pair<const char*, std::string*> ckpts[] = {{"existence", &ckpt_existence},
                                                          {"category", &ckpt_category},
                                                          {"semantics", &ckpt_semantics},
                                                          {"phase", &ckpt_phase},
                                                          {"flow", &ckpt_flow}};
    for (const auto& [slot, path] : ckpts)
      if (!path->empty()) cfg["pipeline"]["checkpoints"][slot] = *path;

    run.emplace(name, args, common, cfg);
    int code = kOk;

    if (name == "validate") {
      Corpus corpus;
      json issues;
      load_corpus(*run, corpus_dir, corpus, &issues);
      OwnedString all, gesture;
      json prev;
      if (s2g_corpus_size(corpus.p) > 0) {
        check(s2g_corpus_prevalence(corpus.p, "all", all.out()));
        prev["all_frames"] = json::parse(all.str());
        if (s2g_corpus_prevalence(corpus.p, "gesture", gesture.out()) == S2G_OK)
          prev["gesture_frames"] = json::parse(gesture.str());
      }
      json out{{"n_valid", s2g_corpus_size(corpus.p)}, {"issues", issues}, {"prevalence", prev}};
      run->output("validation.json", out.dump(2) + "\n");
      std::cout << s2g_corpus_size(corpus.p) << " valid recording(s), " << issues.size() << " issue(s)\n";
      if (!issues.empty()) code = kDataError;
    } else if (name == "synth") {
      Corpus corpus;
      const std::string spec = run->resolved().at("synth").dump();
      check(s2g_corpus_synthesize(spec.c_str(), corpus.out()));
      const fs::path dir = corpus_out.empty() ? run->dir() / "corpus" : fs::path(corpus_out);
      check(s2g_corpus_save(corpus.p, dir.string().c_str()));
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) run->output_existing(f);
      std::cout << "wrote " << s2g_corpus_size(corpus.p) << " recording(s) to " << dir.string() << "\n";
    } else if (name == "features") {
      Corpus corpus;
      load_corpus(*run, corpus_dir, corpus);
      const std::string cache = run->cache() ? run->cache() : (run->dir() / "cache").string();
      OwnedString listing;
      check(s2g_features_build_cache(corpus.p, run->config(), cache.c_str(), listing.out()));
      run->output("features.json", json::parse(listing.str()).dump(2) + "\n");
      std::cout << "cached features of " << s2g_corpus_size(corpus.p) << " recording(s) under " << cache << "\n";
    } else if (name == "train") {
      Corpus corpus;
      load_corpus(*run, corpus_dir, corpus);
      OwnedString log;
      if (tier == "flow") {
        Flow flow;
        check(s2g_flow_train_planted(corpus.p, run->config(), run->cache(), flow.out(), log.out()));
        const fs::path ckpt = run->dir() / "flow.ckpt";
        check(s2g_flow_save(flow.p, ckpt.string().c_str()));
        run->output_existing(ckpt);
      } else {
        Classifier model;
        check(s2g_classifier_train(corpus.p, tier.c_str(), run->config(), run->cache(), model.out(), log.out()));
        const fs::path ckpt = run->dir() / (tier + ".ckpt");
        check(s2g_classifier_save(model.p, ckpt.string().c_str()));
        run->output_existing(ckpt);
      }
      run->output("train_log.jsonl", log.str());
      std::cout << "trained " << tier << "; checkpoint in " << run->dir().string() << "\n";
    } else if (name == "cv") {
      Corpus corpus;
      load_corpus(*run, corpus_dir, corpus);
      OwnedString rep, folds, text;
      check(s2g_cross_validate(corpus.p, tier.c_str(), run->config(), run->cache(), rep.out(), folds.out()));
      run->output("report.json", rep.str() + "\n");
      run->output("folds.json", folds.str() + "\n");
      check(s2g_report_render(rep.p, text.out()));
      run->output("report.txt", text.str());
      std::cout << text.str();
    } else if (name == "baseline") {
      const json& b = run->resolved().at("baseline");
      json rows = json::array();
      for (double p : prevalences) {
        double f1m = 0, f1s = 0, mm = 0, ms = 0;
        check(s2g_random_baseline(p, b.at("n_frames").get<std::size_t>(), b.at("trials").get<std::size_t>(),
                                  b.at("seed").get<std::uint64_t>(), &f1m, &f1s, &mm, &ms));
        rows.push_back({{"prevalence", p}, {"f1_mean", f1m}, {"f1_std", f1s}, {"macro_f1_mean", mm},
                        {"macro_f1_std", ms}});
        char line[160];
        std::snprintf(line, sizeof line, "prevalence %.3f  Macro F1 %.2f +- %.2f  F1 %.3f +- %.3f\n", p, mm, ms, f1m,
                      f1s);
        std::cout << line;
      }
      run->output("baseline.json", json{{"n_frames", b.at("n_frames")}, {"trials", b.at("trials")}, {"rows", rows}}
                                       .dump(2) + "\n");
    } else if (name == "report") {
      json merged = json::array();
      for (const auto& p : report_paths) {
        run->input_file(p);
        const json doc = read_json_file(p);
        if (!doc.is_array()) throw Failure{kDataError, p + ": report must be a JSON array"};
        for (const auto& s : doc) merged.push_back(s);
      }
      OwnedString text;
      const std::string m = merged.dump();
      check(s2g_report_render(m.c_str(), text.out()));
      run->output("report.json", merged.dump(2) + "\n");
      run->output("report.txt", text.str());
      std::cout << text.str();
    } else if (name == "generate") {
      Corpus corpus;
      load_corpus(*run, corpus_dir, corpus);
      for (const auto& [slot, _] : ckpts) {
        const json& paths = run->resolved().at("pipeline").at("checkpoints");
        const std::string p = paths.value(slot, "");
        if (p.empty()) throw Failure{kMisuse, std::string("no ") + slot + " checkpoint given (--" + slot + ")"};
        if (fs::exists(p)) run->input_file(p);
      }
      std::map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < s2g_corpus_size(corpus.p); ++i) {
        OwnedString id;
        check(s2g_corpus_recording_id(corpus.p, i, id.out()));
        index[id.str()] = i;
      }
      std::vector<std::string> ids = recording_ids;
      if (ids.empty())
        for (const auto& [id, _] : index) ids.push_back(id);
      json summary = json::array();
      for (const auto& id : ids) {
        const auto it = index.find(id);
        if (it == index.end()) throw Failure{kDataError, "no recording '" + id + "' in the corpus"};
        OwnedString frames;
        double freq = 0.0;
        check(s2g_pipeline_run(corpus.p, it->second, run->config(), frames.out(), &freq));
        run->output("frames/" + id + ".jsonl", frames.str());
        summary.push_back({{"recording_id", id}, {"gesture_frequency", freq}});
        std::cout << id << ": gesture frequency " << freq << "\n";
      }
      run->output("generate_summary.json", summary.dump(2) + "\n");
    }
    run->finish(code);
    return code;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    if (run) run->finish(f.exit_code);
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run) run->finish(kMisuse);
    return kMisuse;
  }
}
