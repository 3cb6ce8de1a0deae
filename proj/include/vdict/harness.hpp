#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vdict/dataset.hpp"
#include "vdict/metric_index.hpp"
#include "vdict/pipeline.hpp"
#include "vdict/training.hpp"

namespace vdict {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline json to_json(const ModelDims& d) {
  return {{"L", d.L}, {"C", d.C}, {"D", d.D}, {"K", d.K}, {"vocab", d.vocab}, {"W", d.W}, {"ffn", d.ffn}};
}

inline ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.L = j.at("L");
  d.C = j.at("C");
  d.D = j.at("D");
  d.K = j.at("K");
  d.vocab = j.at("vocab");
  d.W = j.at("W");
  d.ffn = j.at("ffn");
  d.validate();
  return d;
}

inline json to_json(const DatasetSpec& s) {
  return {{"seed", s.seed},
          {"train_size", s.train_size},
          {"test_size", s.test_size},
          {"noise_rate", s.noise_rate},
          {"train_noise_rate", s.effective_train_noise()},
          {"smear", s.smear},
          {"out_of_lexicon_fraction", s.out_of_lexicon_fraction}};
}

inline DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  s.seed = j.at("seed");
  s.train_size = j.at("train_size");
  s.test_size = j.at("test_size");
  s.noise_rate = j.at("noise_rate");
  s.train_noise_rate = j.at("train_noise_rate").get<double>();
  s.smear = j.at("smear");
  s.out_of_lexicon_fraction = j.at("out_of_lexicon_fraction");
  s.validate();
  return s;
}

inline json to_json(const StageConfig& s) {
  json groups = json::array();
  for (ParamGroup g : kAllGroups)
    if (s.trainable.contains(g)) groups.push_back(std::string(to_string(g)));
  return {{"epochs", s.epochs},
          {"optimizer", std::string(to_string(s.optimizer))},
          {"learning_rate", s.learning_rate},
          {"lambda_recog", s.lambda_recog},
          {"lambda_sitm", s.lambda_sitm},
          {"trainable", groups}};
}

inline StageConfig stage_config_from_json(const json& j) {
  StageConfig s;
  s.epochs = j.at("epochs");
  s.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  s.learning_rate = j.at("learning_rate");
  s.lambda_recog = j.at("lambda_recog");
  s.lambda_sitm = j.at("lambda_sitm");
  for (const auto& g : j.at("trainable")) s.trainable.insert(parse_param_group(g.get<std::string>()));
  return s;
}

inline json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"resemblants", c.resemblants},
          {"tau", c.tau},
          {"seed", c.seed},
          {"init_seed", c.init_seed},
          {"stage1_clean_renders", c.stage1_clean_renders},
          {"stage1", to_json(c.stage1)},
          {"stage2", to_json(c.stage2)}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size");
  c.resemblants = j.at("resemblants");
  c.tau = j.at("tau");
  c.seed = j.at("seed");
  c.init_seed = j.at("init_seed");
  c.stage1_clean_renders = j.at("stage1_clean_renders");
  c.stage1 = stage_config_from_json(j.at("stage1"));
  c.stage2 = stage_config_from_json(j.at("stage2"));
  c.validate();
  return c;
}

/// Everything needed to reproduce a reported number.
struct RunManifest {
  json body = json::object();

  std::uint64_t digest() const { return fnv1a(body.dump()); }
  std::string digest_hex() const { return hex64(digest()); }
};

struct RunInputs {
  std::uint64_t lexicon_digest = 0;
  std::size_t lexicon_size = 0;
  int table_version = 0;
  std::uint64_t dataset_digest = 0;
  std::uint64_t model_digest = 0;
  ModelDims dims;
};

inline RunManifest make_manifest(const RunInputs& in, const DatasetSpec& data, const TrainConfig& train,
                                 std::size_t top_n, double tau, json extra = json::object()) {
  RunManifest m;
  m.body = {{"format", "vdict-run-manifest/1"},
            {"lexicon", {{"size", in.lexicon_size}, {"digest", hex64(in.lexicon_digest)}}},
            {"confusion_table_version", in.table_version},
            {"dataset", {{"spec", to_json(data)}, {"digest", hex64(in.dataset_digest)}}},
            {"model", {{"dims", to_json(in.dims)}, {"digest", hex64(in.model_digest)}}},
            {"train", to_json(train)},
            {"eval", {{"top_n", top_n}, {"tau", tau}}}};
  if (!extra.empty()) m.body["extra"] = std::move(extra);
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ErrorRecord {
  std::size_t index = 0;
  std::string label, y_hat, y_star;

  friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

struct ModeResult {
  InferenceMode mode = InferenceMode::kBaseline;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::vector<ErrorRecord> errors;

  friend bool operator==(const ModeResult&, const ModeResult&) = default;
};

/// How out-of-lexicon test words that the recognizer read correctly fare
/// after correction.
struct OutOfLexiconStats {
  std::size_t count = 0;
  std::size_t recognized = 0;
  std::size_t kept_by_proposed = 0;
  std::size_t kept_by_ordinary = 0;

  double proposed_rate() const { return recognized ? static_cast<double>(kept_by_proposed) / recognized : 0.0; }
  double ordinary_rate() const { return recognized ? static_cast<double>(kept_by_ordinary) / recognized : 0.0; }

  friend bool operator==(const OutOfLexiconStats&, const OutOfLexiconStats&) = default;
};

struct EvalReport {
  std::string manifest_digest;
  json manifest;
  std::size_t test_size = 0;
  std::size_t top_n = 0;
  double tau = 0.0;
  std::vector<ModeResult> modes;  // baseline, ordinary, proposed
  OutOfLexiconStats out_of_lexicon;
  std::string model_digest, index_digest, test_digest;
  json timings_ms = json::object();

  const ModeResult& mode(InferenceMode m) const {
    for (const auto& r : modes)
      if (r.mode == m) return r;
    throw Error(ErrorCode::kInvalidArgument, "report has no mode " + std::string(to_string(m)));
  }
  double accuracy(InferenceMode m) const { return mode(m).accuracy; }
};

/// Per-sample state shared by every mode and by the candidate ablation:
/// one recognition, one image embedding, one top-N query at the largest N.
struct SampleTrace {
  std::string label;
  std::string y_hat;
  std::vector<RankedCandidate> ranked;
  Vector image_emb;
};

inline std::vector<SampleTrace> trace_samples(const ModelParams& p, const MetricIndex& index,
                                              const std::vector<LabeledSample>& test, std::size_t max_n,
                                              bool with_embeddings) {
  std::vector<SampleTrace> out;
  out.reserve(test.size());
  for (const auto& s : test) {
    SampleTrace t;
    t.label = s.label;
    t.y_hat = recognize(p, s.image).y_hat;
    t.ranked = index.top_n(t.y_hat, max_n);
    if (with_embeddings) t.image_emb = image_embedding(p, s.image);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::uint64_t test_set_digest(const std::vector<LabeledSample>& test) {
  Fnv1a h;
  for (const auto& s : test) {
    h.update(s.label);
    h.update(s.image.cells.data(), static_cast<std::size_t>(s.image.cells.size()) * sizeof(double));
  }
  return h.value();
}

inline std::uint64_t index_digest(const MetricIndex& index) {
  const auto bytes = index.serialize();
  Fnv1a h;
  h.update(bytes.data(), bytes.size());
  return h.value();
}

/// Runs baseline, ordinary and proposed inference on the same samples.
inline EvalReport evaluate(const ModelParams& p, const MetricIndex& index, const std::vector<LabeledSample>& test,
                           std::size_t n, double tau, const RunManifest& manifest = {}) {
  using clock = std::chrono::steady_clock;
  if (test.empty()) throw Error(ErrorCode::kInvalidArgument, "empty test set");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "candidate count must be >= 1");
  const auto t0 = clock::now();
  EvalReport r;
  r.manifest = manifest.body;
  r.manifest_digest = manifest.digest_hex();
  r.test_size = test.size();
  r.top_n = n;
  r.tau = tau;
  r.model_digest = hex64(p.digest());
  r.index_digest = hex64(index_digest(index));
  r.test_digest = hex64(test_set_digest(test));

  const auto traces = trace_samples(p, index, test, n, true);
  const auto t1 = clock::now();
  TextEmbeddingCache cache(p);
  cache.warm(index.words());
  const auto t2 = clock::now();
  const std::unordered_set<std::string> lexicon(index.words().begin(), index.words().end());

  for (auto m : {InferenceMode::kBaseline, InferenceMode::kOrdinary, InferenceMode::kProposed})
    r.modes.push_back({m, 0.0, 0, {}});
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const SampleTrace& t = traces[i];
    const CandidateSet set = candidate_set_from_ranked(t.ranked, t.y_hat, n);
    const std::string outputs[3] = {t.y_hat, t.ranked.front().word,
                                    set.entries[score_candidates(t.image_emb, set, cache, tau).second]};
    for (int k = 0; k < 3; ++k) {
      ModeResult& mr = r.modes[static_cast<std::size_t>(k)];
      if (outputs[k] == t.label)
        ++mr.correct;
      else
        mr.errors.push_back({i, t.label, t.y_hat, outputs[k]});
    }
    if (!lexicon.contains(t.label)) {
      ++r.out_of_lexicon.count;
      if (t.y_hat == t.label) {
        ++r.out_of_lexicon.recognized;
        r.out_of_lexicon.kept_by_ordinary += outputs[1] == t.label;
        r.out_of_lexicon.kept_by_proposed += outputs[2] == t.label;
      }
    }
  }
  for (auto& mr : r.modes) mr.accuracy = static_cast<double>(mr.correct) / static_cast<double>(test.size());
  const auto t3 = clock::now();
  auto ms = [](auto a, auto b) { return std::chrono::duration<double, std::milli>(b - a).count(); };
  r.timings_ms = {{"recognition_and_retrieval", ms(t0, t1)}, {"lexicon_encoding", ms(t1, t2)},
                  {"scoring", ms(t2, t3)}, {"total", ms(t0, t3)}};
  return r;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct AblationGrid {
  std::string axis;  // "candidates" or "resemblants"
  std::vector<std::size_t> values;
  std::vector<double> accuracy;
  double baseline_accuracy = 0.0;
  double ordinary_accuracy = 0.0;
  std::string manifest_digest;

  double at(std::size_t value) const {
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] == value) return accuracy[i];
    throw Error(ErrorCode::kInvalidArgument, "grid has no value " + std::to_string(value));
  }
};

inline void check_increasing(const std::vector<std::size_t>& values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "ablation needs at least one value");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] <= values[i - 1]) throw Error(ErrorCode::kInvalidArgument, "ablation values must increase");
}

inline const std::vector<std::size_t>& default_candidate_values() {
  static const std::vector<std::size_t> v = {1, 5, 10, 20, 30, 80, 150, 300};
  return v;
}

inline const std::vector<std::size_t>& default_resemblant_values() {
  static const std::vector<std::size_t> v = {0, 3, 7, 15, 31};
  return v;
}

/// Proposed-mode accuracy per candidate count. One top-max(N) query per
/// sample; smaller N use its prefix, which equals their own top-N answer.
inline AblationGrid ablate_candidates(const ModelParams& p, const MetricIndex& index,
                                      const std::vector<LabeledSample>& test, std::vector<std::size_t> values,
                                      double tau, const RunManifest& manifest = {}) {
  if (test.empty()) throw Error(ErrorCode::kInvalidArgument, "empty test set");
  check_increasing(values);
  if (values.front() == 0) throw Error(ErrorCode::kInvalidArgument, "candidate count must be >= 1");
  AblationGrid g;
  g.axis = "candidates";
  g.values = values;
  g.manifest_digest = manifest.digest_hex();
  const auto traces = trace_samples(p, index, test, values.back(), true);
  TextEmbeddingCache cache(p);
  cache.warm(index.words());
  std::size_t base = 0, ord = 0;
  for (const auto& t : traces) {
    base += t.y_hat == t.label;
    ord += t.ranked.front().word == t.label;
  }
  g.baseline_accuracy = static_cast<double>(base) / static_cast<double>(test.size());
  g.ordinary_accuracy = static_cast<double>(ord) / static_cast<double>(test.size());
  for (std::size_t n : values) {
    std::size_t ok = 0;
    for (const auto& t : traces) {
      const CandidateSet set = candidate_set_from_ranked(t.ranked, t.y_hat, n);
      ok += set.entries[score_candidates(t.image_emb, set, cache, tau).second] == t.label;
    }
    g.accuracy.push_back(static_cast<double>(ok) / static_cast<double>(test.size()));
  }
  return g;
}

/// Retrains stage 2 from the same stage-1 parameters for every resemblant
/// count and reports proposed-mode accuracy at top-n.
inline AblationGrid ablate_resemblants(const ModelParams& stage1_params, TrainConfig cfg,
                                       const std::vector<LabeledSample>& train, const MetricIndex& index,
                                       const std::vector<LabeledSample>& test, std::vector<std::size_t> values,
                                       std::size_t n, const RunManifest& manifest = {},
                                       std::vector<ModelParams>* trained = nullptr,
                                       const EpochCallback& on_epoch = {}) {
  check_increasing(values);
  AblationGrid g;
  g.axis = "resemblants";
  g.values = values;
  g.manifest_digest = manifest.digest_hex();
  for (std::size_t v : values) {
    ModelParams p = stage1_params;
    cfg.resemblants = v;
    train_stage2(p, cfg, train, on_epoch);
    const EvalReport r = evaluate(p, index, test, n, cfg.tau);
    g.accuracy.push_back(r.accuracy(InferenceMode::kProposed));
    g.baseline_accuracy = r.accuracy(InferenceMode::kBaseline);
    g.ordinary_accuracy = r.accuracy(InferenceMode::kOrdinary);
    if (trained) trained->push_back(std::move(p));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Report emission and parsing
// ---------------------------------------------------------------------------

inline json to_json(const EvalReport& r, bool with_timings = true) {
  json modes = json::object();
  for (const auto& m : r.modes) {
    json errors = json::array();
    for (const auto& e : m.errors)
      errors.push_back({{"index", e.index}, {"label", e.label}, {"y_hat", e.y_hat}, {"y_star", e.y_star}});
    modes[std::string(to_string(m.mode))] = {
        {"accuracy", m.accuracy}, {"correct", m.correct}, {"errors", std::move(errors)}};
  }
  json j = {{"format", "vdict-eval-report/1"},
            {"manifest_digest", r.manifest_digest},
            {"manifest", r.manifest},
            {"test_size", r.test_size},
            {"top_n", r.top_n},
            {"tau", r.tau},
            {"inputs", {{"model", r.model_digest}, {"index", r.index_digest}, {"test_set", r.test_digest}}},
            {"modes", std::move(modes)},
            {"out_of_lexicon",
             {{"count", r.out_of_lexicon.count},
              {"recognized", r.out_of_lexicon.recognized},
              {"kept_by_proposed", r.out_of_lexicon.kept_by_proposed},
              {"kept_by_ordinary", r.out_of_lexicon.kept_by_ordinary}}}};
  if (with_timings) j["timings_ms"] = r.timings_ms;
  return j;
}

inline json to_json(const AblationGrid& g) {
  return {{"format", "vdict-ablation/1"},
          {"axis", g.axis},
          {"values", g.values},
          {"accuracy", g.accuracy},
          {"baseline_accuracy", g.baseline_accuracy},
          {"ordinary_accuracy", g.ordinary_accuracy},
          {"manifest_digest", g.manifest_digest}};
}

inline void check_unit(double v, const std::string& what) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::kCorruptFile, what + " outside [0,1]");
}

/// Parses and validates a JSON report. Accuracies must lie in [0,1] and each
/// mode's correct count plus its error count must equal the test size.
inline EvalReport parse_report(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("report is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "vdict-eval-report/1") throw Error(ErrorCode::kVersionMismatch, "unknown report format");
    EvalReport r;
    r.manifest_digest = j.at("manifest_digest");
    r.manifest = j.at("manifest");
    r.test_size = j.at("test_size");
    r.top_n = j.at("top_n");
    r.tau = j.at("tau");
    r.model_digest = j.at("inputs").at("model");
    r.index_digest = j.at("inputs").at("index");
    r.test_digest = j.at("inputs").at("test_set");
    for (auto m : {InferenceMode::kBaseline, InferenceMode::kOrdinary, InferenceMode::kProposed}) {
      const json& jm = j.at("modes").at(std::string(to_string(m)));
      ModeResult mr;
      mr.mode = m;
      mr.accuracy = jm.at("accuracy");
      mr.correct = jm.at("correct");
      for (const auto& e : jm.at("errors"))
        mr.errors.push_back({e.at("index"), e.at("label"), e.at("y_hat"), e.at("y_star")});
      check_unit(mr.accuracy, std::string(to_string(m)) + " accuracy");
      if (mr.correct + mr.errors.size() != r.test_size)
        throw Error(ErrorCode::kCorruptFile, "mode counts do not sum to the test size");
      r.modes.push_back(std::move(mr));
    }
    const json& o = j.at("out_of_lexicon");
    r.out_of_lexicon = {o.at("count"), o.at("recognized"), o.at("kept_by_proposed"), o.at("kept_by_ordinary")};
    if (j.contains("timings_ms")) r.timings_ms = j.at("timings_ms");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("malformed report: ") + e.what());
  }
}

inline std::string format_table(const EvalReport& r) {
  std::ostringstream out;
  out << "manifest " << r.manifest_digest << "  test_size " << r.test_size << "  top_n " << r.top_n << "  tau "
      << r.tau << "\n";
  out << std::left << std::setw(10) << "mode" << std::right << std::setw(10) << "accuracy" << std::setw(10)
      << "correct" << std::setw(10) << "errors" << "\n";
  for (const auto& m : r.modes)
    out << std::left << std::setw(10) << to_string(m.mode) << std::right << std::setw(10) << std::fixed
        << std::setprecision(4) << m.accuracy << std::setw(10) << m.correct << std::setw(10) << m.errors.size()
        << "\n";
  out << "out-of-lexicon: " << r.out_of_lexicon.count << " labels, " << r.out_of_lexicon.recognized
      << " read correctly, kept by proposed " << r.out_of_lexicon.kept_by_proposed << ", kept by ordinary "
      << r.out_of_lexicon.kept_by_ordinary << "\n";
  return out.str();
}

inline std::string format_table(const AblationGrid& g) {
  std::ostringstream out;
  out << std::left << std::setw(14) << g.axis << std::right << std::setw(10) << "accuracy" << "\n";
  for (std::size_t i = 0; i < g.values.size(); ++i)
    out << std::left << std::setw(14) << g.values[i] << std::right << std::setw(10) << std::fixed
        << std::setprecision(4) << g.accuracy[i] << "\n";
  out << "baseline " << std::fixed << std::setprecision(4) << g.baseline_accuracy << "  ordinary "
      << g.ordinary_accuracy << "\n";
  return out.str();
}

enum class ReportFormat { kJson, kTable };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "table") return ReportFormat::kTable;
  throw Error(ErrorCode::kInvalidArgument, "report format must be json or table");
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void emit_report(const EvalReport& r, const std::string& path, ReportFormat format) {
  write_text(path, format == ReportFormat::kJson ? to_json(r).dump(2) + "\n" : format_table(r));
}

inline void emit_report(const AblationGrid& g, const std::string& path, ReportFormat format) {
  write_text(path, format == ReportFormat::kJson ? to_json(g).dump(2) + "\n" : format_table(g));
}

}  // namespace vdict
