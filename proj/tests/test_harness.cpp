#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "vdict/experiment.hpp"
#include "vdict/harness.hpp"
#include "test_util.hpp"

namespace vdict {
namespace {

using testing::expect_error;
using testing::temp_path;

/// Hand-built recognizer that reads clean renders exactly: channels 0..36
/// carry the glyph, channels 37..61 the cell position, and query j attends
/// only to cell j.
ModelParams perfect_reader() {
  ModelDims d;
  d.C = kNumClasses + kGlyphCells;
  d.D = 8;
  d.ffn = 8;
  ModelParams p = ModelParams::init(d, 1);
  p.glyph_embed.setZero();
  p.image_pos_embed.setZero();
  p.recog_attention.query.setZero();
  for (int k = 0; k < kNumClasses; ++k) p.glyph_embed(k, k) = 1.0;
  for (int i = 0; i < kGlyphCells; ++i) {
    p.image_pos_embed(i, kNumClasses + i) = 1.0;
    p.recog_attention.query(i, kNumClasses + i) = 40.0 * std::sqrt(static_cast<double>(d.C));
  }
  p.recog_attention.key = Matrix::Identity(d.C, d.C);
  p.recog_attention.value = Matrix::Identity(d.C, d.C);
  p.recog_head_w.setZero();
  p.recog_head_b.setZero();
  for (int k = 0; k < kNumClasses; ++k) p.recog_head_w(k, k) = 30.0;
  p.match_attention = p.recog_attention;
  return p;
}

struct SmallWorld {
  Lexicon lexicon;
  Dataset data;
  MetricIndex index;
};

SmallWorld small_world(double ool_fraction, double noise = 0.0) {
  Lexicon lex = generate_random_lexicon(150, 12);
  DatasetSpec spec;
  spec.seed = 3;
  spec.train_size = 64;
  spec.test_size = 40;
  spec.noise_rate = noise;
  spec.train_noise_rate = 0.5;
  spec.smear = noise > 0 ? 0.4 : 0.0;
  spec.out_of_lexicon_fraction = ool_fraction;
  Dataset data = generate_dataset(spec, lex);
  MetricIndex index(lex);
  return {std::move(lex), std::move(data), std::move(index)};
}

TEST(PerfectReader, ReadsCleanRenders) {
  const ModelParams p = perfect_reader();
  for (const char* w : {"a", "hello", "z9z9", "abcdefghijklmnopqrstuvwxy"}) EXPECT_EQ(recognize(p, render(w)).y_hat, w);
}

TEST(Evaluate, PerfectReadingOnlyScoresOneWhenEveryLabelIsInTheLexicon) {
  const ModelParams p = perfect_reader();
  const SmallWorld in = small_world(0.0);
  const EvalReport all_in = evaluate(p, in.index, in.data.test, 5, 0.07);
  EXPECT_EQ(all_in.accuracy(InferenceMode::kBaseline), 1.0);
  EXPECT_EQ(all_in.accuracy(InferenceMode::kOrdinary), 1.0);

  const SmallWorld mixed = small_world(0.25);
  const EvalReport r = evaluate(p, mixed.index, mixed.data.test, 5, 0.07);
  EXPECT_EQ(r.accuracy(InferenceMode::kBaseline), 1.0);
  EXPECT_DOUBLE_EQ(r.accuracy(InferenceMode::kOrdinary), 0.75);
  EXPECT_EQ(r.out_of_lexicon.count, 10u);
  EXPECT_EQ(r.out_of_lexicon.recognized, 10u);
  EXPECT_EQ(r.out_of_lexicon.kept_by_ordinary, 0u);
  EXPECT_EQ(r.out_of_lexicon.ordinary_rate(), 0.0);
  for (const auto& e : r.mode(InferenceMode::kOrdinary).errors) {
    EXPECT_FALSE(mixed.lexicon.contains(e.label));
    EXPECT_EQ(e.y_hat, e.label);
    EXPECT_TRUE(mixed.lexicon.contains(e.y_star));
  }
}

TEST(Evaluate, CountsAndDigestsAreConsistent) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2, 0.3);
  const EvalReport r = evaluate(p, w.index, w.data.test, 5, 0.07);
  ASSERT_EQ(r.modes.size(), 3u);
  for (const auto& m : r.modes) {
    EXPECT_EQ(m.correct + m.errors.size(), w.data.test.size());
    EXPECT_GE(m.accuracy, 0.0);
    EXPECT_LE(m.accuracy, 1.0);
  }
  EXPECT_EQ(r.model_digest, hex64(p.digest()));
  EXPECT_EQ(r.index_digest, hex64(index_digest(w.index)));
  EXPECT_EQ(r.test_digest, hex64(test_set_digest(w.data.test)));

  // Every mode agrees with one-shot inference on each sample.
  TextEmbeddingCache cache(p);
  for (std::size_t i = 0; i < w.data.test.size(); ++i) {
    const auto& s = w.data.test[i];
    for (const auto& m : r.modes) {
      const bool wrong = std::any_of(m.errors.begin(), m.errors.end(), [&](const auto& e) { return e.index == i; });
      EXPECT_EQ(!wrong, infer(p, w.index, s.image, 5, 0.07, m.mode, &cache).final_prediction == s.label);
    }
  }
}

TEST(Evaluate, RejectsEmptyInputs) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2);
  expect_error(ErrorCode::kInvalidArgument, [&] { evaluate(p, w.index, {}, 5, 0.07); });
  expect_error(ErrorCode::kInvalidArgument, [&] { evaluate(p, w.index, w.data.test, 0, 0.07); });
}

TEST(Evaluate, EqualManifestsGiveEqualReports) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2, 0.3);
  RunInputs in;
  in.lexicon_digest = w.lexicon.digest();
  in.lexicon_size = w.lexicon.size();
  in.dataset_digest = w.data.digest();
  in.model_digest = p.digest();
  in.dims = p.dims;
  const RunManifest m = make_manifest(in, w.data.spec, TrainConfig{}, 5, 0.07);
  const EvalReport a = evaluate(p, w.index, w.data.test, 5, 0.07, m);
  const EvalReport b = evaluate(p, w.index, w.data.test, 5, 0.07, m);
  EXPECT_EQ(to_json(a, false).dump(), to_json(b, false).dump());
  EXPECT_EQ(a.manifest_digest, m.digest_hex());

  TrainConfig other;
  other.seed = 12;
  EXPECT_NE(make_manifest(in, w.data.spec, other, 5, 0.07).digest(), m.digest());
}

TEST(Report, WriteParseWriteIsIdempotent) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2, 0.3);
  const EvalReport r = evaluate(p, w.index, w.data.test, 5, 0.07);
  const auto path = temp_path("report.json");
  emit_report(r, path.string(), ReportFormat::kJson);
  const std::string first = read_text(path.string());
  const EvalReport parsed = parse_report(first);
  EXPECT_EQ(parsed.modes, r.modes);
  EXPECT_EQ(parsed.out_of_lexicon, r.out_of_lexicon);
  emit_report(parsed, path.string(), ReportFormat::kJson);
  EXPECT_EQ(read_text(path.string()), first);

  emit_report(r, path.string(), ReportFormat::kTable);
  EXPECT_NE(read_text(path.string()).find("proposed"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Report, ParseValidatesContent) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2, 0.3);
  const json good = to_json(evaluate(p, w.index, w.data.test, 5, 0.07));

  json bad_acc = good;
  bad_acc["modes"]["ordinary"]["accuracy"] = 1.5;
  expect_error(ErrorCode::kCorruptFile, [&] { parse_report(bad_acc.dump()); });

  json bad_count = good;
  bad_count["modes"]["baseline"]["correct"] = 0;
  expect_error(ErrorCode::kCorruptFile, [&] { parse_report(bad_count.dump()); });

  json bad_format = good;
  bad_format["format"] = "vdict-eval-report/99";
  expect_error(ErrorCode::kVersionMismatch, [&] { parse_report(bad_format.dump()); });

  json missing = good;
  missing.erase("modes");
  expect_error(ErrorCode::kCorruptFile, [&] { parse_report(missing.dump()); });
  expect_error(ErrorCode::kCorruptFile, [] { parse_report("{ not json"); });
}

TEST(Report, MissingDirectoryIsAnIoError) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2);
  const EvalReport r = evaluate(p, w.index, w.data.test, 5, 0.07);
  expect_error(ErrorCode::kIoError, [&] { emit_report(r, "/nonexistent/dir/report.json", ReportFormat::kJson); });
  expect_error(ErrorCode::kIoError, [] { read_text("/nonexistent/dir/report.json"); });
  expect_error(ErrorCode::kInvalidArgument, [] { parse_report_format("xml"); });
}

TEST(AblateCandidates, CoversValuesAndMatchesEvaluate) {
  ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2, 0.4);
  const std::vector<std::size_t> values = {1, 3, 5, 40};
  const AblationGrid g = ablate_candidates(p, w.index, w.data.test, values, 0.07);
  EXPECT_EQ(g.axis, "candidates");
  EXPECT_EQ(g.values, values);
  ASSERT_EQ(g.accuracy.size(), values.size());
  for (std::size_t n : values)
    EXPECT_DOUBLE_EQ(g.at(n), evaluate(p, w.index, w.data.test, n, 0.07).accuracy(InferenceMode::kProposed)) << n;
  const EvalReport r = evaluate(p, w.index, w.data.test, 5, 0.07);
  EXPECT_DOUBLE_EQ(g.baseline_accuracy, r.accuracy(InferenceMode::kBaseline));
  EXPECT_DOUBLE_EQ(g.ordinary_accuracy, r.accuracy(InferenceMode::kOrdinary));
  expect_error(ErrorCode::kInvalidArgument, [&] { g.at(2); });
}

TEST(AblateCandidates, RejectsBadAxes) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2);
  expect_error(ErrorCode::kInvalidArgument, [&] { ablate_candidates(p, w.index, w.data.test, {5, 5}, 0.07); });
  expect_error(ErrorCode::kInvalidArgument, [&] { ablate_candidates(p, w.index, w.data.test, {10, 1}, 0.07); });
  expect_error(ErrorCode::kInvalidArgument, [&] { ablate_candidates(p, w.index, w.data.test, {0, 1}, 0.07); });
  expect_error(ErrorCode::kInvalidArgument, [&] { ablate_candidates(p, w.index, w.data.test, {}, 0.07); });
}

TEST(AblateResemblants, RetrainsFromTheSameStageOneParameters) {
  const ModelParams p = perfect_reader();
  const SmallWorld w = small_world(0.2, 0.3);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.stage2.epochs = 1;
  std::vector<ModelParams> trained;
  const AblationGrid g = ablate_resemblants(p, cfg, w.data.train, w.index, w.data.test, {0, 3}, 5, {}, &trained);
  EXPECT_EQ(g.axis, "resemblants");
  ASSERT_EQ(trained.size(), 2u);
  ASSERT_EQ(g.accuracy.size(), 2u);
  for (const auto& t : trained) {
    EXPECT_EQ(t.recog_head_w, p.recog_head_w);
    EXPECT_EQ(t.glyph_embed, p.glyph_embed);
  }
  EXPECT_NE(trained[0].proj_text, trained[1].proj_text);

  // The value-3 run is exactly a standalone stage 2 with three resemblants.
  ModelParams alone = p;
  cfg.resemblants = 3;
  train_stage2(alone, cfg, w.data.train);
  EXPECT_EQ(alone, trained[1]);
  EXPECT_DOUBLE_EQ(g.at(3), evaluate(alone, w.index, w.data.test, 5, 0.07).accuracy(InferenceMode::kProposed));
}

TEST(ConfigJson, RoundTrips) {
  TrainConfig cfg;
  cfg.seed = 99;
  cfg.stage2.optimizer = OptimizerKind::kAdam;
  cfg.stage2.trainable = {ParamGroup::kProjection};
  cfg.match_attention_from_recog = false;
  const json j = to_json(cfg);
  EXPECT_EQ(to_json(train_config_from_json(j)).dump(), j.dump());

  DatasetSpec spec;
  spec.train_noise_rate = 0.5;
  EXPECT_EQ(dataset_spec_from_json(to_json(spec)), spec);
  DatasetSpec plain;
  EXPECT_EQ(dataset_spec_from_json(to_json(plain)).effective_train_noise(), plain.effective_train_noise());

  ModelDims dims;
  dims.C = 16;
  EXPECT_EQ(dims_from_json(to_json(dims)), dims);
}

TEST(StandardRun, ConfigurationIsTheDocumentedOne) {
  const StandardRun run;
  EXPECT_GE(run.lexicon_size, 2000u);
  EXPECT_DOUBLE_EQ(run.data.out_of_lexicon_fraction, 0.2);
  EXPECT_EQ(run.top_n, 5u);
  EXPECT_EQ(run.train.resemblants, 3u);
  EXPECT_EQ(run.train.batch_size, 32u);
  EXPECT_DOUBLE_EQ(run.train.tau, 0.07);
  EXPECT_EQ(run.train.stage1.lambda_recog, 1.0);
  EXPECT_EQ(run.train.stage1.lambda_sitm, 0.0);
  EXPECT_EQ(run.train.stage2.lambda_recog, 0.0);
  EXPECT_EQ(run.train.stage2.lambda_sitm, 1.0);
}

}  // namespace
}  // namespace vdict
