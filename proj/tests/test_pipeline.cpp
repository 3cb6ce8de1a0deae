#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "vdict/dataset.hpp"
#include "vdict/pipeline.hpp"
#include "vdict/training.hpp"
#include "test_util.hpp"

namespace vdict {
namespace {

using testing::expect_error;

const Lexicon& toy_lexicon() {
  static const Lexicon lex({"tireless", "tiredness", "redness", "kindness", "sadness"});
  return lex;
}

TEST(CandidateSet, WorkedExample) {
  const MetricIndex index(toy_lexicon());
  const CandidateSet set = build_candidate_set(index, "tirelness", 2);
  EXPECT_EQ(set.entries, (std::vector<std::string>{"tiredness", "tireless", "tirelness"}));
  EXPECT_EQ(set.distances, (std::vector<int>{1, 1, 0}));
  EXPECT_EQ(set.source_prediction, "tirelness");
  EXPECT_EQ(set.top_n_used, 2u);
}

TEST(CandidateSet, PredictionInLexiconAppearsOnce) {
  const MetricIndex index(toy_lexicon());
  const CandidateSet set = build_candidate_set(index, "redness", 2);
  EXPECT_EQ(std::count(set.entries.begin(), set.entries.end(), "redness"), 1);
  EXPECT_EQ(set.entries.size(), 2u);
}

TEST(CandidateSet, ClampsToWholeLexiconAndAcceptsEmptyPrediction) {
  const MetricIndex index(toy_lexicon());
  const CandidateSet all = build_candidate_set(index, "zzz", 300);
  EXPECT_EQ(all.entries.size(), 6u);
  EXPECT_EQ(all.entries.back(), "zzz");
  const CandidateSet empty = build_candidate_set(index, "", 1);
  EXPECT_EQ(empty.entries, (std::vector<std::string>{"redness", ""}));
  expect_error(ErrorCode::kInvalidArgument, [&] { build_candidate_set(index, "abc", 0); });
}

TEST(CandidateSet, MembershipAndCompletenessOnRandomQueries) {
  const Lexicon lex = generate_random_lexicon(800, 17);
  const MetricIndex index(lex);
  Rng rng(3);
  for (int q = 0; q < 200; ++q) {
    std::string y_hat(rng.below(11), 'a');
    for (char& c : y_hat) c = kAlphabet[rng.below(kAlphabet.size())];
    const std::size_t n = 1 + rng.below(30);
    const CandidateSet set = build_candidate_set(index, y_hat, n);
    EXPECT_NE(std::find(set.entries.begin(), set.entries.end(), y_hat), set.entries.end());
    EXPECT_LE(set.entries.size(), n + 1);
    EXPECT_EQ(std::set<std::string>(set.entries.begin(), set.entries.end()).size(), set.entries.size());

    int worst = 0;
    for (std::size_t i = 0; i < set.entries.size(); ++i)
      if (lex.contains(set.entries[i])) worst = std::max(worst, set.distances[i]);
    for (const auto& w : lex.words()) {
      if (std::find(set.entries.begin(), set.entries.end(), w) != set.entries.end()) continue;
      EXPECT_GE(levenshtein(y_hat, w), worst) << "missing closer word " << w << " for " << y_hat;
    }
  }
}

TEST(OrdinaryCorrect, ForcesTheNearestWord) {
  const MetricIndex pours(Lexicon({"pour", "hour", "tour"}));
  EXPECT_EQ(ordinary_correct(pours, "your"), "hour");
  EXPECT_EQ(ordinary_correct(pours, "pour"), "pour");
  const MetricIndex index(toy_lexicon());
  const std::string forced = ordinary_correct(index, "ngee");
  EXPECT_NE(forced, "ngee");
  EXPECT_TRUE(toy_lexicon().contains(forced));
}

TEST(InferenceMode, ParseRoundTrip) {
  for (auto m : {InferenceMode::kBaseline, InferenceMode::kOrdinary, InferenceMode::kProposed})
    EXPECT_EQ(parse_inference_mode(to_string(m)), m);
  expect_error(ErrorCode::kInvalidArgument, [] { parse_inference_mode("oracle"); });
}

ModelDims small_dims() {
  ModelDims d;
  d.C = 8;
  d.D = 6;
  d.ffn = 12;
  return d;
}

TEST(Infer, ModesReduceAsDocumented) {
  const Lexicon lex = generate_random_lexicon(200, 2);
  const MetricIndex index(lex);
  const ModelParams p = ModelParams::init(small_dims(), 4);
  TextEmbeddingCache cache(p);
  Rng rng(8);
  for (int k = 0; k < 30; ++k) {
    const std::string& label = lex.words()[rng.below(lex.size())];
    const GlyphImage img = perturb(render(label), default_confusion_table(), 0.2, 0.4, static_cast<std::uint64_t>(k));
    const std::string y_hat = recognize(p, img).y_hat;

    const InferenceResult base = infer(p, index, img, 5, 0.07, InferenceMode::kBaseline);
    EXPECT_EQ(base.final_prediction, y_hat);
    EXPECT_EQ(base.visual_prediction, y_hat);

    const InferenceResult ord = infer(p, index, img, 5, 0.07, InferenceMode::kOrdinary);
    EXPECT_EQ(ord.final_prediction, ordinary_correct(index, y_hat));

    const InferenceResult prop = infer(p, index, img, 5, 0.07, InferenceMode::kProposed, &cache);
    const auto& e = prop.candidates.entries;
    EXPECT_NE(std::find(e.begin(), e.end(), prop.final_prediction), e.end());
    ASSERT_EQ(prop.scores.size(), static_cast<Eigen::Index>(e.size()));
    EXPECT_NEAR(prop.scores.sum(), 1.0, 1e-9);
    Eigen::Index best = 0;
    prop.scores.maxCoeff(&best);
    EXPECT_EQ(prop.final_prediction, e[static_cast<std::size_t>(best)]);

    // A private cache and the shared one give the same answer.
    EXPECT_EQ(infer(p, index, img, 5, 0.07, InferenceMode::kProposed).final_prediction, prop.final_prediction);
  }
}

TEST(Infer, ScoringFirstMaximumWinsTies) {
  const ModelParams p = ModelParams::init(small_dims(), 4);
  TextEmbeddingCache cache(p);
  CandidateSet set;
  set.entries = {"same", "same", "other"};
  const Vector emb = cache.get("same");
  const auto [scores, best] = score_candidates(emb, set, cache, 0.07);
  EXPECT_EQ(best, 0u);
  EXPECT_DOUBLE_EQ(scores(0), scores(1));
  EXPECT_EQ(cache.size(), 2u);
}

TEST(Infer, DistanceFavouringScorerReproducesOrdinaryAtOneCandidate) {
  // When the scorer prefers the nearest dictionary word over y_hat, n = 1
  // behaves like the ordinary method. Emulate that scorer directly on the set.
  const MetricIndex index(toy_lexicon());
  for (const char* y_hat : {"tirelness", "kindnes", "zzz", "sadnesss"}) {
    const CandidateSet set = build_candidate_set(index, y_hat, 1);
    ASSERT_EQ(set.entries.size(), 2u);
    EXPECT_EQ(set.entries.front(), ordinary_correct(index, y_hat));
  }
}

// ---- training ----

std::vector<LabeledSample> tiny_train(std::size_t n, std::uint64_t seed) {
  const Lexicon lex = generate_random_lexicon(60, seed);
  DatasetSpec spec;
  spec.seed = seed;
  spec.train_size = n;
  spec.test_size = 1;
  spec.noise_rate = 0.3;
  return generate_dataset(spec, lex).train;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.stage1.epochs = 2;
  cfg.stage2.epochs = 2;
  return cfg;
}

std::set<std::string> changed_tensors(const ModelParams& before, const ModelParams& after) {
  std::vector<const Matrix*> a;
  before.for_each([&](const std::string&, ParamGroup, const Matrix& m) { a.push_back(&m); });
  std::set<std::string> changed;
  std::size_t i = 0;
  after.for_each([&](const std::string& name, ParamGroup, const Matrix& m) {
    if (m != *a[i++]) changed.insert(name);
  });
  return changed;
}

std::set<std::string> tensors_in(const std::set<ParamGroup>& groups, const ModelDims& dims) {
  std::set<std::string> out;
  ModelParams::zeros(dims).for_each([&](const std::string& name, ParamGroup g, const Matrix&) {
    if (groups.contains(g)) out.insert(name);
  });
  return out;
}

TEST(Training, StageOneTouchesOnlyTheRecognizer) {
  const auto train = tiny_train(40, 1);
  const TrainConfig cfg = tiny_config();
  const ModelParams start = ModelParams::init(small_dims(), 2);
  ModelParams p = start;
  train_stage1(p, cfg, train);
  const auto changed = changed_tensors(start, p);
  EXPECT_EQ(changed, tensors_in(cfg.stage1.trainable, p.dims));
  for (const auto& name : changed) {
    EXPECT_EQ(name.find("text_"), std::string::npos) << name;
    EXPECT_EQ(name.find("proj_"), std::string::npos) << name;
  }
}

TEST(Training, StageTwoNeverTouchesTheRecognizerHead) {
  const auto train = tiny_train(40, 1);
  const TrainConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(small_dims(), 2);
  train_stage1(p, cfg, train);
  const ModelParams after_stage1 = p;
  train_stage2(p, cfg, train);
  const auto changed = changed_tensors(after_stage1, p);
  EXPECT_EQ(changed, tensors_in(cfg.stage2.trainable, p.dims));
  EXPECT_FALSE(changed.contains("recog_head.w"));
  EXPECT_FALSE(changed.contains("recog_head.b"));
  EXPECT_EQ(p.recog_attention.query, after_stage1.recog_attention.query);
}

TEST(Training, MatchingAttentionStartsFromTheRecognizer) {
  const auto train = tiny_train(16, 3);
  TrainConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(small_dims(), 2);
  train_stage1(p, cfg, train);
  cfg.stage2.trainable = {ParamGroup::kTextEncoder, ParamGroup::kProjection};
  train_stage2(p, cfg, train);
  EXPECT_EQ(p.match_attention.query, p.recog_attention.query);
  EXPECT_EQ(p.match_attention.key, p.recog_attention.key);
  EXPECT_EQ(p.match_attention.value, p.recog_attention.value);

  ModelParams q = ModelParams::init(small_dims(), 2);
  const ModelParams fresh = q;
  cfg.match_attention_from_recog = false;
  train_stage2(q, cfg, train);
  EXPECT_EQ(q.match_attention.query, fresh.match_attention.query);
}

TEST(Training, ZeroEpochsLeaveParamsUnchanged) {
  const auto train = tiny_train(16, 1);
  TrainConfig cfg = tiny_config();
  cfg.stage1.epochs = 0;
  cfg.stage2.epochs = 0;
  const ModelParams start = ModelParams::init(small_dims(), 2);
  ModelParams p = start;
  EXPECT_TRUE(train_stage1(p, cfg, train).empty());
  EXPECT_TRUE(train_stage2(p, cfg, train).empty());
  EXPECT_EQ(p, start);
}

TEST(Training, DeterministicUnderFixedSeeds) {
  const auto train = tiny_train(40, 5);
  const TrainConfig cfg = tiny_config();
  auto run = [&] {
    ModelParams p = ModelParams::init(small_dims(), cfg.init_seed);
    const auto l1 = train_stage1(p, cfg, train);
    const auto l2 = train_stage2(p, cfg, train);
    return std::tuple{p.serialize(), l1, l2};
  };
  EXPECT_EQ(run(), run());
}

TEST(Training, StageOneLossIsNonIncreasingWithinJitter) {
  const auto train = tiny_train(200, 6);
  TrainConfig cfg = tiny_config();
  cfg.stage1.epochs = 6;
  ModelParams p = ModelParams::init(small_dims(), 1);
  const auto losses = train_stage1(p, cfg, train);
  ASSERT_EQ(losses.size(), 6u);
  for (std::size_t e = 1; e < losses.size(); ++e) EXPECT_LE(losses[e], losses[e - 1] * 1.05) << "epoch " << e;
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Training, OptimizerOptionsTrainAndStayFinite) {
  const auto train = tiny_train(40, 7);
  TrainConfig cfg = tiny_config();
  cfg.stage2.optimizer = OptimizerKind::kAdam;
  cfg.stage2.learning_rate = 1e-3;
  cfg.stage2.warmup_steps = 3;
  cfg.stage2.clip_norm = 1.0;
  ModelParams p = ModelParams::init(small_dims(), 1);
  train_stage1(p, cfg, train);
  const auto losses = train_stage2(p, cfg, train);
  EXPECT_EQ(losses.size(), 2u);
  EXPECT_TRUE(p.all_finite());
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::kAdam);
  expect_error(ErrorCode::kInvalidArgument, [] { parse_optimizer("lbfgs"); });
}

TEST(Training, ClipGradNormCapsTheTrainableNorm) {
  ModelParams g = ModelParams::zeros(small_dims());
  g.proj_text.setConstant(3.0);
  g.recog_head_w.setConstant(100.0);
  const std::set<ParamGroup> trainable{ParamGroup::kProjection};
  const double before = clip_grad_norm(g, 1.0, trainable);
  EXPECT_GT(before, 1.0);
  EXPECT_NEAR(std::sqrt(g.proj_text.squaredNorm() + g.proj_image.squaredNorm()), 1.0, 1e-12);
  EXPECT_EQ(g.recog_head_w(0, 0), 100.0);
}

TEST(Training, InvalidConfigsRejected) {
  const auto train = tiny_train(8, 1);
  ModelParams p = ModelParams::init(small_dims(), 1);
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 1;
  expect_error(ErrorCode::kInvalidArgument, [&] { train_stage2(p, cfg, train); });
  cfg = tiny_config();
  cfg.tau = 0.0;
  expect_error(ErrorCode::kInvalidArgument, [&] { train_stage1(p, cfg, train); });
  cfg = tiny_config();
  cfg.stage2.learning_rate = -1.0;
  expect_error(ErrorCode::kInvalidArgument, [&] { train_stage2(p, cfg, train); });
  expect_error(ErrorCode::kInvalidArgument, [&] { train_stage1(p, tiny_config(), {}); });
}

TEST(Training, NonFiniteGradientAborts) {
  const auto train = tiny_train(8, 1);
  ModelParams p = ModelParams::init(small_dims(), 1);
  p.recog_head_b(0, 0) = std::numeric_limits<double>::infinity();
  expect_error(ErrorCode::kNonFiniteParams, [&] { train_stage1(p, tiny_config(), train); });
}

}  // namespace
}  // namespace vdict
