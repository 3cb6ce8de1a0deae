// Command-line front end: data generation, index building, two-stage
// training, evaluation, ablations and one-shot correction.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "vdict/vdict.hpp"

namespace fs = std::filesystem;
using namespace vdict;

namespace {

std::string default_data_dir() {
  if (const char* env = std::getenv("VDICT_DATA_DIR"); env && *env) return env;
  return "vdict-data";
}

struct Paths {
  std::string dir;
  std::string lexicon() const { return (fs::path(dir) / "lexicon.txt").string(); }
  std::string dataset() const { return (fs::path(dir) / "dataset.vdds").string(); }
  std::string index() const { return (fs::path(dir) / "index.vdix").string(); }
  std::string model() const { return (fs::path(dir) / "model.vdmp").string(); }
  std::string stage1_model() const { return (fs::path(dir) / "model.stage1.vdmp").string(); }
};

std::string sidecar_path(const std::string& model) { return model + ".train.json"; }

const ConfusionTable& confusion_table(const std::string& path, std::optional<ConfusionTable>& storage) {
  if (path.empty()) return default_confusion_table();
  storage = ConfusionTable::load(path);
  return *storage;
}

void add_train_flags(CLI::App* cmd, TrainConfig& c) {
  cmd->add_option("--batch-size", c.batch_size, "batch size N")->capture_default_str();
  cmd->add_option("--resemblants", c.resemblants, "resemblant words per label (M-1)")->capture_default_str();
  cmd->add_option("--tau", c.tau, "contrastive temperature")->capture_default_str();
  cmd->add_option("--train-seed", c.seed, "seed for batch order and resemblants")->capture_default_str();
  cmd->add_option("--init-seed", c.init_seed, "parameter initialization seed")->capture_default_str();
  cmd->add_option("--stage1-epochs", c.stage1.epochs)->capture_default_str();
  cmd->add_option("--stage2-epochs", c.stage2.epochs)->capture_default_str();
  cmd->add_option("--stage1-lr", c.stage1.learning_rate)->capture_default_str();
  cmd->add_option("--stage2-lr", c.stage2.learning_rate)->capture_default_str();
  cmd->add_flag("!--stage1-noisy", c.stage1_clean_renders, "train stage 1 on the perturbed images");
}

struct TrainSidecar {
  TrainConfig config;
  std::string dataset_digest;
  std::vector<double> stage1_losses, stage2_losses;
};

void write_sidecar(const std::string& model_path, const TrainSidecar& s) {
  json j = {{"train", to_json(s.config)},
            {"dataset_digest", s.dataset_digest},
            {"stage1_losses", s.stage1_losses},
            {"stage2_losses", s.stage2_losses}};
  write_text(sidecar_path(model_path), j.dump(2) + "\n");
}

TrainSidecar read_sidecar(const std::string& model_path) {
  TrainSidecar s;
  const std::string path = sidecar_path(model_path);
  if (!fs::exists(path)) return s;
  try {
    const json j = json::parse(read_text(path));
    s.config = train_config_from_json(j.at("train"));
    s.dataset_digest = j.at("dataset_digest");
    s.stage1_losses = j.at("stage1_losses").get<std::vector<double>>();
    s.stage2_losses = j.at("stage2_losses").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("bad training sidecar: ") + e.what());
  }
  return s;
}

struct Loaded {
  Lexicon lexicon;
  Dataset dataset;
  MetricIndex index;
};

Loaded load_world(const Paths& paths) {
  Lexicon lex = Lexicon::load(paths.lexicon());
  Dataset data = Dataset::load(paths.dataset());
  if (data.lexicon_digest != lex.digest())
    throw Error(ErrorCode::kVersionMismatch, "dataset was generated from a different lexicon");
  MetricIndex index = MetricIndex::load_or_build(paths.index(), lex);
  return {std::move(lex), std::move(data), std::move(index)};
}

RunManifest manifest_for(const Loaded& w, const ModelParams& p, const TrainConfig& cfg, std::size_t n, double tau) {
  RunInputs in;
  in.lexicon_digest = w.lexicon.digest();
  in.lexicon_size = w.lexicon.size();
  in.table_version = w.dataset.table_version;
  in.dataset_digest = w.dataset.digest();
  in.model_digest = p.digest();
  in.dims = p.dims;
  return make_manifest(in, w.dataset.spec, cfg, n, tau);
}

void print_epoch(int stage, int epoch, double loss) {
  std::cerr << "stage " << stage << " epoch " << epoch << " loss " << loss << "\n";
}

GlyphImage read_glyph_file(const std::string& path) {
  std::istringstream in(read_text(path));
  GlyphImage img;
  img.label_length = 0;
  for (int i = 0; i < kGlyphCells; ++i)
    for (int k = 0; k < kNumClasses; ++k)
      if (!(in >> img.cells(i, k))) throw Error(ErrorCode::kCorruptFile, "glyph file needs 25 x 37 numbers");
  for (int i = 0; i < kGlyphCells; ++i) {
    Eigen::Index best = 0;
    img.cells.row(i).maxCoeff(&best);
    if (best == kEosClass) break;
    ++img.label_length;
  }
  return img;
}

void print_inference(std::ostream& out, const InferenceResult& r) {
  out << "visual prediction: \"" << r.visual_prediction << "\"\n";
  out << "candidates (top " << r.candidates.top_n_used << " + prediction):\n";
  for (std::size_t i = 0; i < r.candidates.entries.size(); ++i)
    out << "  " << std::setw(2) << i << "  " << std::left << std::setw(26) << r.candidates.entries[i] << std::right
        << " dist " << r.candidates.distances[i] << "  score " << std::fixed << std::setprecision(4) << r.scores(i)
        << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dictionary-guided text correction on a synthetic glyph world"};
  app.require_subcommand(1);
  std::string data_dir = default_data_dir();
  app.add_option("--data-dir", data_dir, "working directory (default: $VDICT_DATA_DIR or ./vdict-data)");

  StandardRun run;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a random lexicon and a seeded dataset");
  std::string lexicon_in, confusion_in;
  gen->add_option("--lexicon", lexicon_in, "use this lexicon file instead of a random one");
  gen->add_option("--lexicon-size", run.lexicon_size)->capture_default_str();
  gen->add_option("--lexicon-seed", run.lexicon_seed)->capture_default_str();
  gen->add_option("--confusion-table", confusion_in, "confusion table file (default: built-in v1)");
  double train_noise = *run.data.train_noise_rate;
  gen->add_option("--seed", run.data.seed)->capture_default_str();
  gen->add_option("--train-size", run.data.train_size)->capture_default_str();
  gen->add_option("--test-size", run.data.test_size)->capture_default_str();
  gen->add_option("--noise-rate", run.data.noise_rate, "test-image swap probability")->capture_default_str();
  gen->add_option("--train-noise-rate", train_noise, "training-image swap probability")->capture_default_str();
  gen->add_option("--smear", run.data.smear)->capture_default_str();
  gen->add_option("--out-of-lexicon-fraction", run.data.out_of_lexicon_fraction)->capture_default_str();

  // build-index
  auto* build = app.add_subcommand("build-index", "build (or validate) the cached metric index");

  // train
  auto* train = app.add_subcommand("train", "two-stage training");
  std::string stage = "both";
  std::string model_in, model_out;
  train->add_option("--stage", stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}))->capture_default_str();
  train->add_option("--model-in", model_in, "starting parameters for --stage 2 (default: model.stage1.vdmp)");
  train->add_option("--model-out", model_out, "output model (default: model.vdmp, or model.stage1.vdmp for stage 1)");
  add_train_flags(train, run.train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate baseline, ordinary and proposed modes");
  std::string model_path, out_path, format = "table";
  double tau_override = 0.0;
  eval->add_option("--model", model_path, "model file (default: model.vdmp in the data dir)");
  eval->add_option("--top-n", run.top_n)->capture_default_str();
  eval->add_option("--tau", tau_override, "temperature (default: the one used in training)");
  eval->add_option("--out", out_path, "report file (default: stdout)");
  eval->add_option("--format", format)->check(CLI::IsMember({"json", "table"}))->capture_default_str();

  // ablate-candidates
  auto* abl_c = app.add_subcommand("ablate-candidates", "proposed accuracy per candidate count");
  std::vector<std::size_t> cand_values = default_candidate_values();
  abl_c->add_option("--model", model_path);
  abl_c->add_option("--values", cand_values)->delimiter(',')->capture_default_str();
  abl_c->add_option("--tau", tau_override);
  abl_c->add_option("--out", out_path);
  abl_c->add_option("--format", format)->check(CLI::IsMember({"json", "table"}))->capture_default_str();

  // ablate-resemblants
  auto* abl_r = app.add_subcommand("ablate-resemblants", "retrain stage 2 per resemblant count");
  std::vector<std::size_t> res_values = default_resemblant_values();
  abl_r->add_option("--model-in", model_in, "stage-1 parameters (default: model.stage1.vdmp)");
  abl_r->add_option("--values", res_values)->delimiter(',')->capture_default_str();
  abl_r->add_option("--top-n", run.top_n)->capture_default_str();
  abl_r->add_option("--out", out_path);
  abl_r->add_option("--format", format)->check(CLI::IsMember({"json", "table"}))->capture_default_str();
  add_train_flags(abl_r, run.train);

  // correct
  auto* correct = app.add_subcommand("correct", "one-shot correction of a single image");
  std::string label, image_path;
  double noise = 0.0, smear = 0.0;
  std::uint64_t image_seed = 1;
  correct->add_option("--model", model_path);
  correct->add_option("--lexicon", lexicon_in, "lexicon file (default: lexicon.txt in the data dir)");
  auto* label_opt = correct->add_option("--label", label, "render this word as the input image");
  correct->add_option("--image", image_path, "glyph file with 25 x 37 numbers")->excludes(label_opt);
  correct->add_option("--noise-rate", noise, "perturb the rendered label")->capture_default_str();
  correct->add_option("--smear", smear)->capture_default_str();
  correct->add_option("--image-seed", image_seed)->capture_default_str();
  correct->add_option("--top-n", run.top_n)->capture_default_str();
  correct->add_option("--tau", tau_override);

  // inspect
  auto* inspect = app.add_subcommand("inspect", "candidate sets and scores for test samples");
  std::vector<std::size_t> sample_ids = {0};
  inspect->add_option("--model", model_path);
  inspect->add_option("--sample", sample_ids, "test sample indices")->delimiter(',');
  inspect->add_option("--top-n", run.top_n)->capture_default_str();
  inspect->add_option("--tau", tau_override);

  CLI11_PARSE(app, argc, argv);

  try {
    const Paths paths{data_dir};
    auto resolve_model = [&] { return model_path.empty() ? paths.model() : model_path; };
    auto emit = [&](const std::string& text) {
      if (out_path.empty())
        std::cout << text;
      else
        write_text(out_path, text);
    };

    if (gen->parsed()) {
      fs::create_directories(data_dir);
      std::optional<ConfusionTable> table_storage;
      const ConfusionTable& table = confusion_table(confusion_in, table_storage);
      run.data.train_noise_rate = train_noise;
      Lexicon lex = lexicon_in.empty() ? generate_random_lexicon(run.lexicon_size, run.lexicon_seed)
                                       : Lexicon::load(lexicon_in);
      lex.save(paths.lexicon());
      const Dataset d = generate_dataset(run.data, lex, table);
      d.save(paths.dataset());
      MetricIndex(lex).save(paths.index());
      std::cout << "lexicon " << lex.size() << " words, train " << d.train.size() << ", test " << d.test.size()
                << ", dataset digest " << hex64(d.digest()) << "\n";
    } else if (build->parsed()) {
      const Lexicon lex = Lexicon::load(paths.lexicon());
      const MetricIndex index = MetricIndex::load_or_build(paths.index(), lex);
      std::cout << "index " << paths.index() << ": " << index.word_count() << " words, source digest "
                << hex64(index.source_digest()) << "\n";
    } else if (train->parsed()) {
      const Dataset d = Dataset::load(paths.dataset());
      TrainSidecar side;
      side.config = run.train;
      side.dataset_digest = hex64(d.digest());
      ModelParams p;
      if (stage == "2") {
        const std::string in = model_in.empty() ? paths.stage1_model() : model_in;
        p = ModelParams::load(in);
        side.stage1_losses = read_sidecar(in).stage1_losses;
      } else {
        p = ModelParams::init(run.dims, run.train.init_seed);
        side.stage1_losses = train_stage1(p, run.train, d.train, print_epoch);
        p.save(paths.stage1_model());
        write_sidecar(paths.stage1_model(), side);
      }
      if (stage != "1") side.stage2_losses = train_stage2(p, run.train, d.train, print_epoch);
      const std::string out =
          !model_out.empty() ? model_out : (stage == "1" ? paths.stage1_model() : paths.model());
      p.save(out);
      write_sidecar(out, side);
      std::cout << "saved " << out << " (digest " << hex64(p.digest()) << ")\n";
    } else if (eval->parsed()) {
      const Loaded w = load_world(paths);
      const ModelParams p = ModelParams::load(resolve_model());
      const TrainConfig cfg = read_sidecar(resolve_model()).config;
      const double tau = tau_override > 0 ? tau_override : cfg.tau;
      const EvalReport r = evaluate(p, w.index, w.dataset.test, run.top_n, tau, manifest_for(w, p, cfg, run.top_n, tau));
      emit(format == "json" ? to_json(r).dump(2) + "\n" : format_table(r));
    } else if (abl_c->parsed()) {
      const Loaded w = load_world(paths);
      const ModelParams p = ModelParams::load(resolve_model());
      const TrainConfig cfg = read_sidecar(resolve_model()).config;
      const double tau = tau_override > 0 ? tau_override : cfg.tau;
      const AblationGrid g = ablate_candidates(p, w.index, w.dataset.test, cand_values, tau,
                                               manifest_for(w, p, cfg, cand_values.back(), tau));
      emit(format == "json" ? to_json(g).dump(2) + "\n" : format_table(g));
    } else if (abl_r->parsed()) {
      const Loaded w = load_world(paths);
      const ModelParams p = ModelParams::load(model_in.empty() ? paths.stage1_model() : model_in);
      const AblationGrid g =
          ablate_resemblants(p, run.train, w.dataset.train, w.index, w.dataset.test, res_values, run.top_n,
                             manifest_for(w, p, run.train, run.top_n, run.train.tau), nullptr, print_epoch);
      emit(format == "json" ? to_json(g).dump(2) + "\n" : format_table(g));
    } else if (correct->parsed()) {
      if (label.empty() == image_path.empty()) throw Error(ErrorCode::kInvalidArgument, "give --label or --image");
      const Lexicon lex = Lexicon::load(lexicon_in.empty() ? paths.lexicon() : lexicon_in);
      const MetricIndex index(lex);
      const ModelParams p = ModelParams::load(resolve_model());
      const double tau = tau_override > 0 ? tau_override : read_sidecar(resolve_model()).config.tau;
      GlyphImage img = image_path.empty() ? render(normalize_word(label)) : read_glyph_file(image_path);
      if (image_path.empty() && (noise > 0 || smear > 0))
        img = perturb(img, default_confusion_table(), noise, smear, image_seed);
      TextEmbeddingCache cache(p);
      for (auto m : {InferenceMode::kBaseline, InferenceMode::kOrdinary, InferenceMode::kProposed})
        std::cout << std::left << std::setw(9) << to_string(m) << " "
                  << infer(p, index, img, run.top_n, tau, m, &cache).final_prediction << "\n";
    } else if (inspect->parsed()) {
      const Loaded w = load_world(paths);
      const ModelParams p = ModelParams::load(resolve_model());
      const double tau = tau_override > 0 ? tau_override : read_sidecar(resolve_model()).config.tau;
      TextEmbeddingCache cache(p);
      for (std::size_t id : sample_ids) {
        if (id >= w.dataset.test.size()) throw Error(ErrorCode::kInvalidArgument, "sample index out of range");
        const auto& s = w.dataset.test[id];
        const InferenceResult r = infer(p, w.index, s.image, run.top_n, tau, InferenceMode::kProposed, &cache);
        std::cout << "sample " << id << "  label \"" << s.label << "\""
                  << (w.lexicon.contains(s.label) ? "" : " (not in lexicon)") << "\n";
        print_inference(std::cout, r);
        std::cout << "ordinary: \"" << ordinary_correct(w.index, r.visual_prediction) << "\"  proposed: \""
                  << r.final_prediction << "\"\n\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
