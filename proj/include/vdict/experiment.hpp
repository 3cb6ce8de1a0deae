#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdict/harness.hpp"

namespace vdict {

/// The seeded end-to-end configuration used by the acceptance suite and as
/// the CLI defaults.
struct StandardRun {
  std::size_t lexicon_size = 2000;
  std::uint64_t lexicon_seed = 3;
  DatasetSpec data = [] {
    DatasetSpec s;
    s.seed = 7;
    s.train_size = 4000;
    s.test_size = 1000;
    s.noise_rate = 0.05;
    s.train_noise_rate = 0.5;
    s.smear = 0.4;
    s.out_of_lexicon_fraction = 0.2;
    return s;
  }();
  TrainConfig train;
  ModelDims dims;
  std::size_t top_n = 5;
};

/// Lexicon, data and index for a run, built once and shared by experiments.
struct World {
  Lexicon lexicon;
  Dataset dataset;
  MetricIndex index;

  static World build(const StandardRun& run, const ConfusionTable& table = default_confusion_table()) {
    Lexicon lex = generate_random_lexicon(run.lexicon_size, run.lexicon_seed);
    Dataset data = generate_dataset(run.data, lex, table);
    MetricIndex index(lex);
    return {std::move(lex), std::move(data), std::move(index)};
  }
};

inline RunInputs run_inputs(const World& w, const ModelParams& p) {
  RunInputs in;
  in.lexicon_digest = w.lexicon.digest();
  in.lexicon_size = w.lexicon.size();
  in.table_version = w.dataset.table_version;
  in.dataset_digest = w.dataset.digest();
  in.model_digest = p.digest();
  in.dims = p.dims;
  return in;
}

struct TrainedModels {
  ModelParams stage1;
  ModelParams full;
  std::vector<double> stage1_losses;
  std::vector<double> stage2_losses;
};

inline TrainedModels train_both_stages(const StandardRun& run, const World& w, const EpochCallback& on_epoch = {}) {
  TrainedModels t{ModelParams::init(run.dims, run.train.init_seed), {}, {}, {}};
  t.stage1_losses = train_stage1(t.stage1, run.train, w.dataset.train, on_epoch);
  t.full = t.stage1;
  t.stage2_losses = train_stage2(t.full, run.train, w.dataset.train, on_epoch);
  return t;
}

}  // namespace vdict
