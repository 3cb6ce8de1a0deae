#pragma once

// Umbrella header for the whole library.

#include "vdict/alphabet.hpp"
#include "vdict/binary_io.hpp"
#include "vdict/confusion.hpp"
#include "vdict/dataset.hpp"
#include "vdict/error.hpp"
#include "vdict/experiment.hpp"
#include "vdict/gradcheck.hpp"
#include "vdict/glyph.hpp"
#include "vdict/harness.hpp"
#include "vdict/levenshtein.hpp"
#include "vdict/lexicon.hpp"
#include "vdict/metric_index.hpp"
#include "vdict/model.hpp"
#include "vdict/neural.hpp"
#include "vdict/pipeline.hpp"
#include "vdict/resemblant.hpp"
#include "vdict/rng.hpp"
#include "vdict/tensor.hpp"
#include "vdict/training.hpp"
