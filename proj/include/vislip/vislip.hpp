#pragma once

#include "vislip/analysis.hpp"
#include "vislip/corpus.hpp"
#include "vislip/decoder.hpp"
#include "vislip/error.hpp"
#include "vislip/features.hpp"
#include "vislip/hmm.hpp"
#include "vislip/labels.hpp"
#include "vislip/linear_model.hpp"
#include "vislip/lm_network.hpp"
#include "vislip/recipe.hpp"
#include "vislip/rng.hpp"
#include "vislip/scoring.hpp"
#include "vislip/search_graph.hpp"
#include "vislip/text_io.hpp"
#include "vislip/training.hpp"
#include "vislip/viseme_map.hpp"
