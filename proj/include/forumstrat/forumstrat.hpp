#pragma once

// Umbrella header for the whole library.

#include "forumstrat/error.hpp"
#include "forumstrat/rng.hpp"
#include "forumstrat/time.hpp"
#include "forumstrat/csv.hpp"
#include "forumstrat/graph.hpp"
#include "forumstrat/centrality.hpp"
#include "forumstrat/strata.hpp"
#include "forumstrat/text.hpp"
#include "forumstrat/features.hpp"
#include "forumstrat/stats.hpp"
#include "forumstrat/classifier.hpp"
#include "forumstrat/scheme.hpp"
#include "forumstrat/synth.hpp"
#include "forumstrat/annotation.hpp"
#include "forumstrat/annotation_http.hpp"
#include "forumstrat/pipeline.hpp"
