#pragma once

#include "markov_gha/error.hpp"
#include "markov_gha/experiments.hpp"
#include "markov_gha/fixture.hpp"
#include "markov_gha/ingest.hpp"
#include "markov_gha/io.hpp"
#include "markov_gha/linalg.hpp"
#include "markov_gha/markov_core.hpp"
#include "markov_gha/median_boost.hpp"
#include "markov_gha/oracle.hpp"
#include "markov_gha/parallel.hpp"
#include "markov_gha/partition.hpp"
#include "markov_gha/rng.hpp"
#include "markov_gha/stream_factorizer.hpp"
