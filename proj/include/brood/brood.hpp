#pragma once

#include "brood/bge.hpp"
#include "brood/brood_kernel.hpp"
#include "brood/error.hpp"
#include "brood/exact_oracle.hpp"
#include "brood/graph.hpp"
#include "brood/graph_io.hpp"
#include "brood/linalg.hpp"
#include "brood/logspace.hpp"
#include "brood/metrics.hpp"
#include "brood/node_set.hpp"
#include "brood/order_kernel.hpp"
#include "brood/rng.hpp"
#include "brood/score_tables.hpp"
#include "brood/synth.hpp"
