#pragma once

#include "w1/baselines.hpp"
#include "w1/error.hpp"
#include "w1/exact.hpp"
#include "w1/flow.hpp"
#include "w1/flowtree.hpp"
#include "w1/ground.hpp"
#include "w1/io.hpp"
#include "w1/parallel.hpp"
#include "w1/pipeline.hpp"
#include "w1/quadtree.hpp"
#include "w1/random.hpp"
#include "w1/search.hpp"
#include "w1/synth.hpp"
