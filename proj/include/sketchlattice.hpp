#pragma once

#include "sketchlattice/error.hpp"
#include "sketchlattice/sketch.hpp"
#include "sketchlattice/lattice.hpp"
#include "sketchlattice/graph.hpp"
#include "sketchlattice/checkpoint.hpp"
#include "sketchlattice/encoder.hpp"
#include "sketchlattice/decoder.hpp"
#include "sketchlattice/optim.hpp"
#include "sketchlattice/config.hpp"
#include "sketchlattice/model.hpp"
#include "sketchlattice/trainer.hpp"
#include "sketchlattice/toy_data.hpp"
#include "sketchlattice/eval.hpp"
