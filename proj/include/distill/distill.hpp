#pragma once

#include "distill/cart.hpp"
#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/experiment.hpp"
#include "distill/forest.hpp"
#include "distill/frl.hpp"
#include "distill/markov.hpp"
#include "distill/parallel.hpp"
#include "distill/rng.hpp"
#include "distill/sampler.hpp"
#include "distill/sr.hpp"
#include "distill/stability.hpp"
#include "distill/stat_kernel.hpp"
#include "distill/student.hpp"
#include "distill/tree.hpp"
