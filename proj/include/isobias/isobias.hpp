#pragma once

#include "isobias/collapse.hpp"
#include "isobias/gene_io.hpp"
#include "isobias/objective.hpp"
#include "isobias/rng.hpp"
#include "isobias/sim.hpp"
#include "isobias/solver.hpp"
#include "isobias/types.hpp"
