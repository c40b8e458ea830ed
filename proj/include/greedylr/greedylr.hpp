#pragma once

// Umbrella header: the full solver library.

#include "greedylr/types.hpp"
#include "greedylr/errors.hpp"
#include "greedylr/operators.hpp"
#include "greedylr/problem.hpp"
#include "greedylr/als.hpp"
#include "greedylr/galerkin.hpp"
#include "greedylr/greedy.hpp"
#include "greedylr/reference.hpp"
#include "greedylr/toybrain.hpp"
#include "greedylr/io.hpp"
#include "greedylr/commands.hpp"
