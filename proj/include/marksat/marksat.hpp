// SPDX-License-Identifier: Apache-2.0
// Everything except the JSON helpers in io.hpp.
#pragma once

#include "marksat/classifier.hpp"
#include "marksat/clause_graph.hpp"
#include "marksat/coupling.hpp"
#include "marksat/errors.hpp"
#include "marksat/formula.hpp"
#include "marksat/geometry.hpp"
#include "marksat/marginals.hpp"
#include "marksat/marking.hpp"
#include "marksat/paths.hpp"
#include "marksat/rng.hpp"
#include "marksat/sampler.hpp"
