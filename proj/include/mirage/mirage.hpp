#pragma once

// Umbrella header: the whole library in dependency order.

#include "mirage/errors.hpp"
#include "mirage/rng.hpp"
#include "mirage/types.hpp"
#include "mirage/rule.hpp"
#include "mirage/fact.hpp"
#include "mirage/render.hpp"
#include "mirage/grade.hpp"
#include "mirage/metrics.hpp"
#include "mirage/solve.hpp"
#include "mirage/client.hpp"
#include "mirage/dataset.hpp"
#include "mirage/experiment.hpp"
