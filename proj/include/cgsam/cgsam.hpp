#pragma once

#include "cgsam/core.hpp"
#include "cgsam/gaussian.hpp"
#include "cgsam/geometry.hpp"
#include "cgsam/graph.hpp"
#include "cgsam/io.hpp"
#include "cgsam/linalg.hpp"
#include "cgsam/metrics.hpp"
#include "cgsam/propagation.hpp"
#include "cgsam/scenes.hpp"
#include "cgsam/unscented.hpp"
#include "cgsam/variable.hpp"
