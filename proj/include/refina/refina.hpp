#pragma once

#include "refina/alignment.hpp"
#include "refina/error.hpp"
#include "refina/graph.hpp"
#include "refina/harness.hpp"
#include "refina/init.hpp"
#include "refina/metrics.hpp"
#include "refina/mnc.hpp"
#include "refina/refine.hpp"
