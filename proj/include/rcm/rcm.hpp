#pragma once

// Umbrella header.

#include "rcm/errors.hpp"
#include "rcm/rng.hpp"
#include "rcm/geometry.hpp"
#include "rcm/connectivity.hpp"
#include "rcm/rc_core.hpp"
#include "rcm/glauber.hpp"
#include "rcm/cftp.hpp"
#include "rcm/stats.hpp"
#include "rcm/parallel.hpp"
#include "rcm/coarse.hpp"
#include "rcm/polymer.hpp"
#include "rcm/io.hpp"
