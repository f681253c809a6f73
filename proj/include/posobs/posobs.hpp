#pragma once

#include "posobs/conditions.hpp"
#include "posobs/cone.hpp"
#include "posobs/eigen.hpp"
#include "posobs/error.hpp"
#include "posobs/lp.hpp"
#include "posobs/matrix.hpp"
#include "posobs/sim.hpp"
#include "posobs/solve.hpp"
#include "posobs/synthesis.hpp"
#include "posobs/system.hpp"
