#pragma once

#include "common.hpp"
#include "rng.hpp"
#include "parallel.hpp"
#include "table.hpp"
#include "graph.hpp"
#include "spa.hpp"
#include "covers.hpp"
#include "perm.hpp"
#include "coeffs.hpp"
#include "perm_approx.hpp"
#include "lct.hpp"
#include "sst.hpp"
#include "gct.hpp"
#include "io.hpp"
