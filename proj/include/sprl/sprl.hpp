#pragma once

#include "sprl/core.hpp"
#include "sprl/mrp.hpp"
#include "sprl/env.hpp"
#include "sprl/features.hpp"
#include "sprl/solvers.hpp"
#include "sprl/recovery.hpp"
#include "sprl/harness.hpp"
