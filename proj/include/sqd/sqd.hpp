#pragma once

#include "sqd/analysis.hpp"
#include "sqd/davidson.hpp"
#include "sqd/errors.hpp"
#include "sqd/integrals.hpp"
#include "sqd/io.hpp"
#include "sqd/parallel.hpp"
#include "sqd/random.hpp"
#include "sqd/recovery.hpp"
#include "sqd/sampler.hpp"
#include "sqd/slater_condon.hpp"
#include "sqd/solver.hpp"
#include "sqd/system.hpp"
#include "sqd/workflow.hpp"
