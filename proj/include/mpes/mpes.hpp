#pragma once

#include "mpes/config.hpp"
#include "mpes/csv.hpp"
#include "mpes/diagnostics.hpp"
#include "mpes/error.hpp"
#include "mpes/evidence.hpp"
#include "mpes/math.hpp"
#include "mpes/model.hpp"
#include "mpes/priors.hpp"
#include "mpes/report.hpp"
#include "mpes/sampler.hpp"
#include "mpes/strata.hpp"
#include "mpes/run.hpp"
