#pragma once

#include "ppshare/covariance.hpp"
#include "ppshare/density.hpp"
#include "ppshare/design.hpp"
#include "ppshare/diagnostics.hpp"
#include "ppshare/errors.hpp"
#include "ppshare/fit.hpp"
#include "ppshare/geometry.hpp"
#include "ppshare/io.hpp"
#include "ppshare/logistic.hpp"
#include "ppshare/mcmc.hpp"
#include "ppshare/model.hpp"
#include "ppshare/random.hpp"
#include "ppshare/report.hpp"
#include "ppshare/scenarios.hpp"
#include "ppshare/simulate.hpp"
#include "ppshare/stats.hpp"
#include "ppshare/summary.hpp"
#include "ppshare/targets.hpp"
