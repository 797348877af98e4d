#pragma once

#include "overshoot/errors.hpp"
#include "overshoot/metrics.hpp"
#include "overshoot/objective.hpp"
#include "overshoot/objectives.hpp"
#include "overshoot/optim.hpp"
#include "overshoot/params.hpp"
#include "overshoot/rng.hpp"
#include "overshoot/simulate.hpp"
#include "overshoot/config.hpp"
#include "overshoot/runner.hpp"
#include "overshoot/report.hpp"
