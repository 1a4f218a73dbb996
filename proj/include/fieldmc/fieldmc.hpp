#pragma once

// Umbrella header: the full public surface of the library.

#include "fieldmc/config.hpp"
#include "fieldmc/darcy.hpp"
#include "fieldmc/driver.hpp"
#include "fieldmc/errors.hpp"
#include "fieldmc/estimators.hpp"
#include "fieldmc/grid.hpp"
#include "fieldmc/moments.hpp"
#include "fieldmc/report.hpp"
#include "fieldmc/rng.hpp"
#include "fieldmc/sample.hpp"
#include "fieldmc/scheduler.hpp"
#include "fieldmc/spde.hpp"
#include "fieldmc/synthetic.hpp"
#include "fieldmc/transport.hpp"
#include "fieldmc/verify.hpp"
