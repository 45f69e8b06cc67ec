#pragma once

#include "capopt/core.hpp"
#include "capopt/touchstone.hpp"
#include "capopt/network.hpp"
#include "capopt/analysis.hpp"
#include "capopt/scoring.hpp"
#include "capopt/transient.hpp"
#include "capopt/ga.hpp"
#include "capopt/pipeline.hpp"
#include "capopt/config.hpp"
#include "capopt/synthetic.hpp"
