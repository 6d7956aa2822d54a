#pragma once

#include "gridshield/battery.hpp"
#include "gridshield/dq.hpp"
#include "gridshield/ems.hpp"
#include "gridshield/errors.hpp"
#include "gridshield/generator.hpp"
#include "gridshield/integrator.hpp"
#include "gridshield/load.hpp"
#include "gridshield/microgrid.hpp"
#include "gridshield/output.hpp"
#include "gridshield/qp.hpp"
#include "gridshield/scenario.hpp"
#include "gridshield/scenario_io.hpp"
#include "gridshield/sim.hpp"
