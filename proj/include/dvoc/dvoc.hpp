#pragma once

// Umbrella header: the full simulator and certification toolkit for
// inverter-based AC networks under decentralized grid-forming control.

#include "dvoc/core.hpp"
#include "dvoc/network.hpp"
#include "dvoc/setpoints.hpp"
#include "dvoc/control.hpp"
#include "dvoc/system.hpp"
#include "dvoc/integrate.hpp"
#include "dvoc/simulate.hpp"
#include "dvoc/certify.hpp"
#include "dvoc/linstab.hpp"
#include "dvoc/cases.hpp"
#include "dvoc/io.hpp"
