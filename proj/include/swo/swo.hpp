#pragma once

// Umbrella header for the switched-observer toolkit.

#include "swo/types.hpp"
#include "swo/model.hpp"
#include "swo/observability.hpp"
#include "swo/observers.hpp"
#include "swo/switching.hpp"
#include "swo/metrics.hpp"
#include "swo/scenario.hpp"
#include "swo/runner.hpp"
#include "swo/io.hpp"
