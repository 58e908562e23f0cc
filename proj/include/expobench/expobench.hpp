#pragma once

// Umbrella header.

#include "expobench/controllers.hpp"
#include "expobench/core.hpp"
#include "expobench/crf.hpp"
#include "expobench/dataset_io.hpp"
#include "expobench/emulator.hpp"
#include "expobench/error.hpp"
#include "expobench/features.hpp"
#include "expobench/methods.hpp"
#include "expobench/plugin.hpp"
#include "expobench/report.hpp"
#include "expobench/runner.hpp"
#include "expobench/stats.hpp"
#include "expobench/synth.hpp"
#include "expobench/trajectory.hpp"
