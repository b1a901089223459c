#pragma once

#include "caleb/harness/config.hpp"
#include "caleb/harness/context.hpp"
#include "caleb/harness/experiments.hpp"
#include "caleb/harness/report.hpp"
