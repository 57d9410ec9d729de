#pragma once

#include "mimo/cli/app.hpp"
#include "mimo/cli/commands.hpp"
#include "mimo/cli/run_config.hpp"
