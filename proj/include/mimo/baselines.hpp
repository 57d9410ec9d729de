#pragma once

#include "mimo/baselines/ar1.hpp"
#include "mimo/baselines/rollout.hpp"
