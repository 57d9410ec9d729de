#pragma once

#include "mimo/metrics/metrics.hpp"
