#pragma once

#include "mimo/model/attention.hpp"
#include "mimo/model/config.hpp"
#include "mimo/model/layers.hpp"
#include "mimo/model/model.hpp"
#include "mimo/model/parameters.hpp"
#include "mimo/model/probes.hpp"
