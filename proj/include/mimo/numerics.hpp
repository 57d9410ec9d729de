#pragma once

#include "mimo/error.hpp"
#include "mimo/numerics/conv.hpp"
#include "mimo/numerics/grad_check.hpp"
#include "mimo/numerics/ops.hpp"
#include "mimo/numerics/rng.hpp"
#include "mimo/numerics/tensor.hpp"
