#pragma once

#include "mimo/training/checkpoint.hpp"
#include "mimo/training/loss.hpp"
#include "mimo/training/optim.hpp"
#include "mimo/training/trainer.hpp"
