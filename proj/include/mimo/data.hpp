#pragma once

#include "mimo/data/dataset.hpp"
#include "mimo/data/idx.hpp"
#include "mimo/data/sprites.hpp"
#include "mimo/data/vseq.hpp"
