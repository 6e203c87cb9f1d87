#pragma once

#include <random>

namespace pd4ml {

// One engine type for every seeded stream (init, shuffling, dropout, synthesis).
using Rng = std::mt19937_64;

}  // namespace pd4ml
