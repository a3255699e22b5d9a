#pragma once

#include <omp.h>

namespace ppower::detail {

inline int resolve_threads(int threads) { return threads > 0 ? threads : omp_get_max_threads(); }

}  // namespace ppower::detail
