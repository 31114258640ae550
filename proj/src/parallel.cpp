#include "xraycast/parallel.hpp"

#include <stdexcept>

#include <omp.h>

namespace xraycast {

void set_num_threads(int threads)
{
    if (threads < 1)
        throw std::invalid_argument("thread count must be >= 1");
    omp_set_num_threads(threads);
}

int num_threads() { return omp_get_max_threads(); }

} // namespace xraycast
