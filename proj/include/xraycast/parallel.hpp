#pragma once

namespace xraycast {

/// Worker threads used by the pixel- and slab-parallel kernels.
/// Results never depend on this value.
void set_num_threads(int threads);
int num_threads();

} // namespace xraycast
