#pragma once

#include <vector>

#include "cgra/tensor.h"

namespace cgra::kernels {

namespace serial {
#include "cgra/kernels_api.inc"
}  // namespace serial

namespace parallel {
#include "cgra/kernels_api.inc"
}  // namespace parallel

// Model code calls through this alias.
namespace active = parallel;

Real sigmoid(Real x) noexcept;

// Number of OpenMP threads the parallel kernels will use.
int thread_count();
void set_thread_count(int n);

}  // namespace cgra::kernels
