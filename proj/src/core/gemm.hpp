#pragma once

#include <cstddef>

namespace ditcod::detail {

/// C[m,n] (+)= op(A)[m,k] * op(B)[k,n] on row-major buffers. With trans_a, A is
/// stored as [k,m]; with trans_b, B is stored as [n,k].
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

}  // namespace ditcod::detail
