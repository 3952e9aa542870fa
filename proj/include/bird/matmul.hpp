#pragma once

#include <vector>

namespace bird {

// C (m x n) += A (m x k) * B (k x n), all row-major contiguous.
// Accumulation over k is strictly sequential per output element, so results
// are bit-identical across runs.
void gemm_acc(const double* A, const double* B, double* C, int m, int k, int n);

// AT (cols x rows) = transpose of A (rows x cols).
void transpose(const double* A, double* AT, int rows, int cols);

}  // namespace bird
