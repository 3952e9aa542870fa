#include "bird/matmul.hpp"

namespace bird {

void gemm_acc(const double* A, const double* B, double* C, int m, int k, int n) {
    // Saxpy order (m, k, n): the inner loop streams one row of B into one row
    // of C, which vectorizes without reassociating the k-reduction.
    for (int i = 0; i < m; ++i) {
        double* crow = C + static_cast<size_t>(i) * n;
        const double* arow = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double a = arow[p];
            const double* brow = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

void transpose(const double* A, double* AT, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            AT[static_cast<size_t>(c) * rows + r] = A[static_cast<size_t>(r) * cols + c];
}

}  // namespace bird
