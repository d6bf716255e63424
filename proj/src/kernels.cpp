// SPDX-License-Identifier: Apache-2.0
#include "kernels.hpp"

#include <Eigen/Core>

#include <algorithm>

namespace liftrefine::kernels {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// Below this many multiply-adds a plain loop beats the blocked library kernel.
constexpr std::int64_t kSmallProduct = 8192;

void gemm_small(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
                const double* b, double* c) {
    for (std::int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = trans_a ? a[p * m + i] : a[i * k + p];
            if (trans_b) {
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
            } else {
                const double* brow = b + p * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

} // namespace

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
          const double* b, double* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    if (m == 0 || n == 0 || k == 0) return;
    if (m * n * k <= kSmallProduct) {
        gemm_small(trans_a, trans_b, m, n, k, a, b, c);
        return;
    }
    Eigen::Map<RowMajor> cm(c, m, n);
    // A stored [K,M] row-major is A^T; viewing it column-major [M,K] gives A.
    if (trans_a) {
        Eigen::Map<const ColMajor> am(a, m, k);
        if (trans_b) {
            cm.noalias() += am * Eigen::Map<const ColMajor>(b, k, n);
        } else {
            cm.noalias() += am * Eigen::Map<const RowMajor>(b, k, n);
        }
    } else {
        Eigen::Map<const RowMajor> am(a, m, k);
        if (trans_b) {
            cm.noalias() += am * Eigen::Map<const ColMajor>(b, k, n);
        } else {
            cm.noalias() += am * Eigen::Map<const RowMajor>(b, k, n);
        }
    }
}

} // namespace liftrefine::kernels
