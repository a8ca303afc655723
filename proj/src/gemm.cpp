#include "mffa/gemm.hpp"

namespace mffa {

namespace {
constexpr int kBlockK = 64;
constexpr int kBlockM = 32;
}  // namespace

void gemm_nn(const real* a, const real* b, real* c, int m, int k, int n) {
    // i-k-j order: the inner loop runs over contiguous rows of B and C, which
    // the compiler vectorizes.
    for (int i0 = 0; i0 < m; i0 += kBlockM) {
        int i1 = i0 + kBlockM < m ? i0 + kBlockM : m;
        for (int k0 = 0; k0 < k; k0 += kBlockK) {
            int k1 = k0 + kBlockK < k ? k0 + kBlockK : k;
            for (int i = i0; i < i1; ++i) {
                const real* arow = a + static_cast<size_t>(i) * k;
                real* crow = c + static_cast<size_t>(i) * n;
                for (int kk = k0; kk < k1; ++kk) {
                    real av = arow[kk];
                    if (av == 0.0) continue;
                    const real* brow = b + static_cast<size_t>(kk) * n;
                    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
            }
        }
    }
}

void gemm_nt(const real* a, const real* b, real* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const real* arow = a + static_cast<size_t>(i) * k;
        real* crow = c + static_cast<size_t>(i) * n;
        int j = 0;
        for (; j + 4 <= n; j += 4) {
            const real* b0 = b + static_cast<size_t>(j) * k;
            const real* b1 = b0 + k;
            const real* b2 = b1 + k;
            const real* b3 = b2 + k;
            real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (int kk = 0; kk < k; ++kk) {
                real av = arow[kk];
                s0 += av * b0[kk];
                s1 += av * b1[kk];
                s2 += av * b2[kk];
                s3 += av * b3[kk];
            }
            crow[j] += s0;
            crow[j + 1] += s1;
            crow[j + 2] += s2;
            crow[j + 3] += s3;
        }
        for (; j < n; ++j) {
            const real* brow = b + static_cast<size_t>(j) * k;
            real s = 0;
            for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            crow[j] += s;
        }
    }
}

void gemm_tn(const real* a, const real* b, real* c, int m, int k, int n) {
    for (int kk = 0; kk < k; ++kk) {
        const real* arow = a + static_cast<size_t>(kk) * m;
        const real* brow = b + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            real av = arow[i];
            if (av == 0.0) continue;
            real* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace mffa
