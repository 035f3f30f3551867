#include "neuroddaf/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace neuroddaf::kernels {

#if defined(__x86_64__) || defined(_M_X64)
const Backend* simd_backend_avx2();
#endif
#if defined(__aarch64__)
const Backend* simd_backend_neon();
#endif

namespace {

const Backend* detect_simd() {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return simd_backend_avx2();
    return nullptr;
#elif defined(__aarch64__)
    return simd_backend_neon();
#else
    return nullptr;
#endif
}

const Backend* g_active = nullptr;

const Backend* initial_backend() {
    if (const char* env = std::getenv("NEURODDAF_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return scalar_backend();
        if (const Backend* simd = detect_simd(); simd && std::strcmp(env, simd->name) == 0)
            return simd;
    }
    if (const Backend* simd = detect_simd()) return simd;
    return scalar_backend();
}

} // namespace

const Backend& active() {
    if (!g_active) g_active = initial_backend();
    return *g_active;
}

const Backend* simd_backend() { return detect_simd(); }

bool force_backend(const char* name) {
    if (std::strcmp(name, "scalar") == 0) {
        g_active = scalar_backend();
        return true;
    }
    if (const Backend* simd = detect_simd(); simd && std::strcmp(name, simd->name) == 0) {
        g_active = simd;
        return true;
    }
    return false;
}

void gemm_nn(const double* A, const double* B, double* C,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    const Backend& be = active();
    for (std::size_t i = 0; i < m; ++i) {
        double* c_row = C + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
        const double* a_row = A + i * k;
        for (std::size_t p = 0; p < k; ++p)
            be.axpy(a_row[p], B + p * n, c_row, n);
    }
}

void gemm_nt(const double* A, const double* B, double* C,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    const Backend& be = active();
    for (std::size_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            double v = be.dot(a_row, B + j * k, k);
            c_row[j] = accumulate ? c_row[j] + v : v;
        }
    }
}

void gemm_tn(const double* A, const double* B, double* C,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    const Backend& be = active();
    if (!accumulate)
        for (std::size_t i = 0; i < m * n; ++i) C[i] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double* a_row = A + p * m;
        const double* b_row = B + p * n;
        for (std::size_t i = 0; i < m; ++i)
            be.axpy(a_row[i], b_row, C + i * n, n);
    }
}

} // namespace neuroddaf::kernels
