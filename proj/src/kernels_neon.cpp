// NEON kernel variants for aarch64 (128-bit, 2 doubles per lane).

#include "neuroddaf/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

namespace neuroddaf::kernels {
namespace {

double n_dot(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

void n_axpy(double a, const double* x, double* y, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void n_scale(const double* x, double a, double* out, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
    for (; i < n; ++i) out[i] = a * x[i];
}

void n_add(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(o + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) o[i] = a[i] + b[i];
}

void n_sub(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(o + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) o[i] = a[i] - b[i];
}

void n_mul(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(o + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) o[i] = a[i] * b[i];
}

void n_fmadd(const double* a, const double* b, double* o, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(o + i, vfmaq_f64(vld1q_f64(o + i), vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) o[i] += a[i] * b[i];
}

double n_sum(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double n_sumsq(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(x + i);
        acc = vfmaq_f64(acc, v, v);
    }
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

double n_max_abs(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vmaxq_f64(acc, vabsq_f64(vld1q_f64(x + i)));
    double m = vmaxvq_f64(acc);
    for (; i < n; ++i) m = std::max(m, std::fabs(x[i]));
    return m;
}

const Backend kNeon = {
    "neon", n_dot, n_axpy, n_scale, n_add, n_sub, n_mul, n_fmadd,
    n_sum, n_sumsq, n_max_abs,
};

} // namespace

const Backend* simd_backend_neon() { return &kNeon; }

} // namespace neuroddaf::kernels

#endif // aarch64
