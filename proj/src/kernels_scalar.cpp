#include "neuroddaf/kernels.hpp"

#include <cmath>

namespace neuroddaf::kernels {
namespace {

double s_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_scale(const double* x, double a, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void s_add(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

void s_fmadd(const double* a, const double* b, double* o, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) o[i] += a[i] * b[i];
}

double s_sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double s_sumsq(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

double s_max_abs(const double* x, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
    return m;
}

const Backend kScalar = {
    "scalar", s_dot, s_axpy, s_scale, s_add, s_sub, s_mul, s_fmadd,
    s_sum, s_sumsq, s_max_abs,
};

} // namespace

const Backend* scalar_backend() { return &kScalar; }

} // namespace neuroddaf::kernels
