#pragma once
// Array kernels used by the tensor and solver inner loops.
// A scalar reference implementation always exists; on x86-64 an AVX2+FMA
// variant and on aarch64 a NEON variant are selected at runtime.
// Set NEURODDAF_KERNELS=scalar|avx2|neon to pin a backend.

#include <cstddef>

namespace neuroddaf::kernels {

struct Backend {
    const char* name;
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);       // y += a*x
    void (*scale)(const double*, double, double*, std::size_t);      // out = a*x
    void (*add)(const double*, const double*, double*, std::size_t);
    void (*sub)(const double*, const double*, double*, std::size_t);
    void (*mul)(const double*, const double*, double*, std::size_t);
    void (*fmadd)(const double*, const double*, double*, std::size_t); // out += a*b
    double (*sum)(const double*, std::size_t);
    double (*sumsq)(const double*, std::size_t);
    double (*max_abs)(const double*, std::size_t);
};

// Active backend (runtime-dispatched once, overridable via env var).
const Backend& active();

// Named backends for equivalence testing. Returns nullptr when the
// instruction set is unavailable on this machine.
const Backend* scalar_backend();
const Backend* simd_backend();

// Force a backend by name; returns false if unknown/unavailable.
bool force_backend(const char* name);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double a, const double* x, double* y, std::size_t n) { active().axpy(a, x, y, n); }
inline void scale(const double* x, double a, double* out, std::size_t n) { active().scale(x, a, out, n); }
inline void add(const double* a, const double* b, double* o, std::size_t n) { active().add(a, b, o, n); }
inline void sub(const double* a, const double* b, double* o, std::size_t n) { active().sub(a, b, o, n); }
inline void mul(const double* a, const double* b, double* o, std::size_t n) { active().mul(a, b, o, n); }
inline void fmadd(const double* a, const double* b, double* o, std::size_t n) { active().fmadd(a, b, o, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline double sumsq(const double* x, std::size_t n) { return active().sumsq(x, n); }
inline double max_abs(const double* x, std::size_t n) { return active().max_abs(x, n); }

// Row-major matrix products built on the dispatched kernels.
// C(m,n) = A(m,k) * B(k,n)        [+ C when accumulate]
void gemm_nn(const double* A, const double* B, double* C,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
// C(m,n) = A(m,k) * B(n,k)^T
void gemm_nt(const double* A, const double* B, double* C,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
// C(m,n) = A(k,m)^T * B(k,n)
void gemm_tn(const double* A, const double* B, double* C,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

} // namespace neuroddaf::kernels
