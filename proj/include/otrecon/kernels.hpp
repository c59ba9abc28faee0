#pragma once

#include <cstddef>

// Flat arithmetic kernels behind runtime CPU dispatch. The scalar backend is
// the reference; the AVX2 and NEON backends must agree with it bit-for-bit on
// the elementwise ops (mul, div, scale, add_scaled, prelu) and to rounding
// error on the reductions (dot, sum, dot_negpart), whose accumulation order
// differs. Backend selection happens once at first use; set_backend exists
// for the equivalence tests and for the OTRECON_KERNEL_BACKEND env override.

namespace otrecon::kernels {

enum class Backend { Auto, Scalar, Avx2, Neon };

// Returns false if the requested backend is unavailable on this CPU.
bool set_backend(Backend b);
Backend active_backend();
const char* backend_name();

struct OpsF64 {
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    void (*div)(const double* a, const double* b, double* out, std::size_t n);
    void (*scale)(double* y, double a, std::size_t n);
    void (*add_scaled)(double* y, const double* x, double a, std::size_t n); // y += a*x
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    // interleaved complex product: out[k] = a[k]*b[k], n complex pairs
    void (*cmul)(const double* a, const double* b, double* out, std::size_t n);
    void (*prelu)(const double* x, double slope, double* y, std::size_t n);
    void (*prelu_backward)(const double* x, double slope, const double* gy, double* gx, std::size_t n);
    double (*dot_negpart)(const double* x, const double* gy, std::size_t n); // sum over x<0 of x*gy
};

struct OpsF32 {
    void (*mul)(const float* a, const float* b, float* out, std::size_t n);
    void (*scale)(float* y, float a, std::size_t n);
    void (*add_scaled)(float* y, const float* x, float a, std::size_t n);
    double (*dot)(const float* a, const float* b, std::size_t n); // accumulates in f64
    double (*sum)(const float* a, std::size_t n);
    void (*prelu)(const float* x, float slope, float* y, std::size_t n);
    void (*prelu_backward)(const float* x, float slope, const float* gy, float* gx, std::size_t n);
    double (*dot_negpart)(const float* x, const float* gy, std::size_t n);
};

const OpsF64& f64();
const OpsF32& f32();

// Reference backend, exposed so tests can compare against the active one.
const OpsF64& scalar_f64();
const OpsF32& scalar_f32();

// Convenience overload set used by templated callers.
inline void mul(const double* a, const double* b, double* o, std::size_t n) { f64().mul(a, b, o, n); }
inline void mul(const float* a, const float* b, float* o, std::size_t n) { f32().mul(a, b, o, n); }
inline void div(const double* a, const double* b, double* o, std::size_t n) { f64().div(a, b, o, n); }
inline void scale(double* y, double a, std::size_t n) { f64().scale(y, a, n); }
inline void scale(float* y, float a, std::size_t n) { f32().scale(y, a, n); }
inline void add_scaled(double* y, const double* x, double a, std::size_t n) { f64().add_scaled(y, x, a, n); }
inline void add_scaled(float* y, const float* x, float a, std::size_t n) { f32().add_scaled(y, x, a, n); }
inline double dot(const double* a, const double* b, std::size_t n) { return f64().dot(a, b, n); }
inline double dot(const float* a, const float* b, std::size_t n) { return f32().dot(a, b, n); }
inline double sum(const double* a, std::size_t n) { return f64().sum(a, n); }
inline double sum(const float* a, std::size_t n) { return f32().sum(a, n); }
inline void cmul(const double* a, const double* b, double* o, std::size_t n) { f64().cmul(a, b, o, n); }
inline void prelu(const double* x, double s, double* y, std::size_t n) { f64().prelu(x, s, y, n); }
inline void prelu(const float* x, float s, float* y, std::size_t n) { f32().prelu(x, s, y, n); }
inline void prelu_backward(const double* x, double s, const double* gy, double* gx, std::size_t n) {
    f64().prelu_backward(x, s, gy, gx, n);
}
inline void prelu_backward(const float* x, float s, const float* gy, float* gx, std::size_t n) {
    f32().prelu_backward(x, s, gy, gx, n);
}
inline double dot_negpart(const double* x, const double* gy, std::size_t n) { return f64().dot_negpart(x, gy, n); }
inline double dot_negpart(const float* x, const float* gy, std::size_t n) { return f32().dot_negpart(x, gy, n); }

} // namespace otrecon::kernels
