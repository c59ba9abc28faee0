#include "otrecon/kernels.hpp"

namespace otrecon::kernels::detail {

namespace {

template <typename T>
void mul_t(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void div_t(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

template <typename T>
void scale_t(T* y, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

template <typename T>
void add_scaled_t(T* y, const T* x, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
double dot_t(const T* a, const T* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

template <typename T>
double sum_t(const T* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]);
    return s;
}

void cmul_f64(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        double ar = a[2 * i], ai = a[2 * i + 1];
        double br = b[2 * i], bi = b[2 * i + 1];
        out[2 * i] = ar * br - ai * bi;
        out[2 * i + 1] = ar * bi + ai * br;
    }
}

template <typename T>
void prelu_t(const T* x, T slope, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void prelu_backward_t(const T* x, T slope, const T* gy, T* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > T(0) ? gy[i] : slope * gy[i];
}

template <typename T>
double dot_negpart_t(const T* x, const T* gy, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (!(x[i] > T(0))) s += static_cast<double>(x[i]) * static_cast<double>(gy[i]);
    return s;
}

} // namespace

extern const OpsF64 scalar_ops_f64;
const OpsF64 scalar_ops_f64 = {
    mul_t<double>, div_t<double>, scale_t<double>, add_scaled_t<double>,
    dot_t<double>, sum_t<double>, cmul_f64,
    prelu_t<double>, prelu_backward_t<double>, dot_negpart_t<double>,
};

extern const OpsF32 scalar_ops_f32;
const OpsF32 scalar_ops_f32 = {
    mul_t<float>, scale_t<float>, add_scaled_t<float>,
    dot_t<float>, sum_t<float>,
    prelu_t<float>, prelu_backward_t<float>, dot_negpart_t<float>,
};

} // namespace otrecon::kernels::detail
