// NEON variants, compiled only on AArch64. Same contract as the AVX2 file:
// elementwise ops bit-identical to scalar, reductions equal to rounding.
#if defined(__aarch64__)

#include <arm_neon.h>

#include "otrecon/kernels.hpp"

namespace otrecon::kernels::detail {

namespace {

void mul_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void div_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vdivq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] / b[i];
}

void scale_f64(double* y, double a, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(vld1q_f64(y + i), va));
    for (; i < n; ++i) y[i] *= a;
}

void add_scaled_f64(double* y, const double* x, double a, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_f64(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_f64(const double* a, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
    double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) s += a[i];
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

void prelu_f64(const double* x, double slope, double* y, std::size_t n) {
    float64x2_t vs = vdupq_n_f64(slope);
    float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vx = vld1q_f64(x + i);
        uint64x2_t mask = vcgtq_f64(vx, zero);
        vst1q_f64(y + i, vbslq_f64(mask, vx, vmulq_f64(vx, vs)));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void prelu_backward_f64(const double* x, double slope, const double* gy, double* gx, std::size_t n) {
    float64x2_t vs = vdupq_n_f64(slope);
    float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t vx = vld1q_f64(x + i);
        float64x2_t vg = vld1q_f64(gy + i);
        uint64x2_t mask = vcgtq_f64(vx, zero);
        vst1q_f64(gx + i, vbslq_f64(mask, vg, vmulq_f64(vg, vs)));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : slope * gy[i];
}

double dot_negpart_f64(const double* x, const double* gy, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (!(x[i] > 0.0)) s += x[i] * gy[i];
    return s;
}

void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f32(float* y, float a, std::size_t n) {
    float32x4_t va = vdupq_n_f32(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmulq_f32(vld1q_f32(y + i), va));
    for (; i < n; ++i) y[i] *= a;
}

void add_scaled_f32(float* y, const float* x, float a, std::size_t n) {
    float32x4_t va = vdupq_n_f32(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t prod = vmulq_f32(va, vld1q_f32(x + i));
        vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_f32(const float* a, const float* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0), acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t va = vld1q_f32(a + i);
        float32x4_t vb = vld1q_f32(b + i);
        float64x2_t lo = vmulq_f64(vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
        float64x2_t hi = vmulq_f64(vcvt_f64_f32(vget_high_f32(va)), vcvt_f64_f32(vget_high_f32(vb)));
        acc0 = vaddq_f64(acc0, lo);
        acc1 = vaddq_f64(acc1, hi);
    }
    float64x2_t acc = vaddq_f64(acc0, acc1);
    double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

double sum_f32(const float* a, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vcvt_f64_f32(vld1_f32(a + i)));
    double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) s += static_cast<double>(a[i]);
    return s;
}

void prelu_f32(const float* x, float slope, float* y, std::size_t n) {
    float32x4_t vs = vdupq_n_f32(slope);
    float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t vx = vld1q_f32(x + i);
        uint32x4_t mask = vcgtq_f32(vx, zero);
        vst1q_f32(y + i, vbslq_f32(mask, vx, vmulq_f32(vx, vs)));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void prelu_backward_f32(const float* x, float slope, const float* gy, float* gx, std::size_t n) {
    float32x4_t vs = vdupq_n_f32(slope);
    float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t vx = vld1q_f32(x + i);
        float32x4_t vg = vld1q_f32(gy + i);
        uint32x4_t mask = vcgtq_f32(vx, zero);
        vst1q_f32(gx + i, vbslq_f32(mask, vg, vmulq_f32(vg, vs)));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
}

double dot_negpart_f32(const float* x, const float* gy, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (!(x[i] > 0.0f)) s += static_cast<double>(x[i]) * static_cast<double>(gy[i]);
    return s;
}

} // namespace

extern const OpsF64 neon_ops_f64;
const OpsF64 neon_ops_f64 = {
    mul_f64, div_f64, scale_f64, add_scaled_f64,
    dot_f64, sum_f64, cmul_f64,
    prelu_f64, prelu_backward_f64, dot_negpart_f64,
};

extern const OpsF32 neon_ops_f32;
const OpsF32 neon_ops_f32 = {
    mul_f32, scale_f32, add_scaled_f32,
    dot_f32, sum_f32,
    prelu_f32, prelu_backward_f32, dot_negpart_f32,
};

} // namespace otrecon::kernels::detail

#endif // __aarch64__
