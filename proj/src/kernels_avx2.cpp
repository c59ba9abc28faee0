// AVX2 variants. Built with -mavx2 in its own TU; only reached after a
// runtime cpuid check. Elementwise ops keep one IEEE operation per lane so
// results are bit-identical to the scalar backend; reductions use four
// partial accumulators and differ from scalar only in rounding.
#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include "otrecon/kernels.hpp"

namespace otrecon::kernels::detail {

namespace {

void mul_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void div_f64(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] / b[i];
}

void scale_f64(double* y, double a, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), va));
    for (; i < n; ++i) y[i] *= a;
}

void add_scaled_f64(double* y, const double* x, double a, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_f64(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_f64(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) s += a[i];
    return s;
}

void cmul_f64(const double* a, const double* b, double* out, std::size_t n) {
    // two interleaved complex values per 256-bit vector
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        __m256d va = _mm256_loadu_pd(a + 2 * i); // ar0 ai0 ar1 ai1
        __m256d vb = _mm256_loadu_pd(b + 2 * i);
        __m256d br = _mm256_movedup_pd(vb);                  // br0 br0 br1 br1
        __m256d bi = _mm256_permute_pd(vb, 0xF);             // bi0 bi0 bi1 bi1
        __m256d swapped = _mm256_permute_pd(va, 0x5);        // ai0 ar0 ai1 ar1
        __m256d t = _mm256_mul_pd(swapped, bi);              // ai*bi ar*bi ...
        __m256d r = _mm256_addsub_pd(_mm256_mul_pd(va, br), t);
        _mm256_storeu_pd(out + 2 * i, r);
    }
    for (; i < n; ++i) {
        double ar = a[2 * i], ai = a[2 * i + 1];
        double br = b[2 * i], bi = b[2 * i + 1];
        out[2 * i] = ar * br - ai * bi;
        out[2 * i + 1] = ar * bi + ai * br;
    }
}

void prelu_f64(const double* x, double slope, double* y, std::size_t n) {
    __m256d vs = _mm256_set1_pd(slope);
    __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(y + i, _mm256_blendv_pd(_mm256_mul_pd(vx, vs), vx, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void prelu_backward_f64(const double* x, double slope, const double* gy, double* gx, std::size_t n) {
    __m256d vs = _mm256_set1_pd(slope);
    __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d vg = _mm256_loadu_pd(gy + i);
        __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(gx + i, _mm256_blendv_pd(_mm256_mul_pd(vg, vs), vg, mask));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : slope * gy[i];
}

double dot_negpart_f64(const double* x, const double* gy, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d keep = _mm256_cmp_pd(vx, zero, _CMP_GT_OQ); // drop x>0 lanes
        __m256d prod = _mm256_mul_pd(vx, _mm256_loadu_pd(gy + i));
        acc = _mm256_add_pd(acc, _mm256_andnot_pd(keep, prod));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i)
        if (!(x[i] > 0.0)) s += x[i] * gy[i];
    return s;
}

void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f32(float* y, float a, std::size_t n) {
    __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), va));
    for (; i < n; ++i) y[i] *= a;
}

void add_scaled_f32(float* y, const float* x, float a, std::size_t n) {
    __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_f32(const float* a, const float* b, std::size_t n) {
    // widen to f64 before accumulating, same as the scalar reference
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 va = _mm256_loadu_ps(a + i);
        __m256 vb = _mm256_loadu_ps(b + i);
        __m256d lo = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                                   _mm256_cvtps_pd(_mm256_castps256_ps128(vb)));
        __m256d hi = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                                   _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)));
        acc0 = _mm256_add_pd(acc0, lo);
        acc1 = _mm256_add_pd(acc1, hi);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

double sum_f32(const float* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm_loadu_ps(a + i)));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i) s += static_cast<double>(a[i]);
    return s;
}

void prelu_f32(const float* x, float slope, float* y, std::size_t n) {
    __m256 vs = _mm256_set1_ps(slope);
    __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vx = _mm256_loadu_ps(x + i);
        __m256 mask = _mm256_cmp_ps(vx, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(vx, vs), vx, mask));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void prelu_backward_f32(const float* x, float slope, const float* gy, float* gx, std::size_t n) {
    __m256 vs = _mm256_set1_ps(slope);
    __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vx = _mm256_loadu_ps(x + i);
        __m256 vg = _mm256_loadu_ps(gy + i);
        __m256 mask = _mm256_cmp_ps(vx, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(gx + i, _mm256_blendv_ps(_mm256_mul_ps(vg, vs), vg, mask));
    }
    for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
}

double dot_negpart_f32(const float* x, const float* gy, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
    __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vx = _mm256_loadu_ps(x + i);
        __m256 keep = _mm256_cmp_ps(vx, zero, _CMP_GT_OQ);
        __m256 vxm = _mm256_andnot_ps(keep, vx);
        __m256 vg = _mm256_loadu_ps(gy + i);
        __m256d lo = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vxm)),
                                   _mm256_cvtps_pd(_mm256_castps256_ps128(vg)));
        __m256d hi = _mm256_mul_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vxm, 1)),
                                   _mm256_cvtps_pd(_mm256_extractf128_ps(vg, 1)));
        acc0 = _mm256_add_pd(acc0, lo);
        acc1 = _mm256_add_pd(acc1, hi);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; ++i)
        if (!(x[i] > 0.0f)) s += static_cast<double>(x[i]) * static_cast<double>(gy[i]);
    return s;
}

} // namespace

extern const OpsF64 avx2_ops_f64;
const OpsF64 avx2_ops_f64 = {
    mul_f64, div_f64, scale_f64, add_scaled_f64,
    dot_f64, sum_f64, cmul_f64,
    prelu_f64, prelu_backward_f64, dot_negpart_f64,
};

extern const OpsF32 avx2_ops_f32;
const OpsF32 avx2_ops_f32 = {
    mul_f32, scale_f32, add_scaled_f32,
    dot_f32, sum_f32,
    prelu_f32, prelu_backward_f32, dot_negpart_f32,
};

} // namespace otrecon::kernels::detail

#endif // x86
