#include "otrecon/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace otrecon::kernels {

namespace detail {
extern const OpsF64 scalar_ops_f64;
extern const OpsF32 scalar_ops_f32;
#if defined(__x86_64__) || defined(__i386__)
extern const OpsF64 avx2_ops_f64;
extern const OpsF32 avx2_ops_f32;
#endif
#if defined(__aarch64__)
extern const OpsF64 neon_ops_f64;
extern const OpsF32 neon_ops_f32;
#endif
} // namespace detail

namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(__i386__)) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

struct Selection {
    Backend backend;
    const OpsF64* f64;
    const OpsF32* f32;
    const char* name;
};

Selection select(Backend want) {
    switch (want) {
    case Backend::Scalar:
        return {Backend::Scalar, &detail::scalar_ops_f64, &detail::scalar_ops_f32, "scalar"};
#if defined(__x86_64__) || defined(__i386__)
    case Backend::Avx2:
        if (cpu_has_avx2())
            return {Backend::Avx2, &detail::avx2_ops_f64, &detail::avx2_ops_f32, "avx2"};
        break;
#endif
#if defined(__aarch64__)
    case Backend::Neon:
        return {Backend::Neon, &detail::neon_ops_f64, &detail::neon_ops_f32, "neon"};
#endif
    default:
        break;
    }
    return {Backend::Scalar, &detail::scalar_ops_f64, &detail::scalar_ops_f32, "scalar"};
}

Backend auto_backend() {
    if (const char* env = std::getenv("OTRECON_KERNEL_BACKEND")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
        if (std::strcmp(env, "avx2") == 0) return Backend::Avx2;
        if (std::strcmp(env, "neon") == 0) return Backend::Neon;
    }
#if defined(__aarch64__)
    return Backend::Neon;
#else
    if (cpu_has_avx2()) return Backend::Avx2;
    return Backend::Scalar;
#endif
}

Selection g_selection = select(auto_backend());

} // namespace

bool set_backend(Backend b) {
    Backend want = b == Backend::Auto ? auto_backend() : b;
    Selection s = select(want);
    if (b != Backend::Auto && b != Backend::Scalar && s.backend != want) return false;
    g_selection = s;
    return true;
}

Backend active_backend() { return g_selection.backend; }
const char* backend_name() { return g_selection.name; }

const OpsF64& f64() { return *g_selection.f64; }
const OpsF32& f32() { return *g_selection.f32; }
const OpsF64& scalar_f64() { return detail::scalar_ops_f64; }
const OpsF32& scalar_f32() { return detail::scalar_ops_f32; }

} // namespace otrecon::kernels
