#pragma once

#include <memory>
#include <span>
#include <vector>

#include "otrecon/fft.hpp"
#include "otrecon/grid.hpp"

namespace otrecon::transport {

// Ground cost c(x0, x1) between grid points, translation invariant.
struct TransportCost {
    enum class Form { SquaredDistance, BoundedQuartic };

    Form form = Form::SquaredDistance;
    double sigma = 1.0; // length scale of the bounded cost

    // c(0, (dx, dy)) in length units.
    double operator()(double dx, double dy) const;

    // p such that c = d(.,.)^p for a metric d (2 for squared distance,
    // 4 for the bounded quartic).
    double exponent() const { return form == Form::SquaredDistance ? 2.0 : 4.0; }
};

struct EntropicOTConfig {
    double epsilon = 1e-3; // entropy weight
    int iterations = 10;   // fixed Sinkhorn depth N
    double rho = 1e-6;     // background floor applied to both marginals
};

// Displacement-indexed tables of K = exp(-c/eps) and c, the truncated
// support of K, and the cached spectra of the circulant embedding. Immutable
// after build_stencil; safe to share across threads.
struct KernelStencil {
    PixelGrid grid;
    TransportCost cost;
    double epsilon = 0.0;

    // set when every off-center kernel entry underflowed to exactly 0;
    // the loss is still computable but its gradients are degenerate
    bool underflow_warning = false;

    // tables over displacements di in (-w, w), dj in (-h, h),
    // index (dj + h - 1)*(2w - 1) + (di + w - 1)
    std::vector<double> kernel_vals;
    std::vector<double> cost_vals;

    // displacements with K > 0, for the direct (cancellation-free) path
    struct Tap {
        int di, dj;
        double k, kc;
    };
    std::vector<Tap> support;

    // circulant embedding, pad per axis >= 2*dim - 1 rounded to a power of two
    int pad_w = 0, pad_h = 0;
    std::vector<double> kernel_spec;      // FFT of embedded K, interleaved complex
    std::vector<double> kernel_cost_spec; // FFT of embedded K .* C
    std::shared_ptr<const Fft2D> fft;

    double kernel_at(int di, int dj) const;
    double cost_at(int di, int dj) const;
    double max_cost() const; // max over realizable displacements
};

KernelStencil build_stencil(const PixelGrid& grid, const TransportCost& cost, double epsilon);

// Scratch buffer for the spectral path so hot loops do not reallocate.
struct SpectralWorkspace {
    std::vector<double> buf;
};

// y = K x (or K^T x) by zero-padded spectral convolution, O(n log n). The
// kernel is symmetric, so transpose only documents the call site. The
// spectral path sums positive and negative terms and loses accuracy once
// the dynamic range of x approaches 1/eps_machine; sinkhorn uses the
// direct variants below for that reason.
void apply_kernel(const KernelStencil& st, const double* x, double* y,
                  SpectralWorkspace& ws, bool transpose = false);
std::vector<double> apply_kernel(const KernelStencil& st, const std::vector<double>& x,
                                 bool transpose = false);

// y = (K .* C) x by spectral convolution with the elementwise product stencil.
void apply_kernel_cost(const KernelStencil& st, const double* x, double* y, SpectralWorkspace& ws);
std::vector<double> apply_kernel_cost(const KernelStencil& st, const std::vector<double>& x);

// Same linear operators evaluated as direct sums over the truncated support.
// All terms are nonnegative for nonnegative x, so the result is exact up to
// rounding regardless of the dynamic range of x.
void apply_kernel_direct(const KernelStencil& st, const double* x, double* y);
void apply_kernel_cost_direct(const KernelStencil& st, const double* x, double* y);

// Fixed-depth Sinkhorn trajectories plus the transport value u_N^T (K.*C) v_N.
struct SinkhornRun {
    PixelGrid grid;
    EntropicOTConfig config;
    // N+1 vectors each; u[0] = v[0] = ones. u[i], v[i] are the iterates
    // after the i-th update pair.
    std::vector<std::vector<double>> u;
    std::vector<std::vector<double>> v;
    // recurrence denominators kept for the reverse pass:
    // kv[i-1] = K v_{i-1}, ktu[i-1] = K^T u_i, for i = 1..N
    std::vector<std::vector<double>> kv;
    std::vector<std::vector<double>> ktu;
    double value = 0.0;
    // max-norm gap between the column sums of the plan entering the final
    // v-update, diag(u_N) K diag(v_{N-1}), and mu1
    double marginal_residual = 0.0;
};

// Runs exactly config.iterations updates u <- mu0./(K v), v <- mu1./(K^T u)
// from v0 = ones. Marginals must be nonnegative with equal mass to 1e-9
// relative; if config.rho > 0 the background floor is applied internally,
// otherwise both marginals must already be strictly positive.
SinkhornRun sinkhorn(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                     const KernelStencil& st, const EntropicOTConfig& config);

// Internal entry point used by the loss: skips the nonnegativity check so a
// network output with slightly negative pixels can still be evaluated, and
// reports breakdowns instead of contract errors.
SinkhornRun sinkhorn_unchecked(const std::vector<double>& mu0, const std::vector<double>& mu1,
                               const KernelStencil& st, const EntropicOTConfig& config);

struct SinkhornGrad {
    std::vector<double> wrt_mu0;
    std::vector<double> wrt_mu1;
};

// Exact gradient of the fixed-depth unrolled value with respect to both
// marginals as passed to sinkhorn (the background chain, if any, is included).
// Each reverse step costs two kernel applications.
SinkhornGrad sinkhorn_grad(const SinkhornRun& run, const KernelStencil& st);

// Exact optimal transport value of the discrete Kantorovich LP between the
// strictly positive atoms of mu0 and mu1, solved by successive-shortest-path
// min-cost flow with costs scaled to integers by 1e12. Test oracle; at most
// 256 positive atoms per side.
double exact_transport(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                       const TransportCost& cost);

// W_p from a transport value: value^(1/p).
double wasserstein_p(double value, double p);

// (1 - exp(-||x1 - x2||^n))^(1/n); a metric on R^m for n >= 1.
double metric_cost(std::span<const double> x1, std::span<const double> x2, double n);

} // namespace otrecon::transport
