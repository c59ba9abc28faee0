#include "otrecon/transport.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "otrecon/kernels.hpp"

namespace otrecon::transport {

double TransportCost::operator()(double dx, double dy) const {
    double d2 = dx * dx + dy * dy;
    if (form == Form::SquaredDistance) return d2;
    double s2 = sigma * sigma;
    return -std::expm1(-(d2 * d2) / (s2 * s2));
}

double KernelStencil::kernel_at(int di, int dj) const {
    int tw = 2 * grid.width - 1;
    return kernel_vals[static_cast<std::size_t>(dj + grid.height - 1) * tw + (di + grid.width - 1)];
}

double KernelStencil::cost_at(int di, int dj) const {
    int tw = 2 * grid.width - 1;
    return cost_vals[static_cast<std::size_t>(dj + grid.height - 1) * tw + (di + grid.width - 1)];
}

double KernelStencil::max_cost() const {
    double m = 0.0;
    for (double c : cost_vals) m = std::max(m, c);
    return m;
}

KernelStencil build_stencil(const PixelGrid& grid, const TransportCost& cost, double epsilon) {
    if (!(epsilon > 0.0))
        throw ContractError("build_stencil: epsilon must be > 0");
    if (cost.form == TransportCost::Form::BoundedQuartic && !(cost.sigma > 0.0))
        throw ContractError("build_stencil: BoundedQuartic needs sigma > 0");

    KernelStencil st;
    st.grid = grid;
    st.cost = cost;
    st.epsilon = epsilon;

    const int w = grid.width, h = grid.height;
    const int tw = 2 * w - 1, th = 2 * h - 1;
    st.kernel_vals.resize(static_cast<std::size_t>(tw) * th);
    st.cost_vals.resize(static_cast<std::size_t>(tw) * th);

    bool any_positive_offcenter = false;
    bool has_offcenter = tw * th > 1;
    for (int dj = -(h - 1); dj <= h - 1; ++dj) {
        for (int di = -(w - 1); di <= w - 1; ++di) {
            double c = cost(di * grid.spacing, dj * grid.spacing);
            double k = std::exp(-c / epsilon);
            std::size_t idx = static_cast<std::size_t>(dj + h - 1) * tw + (di + w - 1);
            st.kernel_vals[idx] = k;
            st.cost_vals[idx] = c;
            if ((di != 0 || dj != 0) && k > 0.0) any_positive_offcenter = true;
            if (k > 0.0) st.support.push_back({di, dj, k, k * c});
        }
    }
    st.underflow_warning = has_offcenter && !any_positive_offcenter;

    st.pad_w = next_pow2(tw);
    st.pad_h = next_pow2(th);
    st.fft = std::make_shared<Fft2D>(st.pad_h, st.pad_w);

    auto embed_and_transform = [&](bool with_cost) {
        std::vector<double> buf(static_cast<std::size_t>(2) * st.pad_w * st.pad_h, 0.0);
        for (int dj = -(h - 1); dj <= h - 1; ++dj) {
            for (int di = -(w - 1); di <= w - 1; ++di) {
                int pi = (di + st.pad_w) % st.pad_w;
                int pj = (dj + st.pad_h) % st.pad_h;
                double k = st.kernel_at(di, dj);
                buf[2 * (static_cast<std::size_t>(pj) * st.pad_w + pi)] =
                    with_cost ? k * st.cost_at(di, dj) : k;
            }
        }
        st.fft->forward(buf.data());
        return buf;
    };
    st.kernel_spec = embed_and_transform(false);
    st.kernel_cost_spec = embed_and_transform(true);
    return st;
}

namespace {

void spectral_apply(const KernelStencil& st, const std::vector<double>& spec,
                    const double* x, double* y, SpectralWorkspace& ws) {
    const int w = st.grid.width, h = st.grid.height;
    const std::size_t padded = static_cast<std::size_t>(2) * st.pad_w * st.pad_h;
    ws.buf.assign(padded, 0.0);
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
            ws.buf[2 * (static_cast<std::size_t>(j) * st.pad_w + i)] =
                x[static_cast<std::size_t>(j) * w + i];
    st.fft->forward(ws.buf.data());
    kernels::cmul(ws.buf.data(), spec.data(), ws.buf.data(),
                  static_cast<std::size_t>(st.pad_w) * st.pad_h);
    st.fft->inverse(ws.buf.data());
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
            y[static_cast<std::size_t>(j) * w + i] =
                ws.buf[2 * (static_cast<std::size_t>(j) * st.pad_w + i)];
}

void direct_apply(const KernelStencil& st, bool with_cost, const double* x, double* y) {
    const int w = st.grid.width, h = st.grid.height;
    std::fill(y, y + static_cast<std::size_t>(w) * h, 0.0);
    // y[r] += K(d) x[r - d] for every supported displacement d
    for (const auto& tap : st.support) {
        double weight = with_cost ? tap.kc : tap.k;
        if (weight == 0.0) continue;
        int j0 = std::max(0, tap.dj), j1 = h + std::min(0, tap.dj);
        int i0 = std::max(0, tap.di), i1 = w + std::min(0, tap.di);
        if (i0 >= i1) continue;
        for (int j = j0; j < j1; ++j) {
            double* dst = y + static_cast<std::size_t>(j) * w + i0;
            const double* src = x + static_cast<std::size_t>(j - tap.dj) * w + (i0 - tap.di);
            kernels::add_scaled(dst, src, weight, static_cast<std::size_t>(i1 - i0));
        }
    }
}

} // namespace

void apply_kernel(const KernelStencil& st, const double* x, double* y,
                  SpectralWorkspace& ws, bool transpose) {
    (void)transpose; // K is symmetric
    spectral_apply(st, st.kernel_spec, x, y, ws);
}

std::vector<double> apply_kernel(const KernelStencil& st, const std::vector<double>& x, bool transpose) {
    if (x.size() != static_cast<std::size_t>(st.grid.cells()))
        throw ContractError("apply_kernel: vector length does not match grid");
    SpectralWorkspace ws;
    std::vector<double> y(x.size());
    apply_kernel(st, x.data(), y.data(), ws, transpose);
    return y;
}

void apply_kernel_cost(const KernelStencil& st, const double* x, double* y, SpectralWorkspace& ws) {
    spectral_apply(st, st.kernel_cost_spec, x, y, ws);
}

std::vector<double> apply_kernel_cost(const KernelStencil& st, const std::vector<double>& x) {
    if (x.size() != static_cast<std::size_t>(st.grid.cells()))
        throw ContractError("apply_kernel_cost: vector length does not match grid");
    SpectralWorkspace ws;
    std::vector<double> y(x.size());
    apply_kernel_cost(st, x.data(), y.data(), ws);
    return y;
}

void apply_kernel_direct(const KernelStencil& st, const double* x, double* y) {
    direct_apply(st, false, x, y);
}

void apply_kernel_cost_direct(const KernelStencil& st, const double* x, double* y) {
    direct_apply(st, true, x, y);
}

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

SinkhornRun run_iterations(std::vector<double> m0, std::vector<double> m1,
                           const KernelStencil& st, const EntropicOTConfig& config) {
    const std::size_t n = m0.size();
    const int N = config.iterations;
    SinkhornRun run;
    run.grid = st.grid;
    run.config = config;
    run.u.assign(static_cast<std::size_t>(N) + 1, std::vector<double>(n, 1.0));
    run.v.assign(static_cast<std::size_t>(N) + 1, std::vector<double>(n, 1.0));
    run.kv.assign(static_cast<std::size_t>(N), std::vector<double>(n));
    run.ktu.assign(static_cast<std::size_t>(N), std::vector<double>(n));

    for (int i = 1; i <= N; ++i) {
        auto& kv = run.kv[static_cast<std::size_t>(i) - 1];
        apply_kernel_direct(st, run.v[static_cast<std::size_t>(i) - 1].data(), kv.data());
        // denominators may be negative when the loss path feeds a network
        // output with negative pixels; only zero or non-finite is fatal
        kernels::div(m0.data(), kv.data(), run.u[static_cast<std::size_t>(i)].data(), n);
        if (!all_finite(run.u[static_cast<std::size_t>(i)]))
            throw NumericalBreakdown(
                "sinkhorn: division by a zero or non-finite denominator (K v) at iteration " +
                std::to_string(i));

        auto& ktu = run.ktu[static_cast<std::size_t>(i) - 1];
        apply_kernel_direct(st, run.u[static_cast<std::size_t>(i)].data(), ktu.data());
        if (i == N) {
            // column sums of the plan entering the final v-update
            double res = 0.0;
            for (std::size_t p = 0; p < n; ++p)
                res = std::max(res, std::abs(run.v[static_cast<std::size_t>(i) - 1][p] * ktu[p] - m1[p]));
            run.marginal_residual = res;
        }
        kernels::div(m1.data(), ktu.data(), run.v[static_cast<std::size_t>(i)].data(), n);
        if (!all_finite(run.v[static_cast<std::size_t>(i)]))
            throw NumericalBreakdown(
                "sinkhorn: division by a zero or non-finite denominator (K^T u) at iteration " +
                std::to_string(i));
    }

    std::vector<double> kcv(n);
    apply_kernel_cost_direct(st, run.v[static_cast<std::size_t>(N)].data(), kcv.data());
    run.value = kernels::dot(run.u[static_cast<std::size_t>(N)].data(), kcv.data(), n);
    if (!std::isfinite(run.value))
        throw NumericalBreakdown("sinkhorn: transport value is not finite");
    return run;
}

} // namespace

SinkhornRun sinkhorn_unchecked(const std::vector<double>& mu0, const std::vector<double>& mu1,
                               const KernelStencil& st, const EntropicOTConfig& config) {
    if (config.iterations < 1)
        throw ContractError("sinkhorn: iterations must be >= 1");
    std::vector<double> m0 = mu0, m1 = mu1;
    if (config.rho > 0.0) {
        double s0 = kernels::sum(m0.data(), m0.size());
        double s1 = kernels::sum(m1.data(), m1.size());
        double n = static_cast<double>(m0.size());
        for (double& x : m0) x += config.rho * s0 / n;
        for (double& x : m1) x += config.rho * s1 / n;
    }
    return run_iterations(std::move(m0), std::move(m1), st, config);
}

SinkhornRun sinkhorn(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                     const KernelStencil& st, const EntropicOTConfig& config) {
    if (!(mu0.grid == st.grid) || !(mu1.grid == st.grid))
        throw ContractError("sinkhorn: marginal grids do not match the stencil");
    for (double x : mu0.values)
        if (!(x >= 0.0)) throw ContractError("sinkhorn: mu0 must be nonnegative");
    for (double x : mu1.values)
        if (!(x >= 0.0)) throw ContractError("sinkhorn: mu1 must be nonnegative");
    double t0 = mass(mu0), t1 = mass(mu1);
    if (std::abs(t0 - t1) > 1e-9 * t0)
        throw ContractError("sinkhorn: marginal masses differ beyond 1e-9 relative");
    if (config.rho == 0.0) {
        for (double x : mu0.values)
            if (!(x > 0.0))
                throw ContractError("sinkhorn: rho = 0 requires strictly positive marginals");
        for (double x : mu1.values)
            if (!(x > 0.0))
                throw ContractError("sinkhorn: rho = 0 requires strictly positive marginals");
    }
    return sinkhorn_unchecked(mu0.values, mu1.values, st, config);
}

SinkhornGrad sinkhorn_grad(const SinkhornRun& run, const KernelStencil& st) {
    if (run.u.empty() || run.kv.empty())
        throw ContractError("sinkhorn_grad: run has no stored trajectories");
    if (!(run.grid == st.grid))
        throw ContractError("sinkhorn_grad: stencil grid does not match the run");
    const std::size_t n = run.u[0].size();
    const int N = static_cast<int>(run.kv.size());

    SinkhornGrad g;
    g.wrt_mu0.assign(n, 0.0);
    g.wrt_mu1.assign(n, 0.0);

    // value = u_N^T (K.*C) v_N seeds both adjoints; K.*C is symmetric
    std::vector<double> ubar(n), vbar(n), tmp(n), tmp2(n);
    apply_kernel_cost_direct(st, run.v[static_cast<std::size_t>(N)].data(), ubar.data());
    apply_kernel_cost_direct(st, run.u[static_cast<std::size_t>(N)].data(), vbar.data());

    for (int i = N; i >= 1; --i) {
        const auto& u_i = run.u[static_cast<std::size_t>(i)];
        const auto& v_i = run.v[static_cast<std::size_t>(i)];
        const auto& kv = run.kv[static_cast<std::size_t>(i) - 1];
        const auto& ktu = run.ktu[static_cast<std::size_t>(i) - 1];

        // v_i = mu1 ./ ktu:  mu1 picks up vbar/ktu, ktu picks up -vbar.*v_i./ktu
        for (std::size_t p = 0; p < n; ++p) g.wrt_mu1[p] += vbar[p] / ktu[p];
        for (std::size_t p = 0; p < n; ++p) tmp[p] = -vbar[p] * v_i[p] / ktu[p];
        // ktu = K^T u_i:  u_i picks up K * ktubar
        apply_kernel_direct(st, tmp.data(), tmp2.data());
        for (std::size_t p = 0; p < n; ++p) ubar[p] += tmp2[p];

        // u_i = mu0 ./ kv:  mu0 picks up ubar/kv, kv picks up -ubar.*u_i./kv
        for (std::size_t p = 0; p < n; ++p) g.wrt_mu0[p] += ubar[p] / kv[p];
        for (std::size_t p = 0; p < n; ++p) tmp[p] = -ubar[p] * u_i[p] / kv[p];
        // kv = K v_{i-1}: the adjoint reaching v_{i-1}; v_0 is constant
        apply_kernel_direct(st, tmp.data(), vbar.data());
        // u_{i-1} is consumed only inside step i-1, so its adjoint starts at zero
        std::fill(ubar.begin(), ubar.end(), 0.0);
    }

    // chain through the internal background floor mu_bg = mu + (rho/n) * sum(mu)
    if (run.config.rho > 0.0) {
        double f = run.config.rho / static_cast<double>(n);
        double s0 = f * kernels::sum(g.wrt_mu0.data(), n);
        double s1 = f * kernels::sum(g.wrt_mu1.data(), n);
        for (std::size_t p = 0; p < n; ++p) g.wrt_mu0[p] += s0;
        for (std::size_t p = 0; p < n; ++p) g.wrt_mu1[p] += s1;
    }
    return g;
}

double wasserstein_p(double value, double p) {
    if (!(value >= 0.0)) throw ContractError("wasserstein_p: value must be >= 0");
    if (!(p >= 1.0)) throw ContractError("wasserstein_p: p must be >= 1");
    return std::pow(value, 1.0 / p);
}

double metric_cost(std::span<const double> x1, std::span<const double> x2, double n) {
    if (x1.size() != x2.size())
        throw ContractError("metric_cost: dimension mismatch");
    if (!(n >= 1.0)) throw ContractError("metric_cost: n must be >= 1");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x1.size(); ++i) {
        double d = x1[i] - x2[i];
        d2 += d * d;
    }
    double r = std::sqrt(d2);
    return std::pow(-std::expm1(-std::pow(r, n)), 1.0 / n);
}

} // namespace otrecon::transport
