#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "otrecon/rng.hpp"
#include "otrecon/transport.hpp"

using namespace otrecon;
using namespace otrecon::transport;

namespace {

// dense oracle: walks the displacement tables entry by entry
std::vector<double> dense_apply(const KernelStencil& st, const std::vector<double>& x, bool with_cost) {
    const int w = st.grid.width, h = st.grid.height;
    std::vector<double> y(static_cast<std::size_t>(w) * h, 0.0);
    for (int rj = 0; rj < h; ++rj)
        for (int ri = 0; ri < w; ++ri)
            for (int qj = 0; qj < h; ++qj)
                for (int qi = 0; qi < w; ++qi) {
                    double k = st.kernel_at(ri - qi, rj - qj);
                    if (with_cost) k *= st.cost_at(ri - qi, rj - qj);
                    y[static_cast<std::size_t>(rj) * w + ri] +=
                        k * x[static_cast<std::size_t>(qj) * w + qi];
                }
    return y;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

TransportCost squared() {
    TransportCost c;
    c.form = TransportCost::Form::SquaredDistance;
    return c;
}

TransportCost quartic(double sigma) {
    TransportCost c;
    c.form = TransportCost::Form::BoundedQuartic;
    c.sigma = sigma;
    return c;
}

} // namespace

TEST_CASE("stencil entries and flags") {
    // 1x1 grid: single entry K(0,0) = 1
    KernelStencil one = build_stencil(PixelGrid(1, 1), squared(), 0.5);
    CHECK(one.kernel_at(0, 0) == 1.0);
    CHECK_FALSE(one.underflow_warning);

    // unit displacement with squared distance at eps = 1
    KernelStencil st3 = build_stencil(PixelGrid(3, 3), squared(), 1.0);
    CHECK(st3.kernel_at(1, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(st3.cost_at(1, 0) == doctest::Approx(1.0));

    // the bounded quartic at displacement sigma costs 1 - 1/e
    KernelStencil stq = build_stencil(PixelGrid(81, 1), quartic(80.0), 1.0);
    CHECK(stq.cost_at(80, 0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
    CHECK(stq.kernel_at(80, 0) ==
          doctest::Approx(std::exp(-(1.0 - std::exp(-1.0)))).epsilon(1e-12));

    // eps so small that every off-center entry underflows
    KernelStencil cold = build_stencil(PixelGrid(4, 4), squared(), 1e-6);
    CHECK(cold.underflow_warning);
    CHECK(cold.kernel_at(1, 0) == 0.0);
    CHECK(cold.kernel_at(0, 0) == 1.0);
}

TEST_CASE("spectral application matches the dense oracle") {
    // kernel application on an 8x8 grid
    KernelStencil st = build_stencil(PixelGrid(8, 8), squared(), 0.5 * 98.0);
    SeededRng rng(21, 0);
    std::vector<double> x(64);
    for (double& v : x) v = rng.uniform(0.0, 1.0);
    CHECK(rel_l2(apply_kernel(st, x), dense_apply(st, x, false)) < 1e-10);

    // cost-weighted application on a 5x5 grid
    KernelStencil st5 = build_stencil(PixelGrid(5, 5), squared(), 0.2 * 32.0);
    std::vector<double> x5(25);
    for (double& v : x5) v = rng.uniform(-1.0, 1.0);
    CHECK(rel_l2(apply_kernel_cost(st5, x5), dense_apply(st5, x5, true)) < 1e-10);

    // zero vector maps to zero
    std::vector<double> zero(64, 0.0);
    for (double v : apply_kernel(st, zero)) CHECK(v == 0.0);
    for (double v : apply_kernel_cost(st, zero)) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));

    // delta reproduces the kernel column
    std::vector<double> delta(64, 0.0);
    const int q = 8 * 3 + 2;
    delta[q] = 1.0;
    std::vector<double> col = apply_kernel(st, delta);
    for (int rj = 0; rj < 8; ++rj)
        for (int ri = 0; ri < 8; ++ri)
            CHECK(col[static_cast<std::size_t>(rj) * 8 + ri] ==
                  doctest::Approx(st.kernel_at(ri - 2, rj - 3)).epsilon(1e-12));

    // direct path agrees too (used inside sinkhorn)
    std::vector<double> yd(64);
    apply_kernel_direct(st, x.data(), yd.data());
    CHECK(rel_l2(yd, dense_apply(st, x, false)) < 1e-12);

    // 1x1 cost application is identically zero
    KernelStencil one = build_stencil(PixelGrid(1, 1), squared(), 1.0);
    std::vector<double> x1{3.7};
    CHECK(apply_kernel_cost(one, x1)[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}

TEST_CASE("fft-dense equivalence holds up to 64x64") {
    SeededRng rng(22, 0);
    for (int size : {16, 32, 64}) {
        PixelGrid grid(size, size);
        double maxc = 2.0 * (size - 1.0) * (size - 1.0);
        KernelStencil st = build_stencil(grid, squared(), 0.1 * maxc);
        std::vector<double> x(static_cast<std::size_t>(grid.cells()));
        for (double& v : x) v = rng.uniform(0.0, 1.0);
        std::vector<double> direct(x.size());
        apply_kernel_direct(st, x.data(), direct.data());
        CHECK(rel_l2(apply_kernel(st, x), direct) < 1e-10);
        apply_kernel_cost_direct(st, x.data(), direct.data());
        CHECK(rel_l2(apply_kernel_cost(st, x), direct) < 1e-10);
    }
}

TEST_CASE("sinkhorn on a single cell gives zero") {
    PixelGrid g(1, 1);
    KernelStencil st = build_stencil(g, squared(), 1.0);
    DiscreteMeasure m(g);
    m.values[0] = 1.0;
    EntropicOTConfig cfg{1.0, 5, 0.0};
    SinkhornRun run = sinkhorn(m, m, st, cfg);
    CHECK(run.value == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}

TEST_CASE("forced point-to-point transport costs the squared distance") {
    // atoms three pixels apart; eps large enough that the kernel entry for
    // the forced arc is representable (exp(-9/eps) > 0), small enough that
    // the background dust contributes below the tolerance
    PixelGrid g(8, 1);
    KernelStencil st = build_stencil(g, squared(), 0.45);
    DiscreteMeasure mu0(g), mu1(g);
    mu0.values[0] = 1.0;
    mu1.values[3] = 1.0;
    EntropicOTConfig cfg{0.45, 2000, 1e-6};
    SinkhornRun run = sinkhorn(mu0, mu1, st, cfg);
    CHECK(run.value == doctest::Approx(9.0).epsilon(1e-4));
}

TEST_CASE("sinkhorn matches the exact LP on random 6x6 instances") {
    PixelGrid g(6, 6);
    TransportCost cost = squared();
    double maxc = cost(5.0, 5.0);
    KernelStencil st = build_stencil(g, cost, 1e-3 * maxc);
    EntropicOTConfig cfg{1e-3 * maxc, 5000, 0.0};
    for (int t = 0; t < 5; ++t) {
        SeededRng rng(30 + t, 0);
        DiscreteMeasure mu0(g), mu1(g);
        for (double& v : mu0.values) v = rng.uniform(0.05, 1.0);
        for (double& v : mu1.values) v = rng.uniform(0.05, 1.0);
        mu0 = normalize_mass(mu0, 1.0);
        mu1 = normalize_mass(mu1, 1.0);
        double approx = sinkhorn(mu0, mu1, st, cfg).value;
        double exact = exact_transport(mu0, mu1, cost);
        CHECK(std::abs(approx - exact) <= 1e-2 * exact + 1e-6);
    }
}

TEST_CASE("marginal snap after each half-update") {
    PixelGrid g(5, 5);
    KernelStencil st = build_stencil(g, squared(), 2.0);
    SeededRng rng(31, 0);
    DiscreteMeasure mu0(g), mu1(g);
    for (double& v : mu0.values) v = rng.uniform(0.1, 1.0);
    for (double& v : mu1.values) v = rng.uniform(0.1, 1.0);
    mu1 = normalize_mass(mu1, mass(mu0));
    EntropicOTConfig cfg{2.0, 7, 0.0};
    SinkhornRun run = sinkhorn(mu0, mu1, st, cfg);
    // after the u-update of iteration i the plan diag(u_i) K diag(v_{i-1})
    // has row sums mu0; after the v-update its column sums are mu1
    for (int i = 1; i <= cfg.iterations; ++i) {
        const auto& u = run.u[static_cast<std::size_t>(i)];
        const auto& kv = run.kv[static_cast<std::size_t>(i) - 1];
        const auto& v = run.v[static_cast<std::size_t>(i)];
        const auto& ktu = run.ktu[static_cast<std::size_t>(i) - 1];
        for (std::size_t p = 0; p < u.size(); ++p) {
            CHECK(u[p] * kv[p] == doctest::Approx(mu0.values[p]).epsilon(1e-12));
            CHECK(v[p] * ktu[p] == doctest::Approx(mu1.values[p]).epsilon(1e-12));
        }
    }
    CHECK(run.marginal_residual > 0.0);
    // converged instance: residual small relative to the marginal scale
    CHECK(run.marginal_residual < 0.1 * mass(mu0));
}

TEST_CASE("sinkhorn value is symmetric in its arguments once converged") {
    PixelGrid g(6, 6);
    double maxc = squared()(5.0, 5.0);
    KernelStencil st = build_stencil(g, squared(), 0.02 * maxc);
    SeededRng rng(32, 0);
    DiscreteMeasure a(g), b(g);
    for (double& v : a.values) v = rng.uniform(0.1, 1.0);
    for (double& v : b.values) v = rng.uniform(0.1, 1.0);
    b = normalize_mass(b, mass(a));
    EntropicOTConfig cfg{0.02 * maxc, 3000, 0.0};
    double ab = sinkhorn(a, b, st, cfg).value;
    double ba = sinkhorn(b, a, st, cfg).value;
    CHECK(ba == doctest::Approx(ab).epsilon(1e-10));
}

TEST_CASE("entropic value approaches the LP value as eps decreases") {
    PixelGrid g(6, 6);
    TransportCost cost = squared();
    double maxc = cost(5.0, 5.0);
    SeededRng rng(33, 0);
    DiscreteMeasure mu0(g), mu1(g);
    for (double& v : mu0.values) v = rng.uniform(0.05, 1.0);
    for (double& v : mu1.values) v = rng.uniform(0.05, 1.0);
    mu0 = normalize_mass(mu0, 1.0);
    mu1 = normalize_mass(mu1, 1.0);
    double exact = exact_transport(mu0, mu1, cost);
    double prev_gap = 1e300;
    for (double frac : {1e-1, 1e-2, 1e-3}) {
        KernelStencil st = build_stencil(g, cost, frac * maxc);
        EntropicOTConfig cfg{frac * maxc, 5000, 0.0};
        double gap = std::abs(sinkhorn(mu0, mu1, st, cfg).value - exact);
        CHECK(gap <= prev_gap + 1e-9);
        prev_gap = gap;
    }
}

TEST_CASE("sinkhorn preconditions") {
    PixelGrid g(3, 3);
    KernelStencil st = build_stencil(g, squared(), 1.0);
    DiscreteMeasure a(g, std::vector<double>(9, 1.0));
    DiscreteMeasure b = a;
    b.values[0] = 2.0; // mass mismatch
    EntropicOTConfig cfg{1.0, 3, 0.0};
    CHECK_THROWS_AS(sinkhorn(a, b, st, cfg), ContractError);

    DiscreteMeasure neg = a;
    neg.values[3] = -0.1;
    CHECK_THROWS_AS(sinkhorn(neg, a, st, cfg), ContractError);

    DiscreteMeasure zero = a;
    zero.values[4] = 0.0;
    CHECK_THROWS_AS(sinkhorn(zero, zero, st, cfg), ContractError); // rho = 0 needs positivity
    EntropicOTConfig with_bg{1.0, 3, 1e-6};
    CHECK_NOTHROW(sinkhorn(zero, zero, st, with_bg));
}

TEST_CASE("unrolled gradient matches central differences") {
    PixelGrid g(4, 4);
    KernelStencil st = build_stencil(g, squared(), 0.1);
    EntropicOTConfig cfg{0.1, 10, 0.0};
    const std::size_t n = 16;
    for (int t = 0; t < 20; ++t) {
        SeededRng rng(40 + t, 0);
        std::vector<double> mu0(n), mu1(n);
        double s0 = 0.0, s1 = 0.0;
        for (auto& v : mu0) {
            v = rng.uniform(0.2, 1.0);
            s0 += v;
        }
        for (auto& v : mu1) {
            v = rng.uniform(0.2, 1.0);
            s1 += v;
        }
        for (auto& v : mu1) v *= s0 / s1;
        SinkhornRun run = sinkhorn_unchecked(mu0, mu1, st, cfg);
        SinkhornGrad grad = sinkhorn_grad(run, st);
        double gmax = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            gmax = std::max({gmax, std::abs(grad.wrt_mu0[p]), std::abs(grad.wrt_mu1[p])});
        const double h = 1e-6;
        for (std::size_t p = 0; p < n; ++p) {
            for (int side = 0; side < 2; ++side) {
                auto& mu = side == 0 ? mu0 : mu1;
                double an = side == 0 ? grad.wrt_mu0[p] : grad.wrt_mu1[p];
                double keep = mu[p];
                mu[p] = keep + h;
                double up = sinkhorn_unchecked(mu0, mu1, st, cfg).value;
                mu[p] = keep - h;
                double dn = sinkhorn_unchecked(mu0, mu1, st, cfg).value;
                mu[p] = keep;
                double fd = (up - dn) / (2.0 * h);
                CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4 * gmax}) <=
                      1e-6);
            }
        }
    }
}

TEST_CASE("gradient predicts first-order value changes") {
    PixelGrid g(4, 4);
    KernelStencil st = build_stencil(g, squared(), 0.1);
    EntropicOTConfig cfg{0.1, 10, 0.0};
    SeededRng rng(51, 0);
    std::vector<double> mu0(16), mu1(16);
    double s0 = 0.0, s1 = 0.0;
    for (auto& v : mu0) {
        v = rng.uniform(0.3, 1.0);
        s0 += v;
    }
    for (auto& v : mu1) {
        v = rng.uniform(0.3, 1.0);
        s1 += v;
    }
    for (auto& v : mu1) v *= s0 / s1;
    SinkhornRun run = sinkhorn_unchecked(mu0, mu1, st, cfg);
    SinkhornGrad grad = sinkhorn_grad(run, st);
    const double h = 1e-7;
    for (std::size_t q : {0ul, 5ul, 15ul}) {
        std::vector<double> bumped = mu0;
        bumped[q] += h;
        double predicted = run.value + h * grad.wrt_mu0[q];
        double actual = sinkhorn_unchecked(bumped, mu1, st, cfg).value;
        CHECK(actual == doctest::Approx(predicted).epsilon(1e-8));
    }
}

TEST_CASE("gradient includes the internal background chain") {
    PixelGrid g(3, 3);
    KernelStencil st = build_stencil(g, squared(), 0.5);
    EntropicOTConfig cfg{0.5, 8, 1e-3};
    SeededRng rng(52, 0);
    std::vector<double> mu0(9), mu1(9);
    double s0 = 0.0, s1 = 0.0;
    for (auto& v : mu0) {
        v = rng.uniform(0.1, 1.0);
        s0 += v;
    }
    for (auto& v : mu1) {
        v = rng.uniform(0.1, 1.0);
        s1 += v;
    }
    for (auto& v : mu1) v *= s0 / s1;
    SinkhornRun run = sinkhorn_unchecked(mu0, mu1, st, cfg);
    SinkhornGrad grad = sinkhorn_grad(run, st);
    const double h = 1e-6;
    for (std::size_t p = 0; p < 9; ++p) {
        double keep = mu0[p];
        mu0[p] = keep + h;
        double up = sinkhorn_unchecked(mu0, mu1, st, cfg).value;
        mu0[p] = keep - h;
        double dn = sinkhorn_unchecked(mu0, mu1, st, cfg).value;
        mu0[p] = keep;
        double fd = (up - dn) / (2.0 * h);
        CHECK(fd == doctest::Approx(grad.wrt_mu0[p]).epsilon(1e-5));
    }
}

TEST_CASE("sinkhorn_grad contract errors") {
    PixelGrid g(2, 2);
    KernelStencil st = build_stencil(g, squared(), 1.0);
    SinkhornRun empty;
    CHECK_THROWS_AS(sinkhorn_grad(empty, st), ContractError);
}

TEST_CASE("exact transport examples") {
    TransportCost cost = squared();

    PixelGrid g(8, 8);
    SeededRng rng(60, 0);
    DiscreteMeasure m(g);
    for (double& v : m.values) v = rng.uniform(0.0, 1.0);
    CHECK(exact_transport(m, m, cost) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

    DiscreteMeasure a(g), b(g);
    a.at(1, 1) = 1.0;
    b.at(4, 1) = 1.0;
    CHECK(exact_transport(a, b, cost) == doctest::Approx(9.0).epsilon(1e-12));

    // two half atoms at x = 0, 2 against x = 1, 3: monotone matching costs 1
    PixelGrid line(4, 1);
    DiscreteMeasure p(line), q(line);
    p.values[0] = 0.5;
    p.values[2] = 0.5;
    q.values[1] = 0.5;
    q.values[3] = 0.5;
    CHECK(exact_transport(p, q, cost) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact transport errors") {
    TransportCost cost = squared();
    PixelGrid g(24, 24);
    DiscreteMeasure big(g, std::vector<double>(576, 1.0)); // 576 atoms > 256
    CHECK_THROWS_AS(exact_transport(big, big, cost), CapacityError);

    PixelGrid s(2, 2);
    DiscreteMeasure a(s), b(s);
    a.values[0] = 1.0;
    b.values[1] = 1.5;
    CHECK_THROWS_AS(exact_transport(a, b, cost), ContractError);
}

TEST_CASE("wasserstein_p examples") {
    CHECK(wasserstein_p(0.0, 4.0) == 0.0);
    CHECK(wasserstein_p(9.0, 2.0) == doctest::Approx(3.0));
    CHECK(wasserstein_p(16.0, 4.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(wasserstein_p(-1.0, 2.0), ContractError);
    CHECK_THROWS_AS(wasserstein_p(1.0, 0.5), ContractError);
}

TEST_CASE("metric cost examples and sampled triangle inequality") {
    double x[2] = {3.0, -4.0};
    CHECK(metric_cost(x, x, 4.0) == 0.0);

    double a[1] = {0.0}, b[1] = {1.0};
    CHECK(metric_cost(std::span<const double>(a, 1), std::span<const double>(b, 1), 1.0) ==
          doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));

    SeededRng rng(70, 0);
    double worst = 0.0;
    for (int t = 0; t < 20000; ++t) {
        double p[2] = {rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0)};
        double q[2] = {rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0)};
        double r[2] = {rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0)};
        double v = metric_cost(p, r, 4.0) - metric_cost(p, q, 4.0) - metric_cost(q, r, 4.0);
        worst = std::max(worst, v);
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("exact W_p with the bounded-cost metric satisfies the axioms on small instances") {
    TransportCost cost = quartic(3.0);
    PixelGrid g(4, 4);
    SeededRng rng(71, 0);
    for (int t = 0; t < 100; ++t) {
        DiscreteMeasure a(g), b(g), c(g);
        for (int k = 0; k < 5; ++k) {
            a.values[rng.next_below(16)] += rng.uniform(0.1, 1.0);
            b.values[rng.next_below(16)] += rng.uniform(0.1, 1.0);
            c.values[rng.next_below(16)] += rng.uniform(0.1, 1.0);
        }
        a = normalize_mass(a, 1.0);
        b = normalize_mass(b, 1.0);
        c = normalize_mass(c, 1.0);
        double ab = wasserstein_p(exact_transport(a, b, cost), 4.0);
        double ba = wasserstein_p(exact_transport(b, a, cost), 4.0);
        double bc = wasserstein_p(exact_transport(b, c, cost), 4.0);
        double ac = wasserstein_p(exact_transport(a, c, cost), 4.0);
        CHECK(ab >= 0.0);
        CHECK(ba == doctest::Approx(ab).epsilon(1e-9));
        CHECK(ac <= ab + bc + 1e-9);
    }
}
