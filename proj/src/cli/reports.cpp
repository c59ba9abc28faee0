#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "cli_util.hpp"
#include "otrecon/cli/commands.hpp"
#include "otrecon/datagen.hpp"
#include "otrecon/diffnet.hpp"
#include "otrecon/rng.hpp"
#include "otrecon/transport.hpp"

namespace otrecon::cli {

namespace fs = std::filesystem;
using detail::write_manifest;
using detail::write_text;

Schema prop1_schema() {
    Schema s;
    s.add("seed", "1")
        .add("prop1.cells", "256")
        .add("prop1.bound", "8")
        .add("prop1.samples", "10000")
        .add("prop1.bump_sigma", "12");
    return s;
}

Schema prop2_schema() {
    Schema s;
    s.add("seed", "1")
        .add("prop2.quad_points", "4000")
        .add("prop2.distributions", "10")
        .add("prop2.atoms_min", "2")
        .add("prop2.atoms_max", "5")
        .add("prop2.cells", "65")
        .add("prop2.bound", "8")
        .add("prop2.sigma", "10")
        .add("prop2.epsilon", "2e-3")
        .add("prop2.iterations", "120")
        .add("prop2.quad_eps", "0.05")
        .add("prop2.quad_iterations", "200");
    return s;
}

Schema metric_check_schema() {
    Schema s;
    s.add("seed", "1").add("metric.ns", "1,2,4").add("metric.triples", "1000000").add("metric.box", "100");
    return s;
}

Schema selftest_schema() {
    Schema s;
    s.add("seed", "1");
    return s;
}

// --- prop1: the expected-L2 minimizer is the shift-law convolution ------------

void cmd_prop1(const Config& cfg, const std::string& out_dir) {
    Resolved r = prop1_schema().resolve(cfg);
    const int cells = static_cast<int>(r.integer("prop1.cells"));
    const int bound = static_cast<int>(r.integer("prop1.bound"));
    const long samples = r.integer("prop1.samples");
    const double sigma = r.real("prop1.bump_sigma");
    if (cells < 3 || bound < 0 || samples < 1 || !(sigma > 0.0))
        throw ConfigError("prop1: bad parameters");

    const int center = cells / 2;
    std::vector<double> g(static_cast<std::size_t>(cells));
    for (int i = 0; i < cells; ++i) {
        double z = (i - center) / sigma;
        g[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z);
    }

    // Monte-Carlo pointwise mean of g shifted by tau ~ uniform{-B..B}
    SeededRng rng(r.u64("seed"), 0);
    std::vector<double> mc(static_cast<std::size_t>(cells), 0.0);
    for (long s = 0; s < samples; ++s) {
        int k = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(2 * bound + 1))) - bound;
        for (int i = 0; i < cells; ++i) {
            int j = i - k;
            if (j >= 0 && j < cells) mc[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(j)];
        }
    }
    for (double& v : mc) v /= static_cast<double>(samples);

    // exact dP * g for the discrete uniform law
    std::vector<double> conv(static_cast<std::size_t>(cells), 0.0);
    for (int k = -bound; k <= bound; ++k)
        for (int i = 0; i < cells; ++i) {
            int j = i - k;
            if (j >= 0 && j < cells)
                conv[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(j)];
        }
    for (double& v : conv) v /= static_cast<double>(2 * bound + 1);

    double num = 0.0, den = 0.0;
    for (int i = 0; i < cells; ++i) {
        double d = mc[static_cast<std::size_t>(i)] - conv[static_cast<std::size_t>(i)];
        num += d * d;
        den += conv[static_cast<std::size_t>(i)] * conv[static_cast<std::size_t>(i)];
    }
    double discrepancy = den > 0.0 ? std::sqrt(num / den) : 0.0;

    // a centered delta smeared by the law must give the boxcar of height 1/(2B+1)
    double boxcar_err = 0.0;
    for (int i = 0; i < cells; ++i) {
        double direct = 0.0; // (dP * delta_center)(i)
        for (int k = -bound; k <= bound; ++k)
            if (i - k == center) direct += 1.0 / (2 * bound + 1);
        double expect = std::abs(i - center) <= bound ? 1.0 / (2 * bound + 1) : 0.0;
        boxcar_err = std::max(boxcar_err, std::abs(direct - expect));
    }

    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "cell,g,mc_mean,conv\n" << std::setprecision(17);
    for (int i = 0; i < cells; ++i)
        csv << i << "," << g[static_cast<std::size_t>(i)] << "," << mc[static_cast<std::size_t>(i)]
            << "," << conv[static_cast<std::size_t>(i)] << "\n";
    write_text(out_dir + "/profiles.csv", csv.str());

    std::ostringstream rep;
    rep << std::scientific << std::setprecision(6);
    rep << "prop1: empirical minimizer of E_tau |f - g_tau|^2 vs dP * g\n";
    rep << "cells = " << cells << ", bound = " << bound << ", samples = " << samples << "\n";
    rep << "relative_l2_discrepancy = " << discrepancy << "\n";
    rep << "boxcar_max_abs_err = " << boxcar_err << "\n";
    write_text(out_dir + "/report.txt", rep.str());
    write_manifest(out_dir, "prop1", r, {"profiles.csv", "report.txt"});
}

// --- prop2: the expected-OT minimizer concentrates at argmin F ----------------

namespace {

// E_tau[T_eps(delta_t, delta_x)] by brute force over candidate cells.
// Returns the argmin cell index.
int sinkhorn_brute_force_argmin(const PixelGrid& grid, const std::vector<int>& tau_cells,
                                const std::vector<double>& tau_mass,
                                const transport::TransportCost& cost, double epsilon, int iterations,
                                std::vector<double>* out_values = nullptr) {
    transport::KernelStencil st = transport::build_stencil(grid, cost, epsilon);
    transport::EntropicOTConfig ot;
    ot.epsilon = epsilon;
    ot.iterations = iterations;
    ot.rho = 1e-6;
    const int n = grid.cells();
    std::vector<double> expected(static_cast<std::size_t>(n), 0.0);
    for (std::size_t ti = 0; ti < tau_cells.size(); ++ti) {
        DiscreteMeasure mu0(grid);
        mu0.values[static_cast<std::size_t>(tau_cells[ti])] = 1.0;
        for (int x = 0; x < n; ++x) {
            DiscreteMeasure mu1(grid);
            mu1.values[static_cast<std::size_t>(x)] = 1.0;
            transport::SinkhornRun run = transport::sinkhorn(mu0, mu1, st, ot);
            expected[static_cast<std::size_t>(x)] += tau_mass[ti] * run.value;
        }
    }
    if (out_values) *out_values = expected;
    return static_cast<int>(std::min_element(expected.begin(), expected.end()) - expected.begin());
}

} // namespace

void cmd_prop2(const Config& cfg, const std::string& out_dir) {
    Resolved r = prop2_schema().resolve(cfg);
    fs::create_directories(out_dir);
    std::ostringstream rep;
    rep << std::scientific << std::setprecision(6);

    // (i) uniform tau on [-1,1], squared cost: F(x) = 1/3 + x^2 by quadrature
    const long nt = r.integer("prop2.quad_points");
    const int nx = 401; // x in [-2, 2] step 0.01
    std::vector<double> fx(nx);
    double quad_max_err = 0.0;
    int argmin_i = 0;
    for (int i = 0; i < nx; ++i) {
        double x = -2.0 + 0.01 * i;
        double acc = 0.0;
        for (long k = 0; k < nt; ++k) {
            double t = -1.0 + (static_cast<double>(k) + 0.5) * (2.0 / static_cast<double>(nt));
            acc += (x - t) * (x - t);
        }
        fx[static_cast<std::size_t>(i)] = acc / static_cast<double>(nt);
        quad_max_err = std::max(quad_max_err,
                                std::abs(fx[static_cast<std::size_t>(i)] - (1.0 / 3.0 + x * x)));
        if (fx[static_cast<std::size_t>(i)] < fx[static_cast<std::size_t>(argmin_i)]) argmin_i = i;
    }
    double argmin_x = -2.0 + 0.01 * argmin_i;
    rep << "example1.quadrature_max_abs_err = " << quad_max_err << "\n";
    rep << "example1.argmin_x = " << argmin_x << "\n";

    std::ostringstream fcsv;
    fcsv << "x,F_quad,F_analytic\n" << std::setprecision(17);
    for (int i = 0; i < nx; ++i) {
        double x = -2.0 + 0.01 * i;
        fcsv << x << "," << fx[static_cast<std::size_t>(i)] << "," << (1.0 / 3.0 + x * x) << "\n";
    }
    write_text(out_dir + "/example1_profile.csv", fcsv.str());

    // Sinkhorn brute force for the discretized uniform law, squared cost
    {
        const int cells = 41; // centers -2.0 .. 2.0, spacing 0.1
        PixelGrid grid1d(cells, 1, 0.1);
        auto cell_x = [&](int i) { return -2.05 + grid1d.center_x(i); };
        std::vector<int> tau_cells;
        std::vector<double> tau_mass;
        for (int i = 0; i < cells; ++i)
            if (std::abs(cell_x(i)) <= 1.0 + 1e-12) tau_cells.push_back(i);
        tau_mass.assign(tau_cells.size(), 1.0 / static_cast<double>(tau_cells.size()));

        // analytic argmin of F over the same discrete law and grid
        int argmin_f = 0;
        double best = 0.0;
        for (int i = 0; i < cells; ++i) {
            double acc = 0.0;
            for (std::size_t ti = 0; ti < tau_cells.size(); ++ti) {
                double d = cell_x(i) - cell_x(tau_cells[ti]);
                acc += tau_mass[ti] * d * d;
            }
            if (i == 0 || acc < best) {
                best = acc;
                argmin_f = i;
            }
        }
        transport::TransportCost cost;
        cost.form = transport::TransportCost::Form::SquaredDistance;
        int argmin_bf = sinkhorn_brute_force_argmin(grid1d, tau_cells, tau_mass, cost,
                                                    r.real("prop2.quad_eps"),
                                                    static_cast<int>(r.integer("prop2.quad_iterations")));
        rep << "example1.discrete_argmin_F_cell = " << argmin_f << "\n";
        rep << "example1.sinkhorn_argmin_cell = " << argmin_bf << "\n";
        rep << "example1.cell_distance = " << std::abs(argmin_f - argmin_bf) << "\n";
    }

    // (ii) seeded discrete laws with squared cost: argmin F = E[tau]
    {
        const long count = r.integer("prop2.distributions");
        const int amin = static_cast<int>(r.integer("prop2.atoms_min"));
        const int amax = static_cast<int>(r.integer("prop2.atoms_max"));
        if (amin < 1 || amax < amin) throw ConfigError("prop2: bad atom count range");
        double worst = 0.0;
        for (long d = 0; d < count; ++d) {
            SeededRng rng(r.u64("seed"), 1000 + static_cast<std::uint64_t>(d));
            int atoms = amin + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(amax - amin + 1)));
            std::vector<double> pos(static_cast<std::size_t>(atoms)), mass(static_cast<std::size_t>(atoms));
            double total = 0.0;
            for (int a = 0; a < atoms; ++a) {
                pos[static_cast<std::size_t>(a)] = rng.uniform(-3.0, 3.0);
                mass[static_cast<std::size_t>(a)] = rng.uniform(0.2, 1.0);
                total += mass[static_cast<std::size_t>(a)];
            }
            double mean = 0.0;
            for (int a = 0; a < atoms; ++a) {
                mass[static_cast<std::size_t>(a)] /= total;
                mean += mass[static_cast<std::size_t>(a)] * pos[static_cast<std::size_t>(a)];
            }
            // F on x grid [-5, 5] step 0.01
            int best_i = 0;
            double best_f = 0.0;
            for (int i = 0; i <= 1000; ++i) {
                double x = -5.0 + 0.01 * i;
                double acc = 0.0;
                for (int a = 0; a < atoms; ++a) {
                    double dd = x - pos[static_cast<std::size_t>(a)];
                    acc += mass[static_cast<std::size_t>(a)] * dd * dd;
                }
                if (i == 0 || acc < best_f) {
                    best_f = acc;
                    best_i = i;
                }
            }
            double argmin = -5.0 + 0.01 * best_i;
            worst = std::max(worst, std::abs(argmin - mean));
        }
        rep << "example2.distributions = " << count << "\n";
        rep << "example2.max_argmin_to_mean_distance = " << worst << " (one cell = 1.0e-02)\n";
    }

    // (iii) bounded quartic cost, uniform tau over cells: argmin F vs brute force
    {
        const int cells = static_cast<int>(r.integer("prop2.cells"));
        const int bound = static_cast<int>(r.integer("prop2.bound"));
        PixelGrid grid1d(cells, 1, 1.0);
        int center = cells / 2;
        std::vector<int> tau_cells;
        for (int i = center - bound; i <= center + bound; ++i) {
            if (i < 0 || i >= cells) throw ConfigError("prop2: bound exceeds the grid");
            tau_cells.push_back(i);
        }
        std::vector<double> tau_mass(tau_cells.size(), 1.0 / static_cast<double>(tau_cells.size()));

        transport::TransportCost cost;
        cost.form = transport::TransportCost::Form::BoundedQuartic;
        cost.sigma = r.real("prop2.sigma");

        int argmin_f = 0;
        double best = 0.0;
        std::vector<double> fvals(static_cast<std::size_t>(cells));
        for (int i = 0; i < cells; ++i) {
            double acc = 0.0;
            for (std::size_t ti = 0; ti < tau_cells.size(); ++ti) {
                double d = grid1d.center_x(i) - grid1d.center_x(tau_cells[ti]);
                acc += tau_mass[ti] * cost(d, 0.0);
            }
            fvals[static_cast<std::size_t>(i)] = acc;
            if (i == 0 || acc < best) {
                best = acc;
                argmin_f = i;
            }
        }
        std::vector<double> bf_values;
        int argmin_bf = sinkhorn_brute_force_argmin(grid1d, tau_cells, tau_mass, cost,
                                                    r.real("prop2.epsilon"),
                                                    static_cast<int>(r.integer("prop2.iterations")),
                                                    &bf_values);
        rep << "quartic.argmin_F_cell = " << argmin_f << "\n";
        rep << "quartic.sinkhorn_argmin_cell = " << argmin_bf << "\n";
        rep << "quartic.cell_distance = " << std::abs(argmin_f - argmin_bf) << "\n";

        std::ostringstream qcsv;
        qcsv << "cell,F,expected_sinkhorn\n" << std::setprecision(17);
        for (int i = 0; i < cells; ++i)
            qcsv << i << "," << fvals[static_cast<std::size_t>(i)] << ","
                 << bf_values[static_cast<std::size_t>(i)] << "\n";
        write_text(out_dir + "/quartic_profile.csv", qcsv.str());
    }

    write_text(out_dir + "/report.txt", rep.str());
    write_manifest(out_dir, "prop2", r,
                   {"example1_profile.csv", "quartic_profile.csv", "report.txt"});
}

// --- metric-check: sampled verification of the metric axioms -------------------

void cmd_metric_check(const Config& cfg, const std::string& out_dir) {
    Resolved r = metric_check_schema().resolve(cfg);
    std::vector<double> ns = r.real_list("metric.ns");
    const long triples = r.integer("metric.triples");
    const double box = r.real("metric.box");
    for (double n : ns)
        if (!(n >= 1.0)) throw ConfigError("metric.ns entries must be >= 1");
    if (triples < 1 || !(box > 0.0)) throw ConfigError("metric: bad parameters");

    fs::create_directories(out_dir);
    std::ostringstream rep, csv;
    rep << std::scientific << std::setprecision(6);
    csv << "n,triples,max_triangle_violation,max_symmetry_gap,max_identity_gap,violations_beyond_1e-12\n";
    csv << std::setprecision(17);

    for (std::size_t ni = 0; ni < ns.size(); ++ni) {
        double n = ns[ni];
        SeededRng rng(r.u64("seed"), ni);
        double max_tri = 0.0, max_sym = 0.0, max_id = 0.0;
        long violations = 0;
        for (long t = 0; t < triples; ++t) {
            double x[2] = {rng.uniform(-box, box), rng.uniform(-box, box)};
            double y[2] = {rng.uniform(-box, box), rng.uniform(-box, box)};
            double z[2] = {rng.uniform(-box, box), rng.uniform(-box, box)};
            double dxy = transport::metric_cost(x, y, n);
            double dyz = transport::metric_cost(y, z, n);
            double dxz = transport::metric_cost(x, z, n);
            double tri = dxz - dxy - dyz;
            max_tri = std::max(max_tri, tri);
            if (tri > 1e-12) ++violations;
            max_sym = std::max(max_sym, std::abs(dxy - transport::metric_cost(y, x, n)));
            max_id = std::max(max_id, transport::metric_cost(x, x, n));
        }
        rep << "n = " << n << ": max_triangle_violation = " << max_tri
            << ", violations_beyond_1e-12 = " << violations << ", max_symmetry_gap = " << max_sym
            << ", max_identity_gap = " << max_id << "\n";
        csv << n << "," << triples << "," << max_tri << "," << max_sym << "," << max_id << ","
            << violations << "\n";
    }
    write_text(out_dir + "/report.txt", rep.str());
    write_text(out_dir + "/metric_check.csv", csv.str());
    write_manifest(out_dir, "metric-check", r, {"metric_check.csv", "report.txt"});
}

} // namespace otrecon::cli
