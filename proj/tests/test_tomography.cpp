#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "otrecon/rng.hpp"
#include "otrecon/tomography.hpp"

using namespace otrecon;
using namespace otrecon::tomo;

TEST_CASE("zero image maps to zero sinogram and back") {
    PixelGrid grid(16, 16);
    ParallelBeamGeometry geom{7, 13, 1.0};
    DiscreteMeasure zero(grid);
    Sinogram s = ray_transform(zero, geom);
    for (double v : s.values) CHECK(v == 0.0);
    DiscreteMeasure back = backprojection(Sinogram(geom), grid);
    for (double v : back.values) CHECK(v == 0.0);
}

TEST_CASE("central ray through a disk integrates to the diameter") {
    const int n = 64;
    PixelGrid grid(n, n);
    const double r = 20.0;
    DiscreteMeasure disk(grid);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            double dx = grid.center_x(i) - n / 2.0;
            double dy = grid.center_y(j) - n / 2.0;
            if (dx * dx + dy * dy <= r * r) disk.at(i, j) = 1.0;
        }
    ParallelBeamGeometry geom{4, 31, 1.0}; // odd count: detector 15 passes through the center
    Sinogram s = ray_transform(disk, geom);
    for (int a = 0; a < geom.angles; ++a)
        CHECK(s.at(a, 15) == doctest::Approx(2.0 * r).epsilon(2.0 / (2.0 * r)));
}

TEST_CASE("forward matches the materialized sparse matrix") {
    PixelGrid grid(16, 16);
    ParallelBeamGeometry geom{10, 23, 1.0};
    RayTransform op(grid, geom);
    // dense rebuild from the stored rows
    std::vector<double> dense(static_cast<std::size_t>(geom.rays()) * grid.cells(), 0.0);
    for (int rray = 0; rray < geom.rays(); ++rray)
        for (std::size_t k = op.row_begin(rray); k < op.row_end(rray); ++k)
            dense[static_cast<std::size_t>(rray) * grid.cells() + op.entry_pixel(k)] =
                op.entry_weight(k);

    SeededRng rng(80, 0);
    DiscreteMeasure img(grid);
    for (double& v : img.values) v = rng.uniform(0.0, 1.0);
    Sinogram s = ray_transform(img, geom);
    for (int rray = 0; rray < geom.rays(); ++rray) {
        double acc = 0.0;
        for (int p = 0; p < grid.cells(); ++p)
            acc += dense[static_cast<std::size_t>(rray) * grid.cells() + p] * img.values[static_cast<std::size_t>(p)];
        CHECK(s.values[static_cast<std::size_t>(rray)] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("adjoint identity holds at machine precision") {
    PixelGrid grid(16, 16);
    ParallelBeamGeometry geom{10, 23, 1.0};
    RayTransform op(grid, geom);
    for (int t = 0; t < 10; ++t) {
        SeededRng rng(81, static_cast<std::uint64_t>(t));
        std::vector<double> f(static_cast<std::size_t>(grid.cells())), g(static_cast<std::size_t>(geom.rays()));
        for (double& v : f) v = rng.uniform(-1.0, 1.0);
        for (double& v : g) v = rng.uniform(-1.0, 1.0);
        std::vector<double> af(g.size()), atg(f.size());
        op.forward(f.data(), af.data());
        op.adjoint(g.data(), atg.data());
        double lhs = 0.0, rhs = 0.0, naf = 0.0, ng = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            lhs += af[i] * g[i];
            naf += af[i] * af[i];
            ng += g[i] * g[i];
        }
        for (std::size_t i = 0; i < f.size(); ++i) rhs += f[i] * atg[i];
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::sqrt(naf) * std::sqrt(ng));
    }
}

TEST_CASE("forward operator is linear") {
    PixelGrid grid(16, 16);
    ParallelBeamGeometry geom{6, 23, 1.0};
    RayTransform op(grid, geom);
    SeededRng rng(82, 0);
    std::vector<double> f(static_cast<std::size_t>(grid.cells())), h(f.size());
    for (double& v : f) v = rng.uniform(-1.0, 1.0);
    for (double& v : h) v = rng.uniform(-1.0, 1.0);
    double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    std::vector<double> combo(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) combo[i] = a * f[i] + b * h[i];
    std::vector<double> sf(static_cast<std::size_t>(geom.rays())), sh(sf.size()), sc(sf.size());
    op.forward(f.data(), sf.data());
    op.forward(h.data(), sh.data());
    op.forward(combo.data(), sc.data());
    for (std::size_t i = 0; i < sc.size(); ++i)
        CHECK(sc[i] == doctest::Approx(a * sf[i] + b * sh[i]).epsilon(1e-12));
}

TEST_CASE("centered disk sinogram is nearly constant across angles") {
    const int n = 64;
    PixelGrid grid(n, n);
    DiscreteMeasure disk(grid);
    const double r = 18.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            double dx = grid.center_x(i) - n / 2.0;
            double dy = grid.center_y(j) - n / 2.0;
            if (dx * dx + dy * dy <= r * r) disk.at(i, j) = 1.0;
        }
    ParallelBeamGeometry geom{30, 91, 1.0};
    Sinogram s = ray_transform(disk, geom);
    // total absorbed per view
    std::vector<double> view_sum(static_cast<std::size_t>(geom.angles), 0.0);
    for (int a = 0; a < geom.angles; ++a)
        for (int d = 0; d < geom.detectors; ++d) view_sum[static_cast<std::size_t>(a)] += s.at(a, d);
    double lo = view_sum[0], hi = view_sum[0];
    for (double v : view_sum) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK((hi - lo) / hi < 0.01);
}

TEST_CASE("single-ray backprojection is supported on that ray only") {
    PixelGrid grid(16, 16);
    ParallelBeamGeometry geom{4, 17, 1.0};
    RayTransform op(grid, geom);
    Sinogram s(geom);
    const int ray = 2 * geom.detectors + 8;
    s.values[static_cast<std::size_t>(ray)] = 1.0;
    DiscreteMeasure img = backprojection(s, grid);
    for (int p = 0; p < grid.cells(); ++p) {
        bool touched = false;
        for (std::size_t k = op.row_begin(ray); k < op.row_end(ray); ++k)
            if (op.entry_pixel(k) == p) touched = true;
        if (!touched) CHECK(img.values[static_cast<std::size_t>(p)] == 0.0);
    }
    double total = 0.0;
    for (double v : img.values) total += std::abs(v);
    CHECK(total > 0.0);
}

TEST_CASE("rays that miss the domain produce empty rows") {
    PixelGrid grid(8, 8);
    ParallelBeamGeometry geom{1, 41, 1.0}; // detectors far beyond the image
    RayTransform op(grid, geom);
    CHECK(op.row_end(0) == op.row_begin(0)); // outermost detector s = -20
}

TEST_CASE("non-square grids are rejected") {
    CHECK_THROWS_AS(RayTransform(PixelGrid(8, 4), ParallelBeamGeometry{4, 9, 1.0}), ContractError);
}

TEST_CASE("sinogram raw round-trip") {
    ParallelBeamGeometry geom{3, 5, 0.5};
    Sinogram s(geom);
    SeededRng rng(83, 0);
    for (double& v : s.values) v = rng.uniform(-2.0, 2.0);
    std::string path = (std::filesystem::temp_directory_path() / "ots_test.ots").string();
    save_raw(s, path);
    Sinogram back = load_raw_sinogram(path);
    CHECK(back.geom == geom);
    for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(back.values[i] == s.values[i]);
    std::filesystem::remove(path);
}
