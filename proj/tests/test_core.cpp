#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "otrecon/grid.hpp"
#include "otrecon/rng.hpp"

using namespace otrecon;

TEST_CASE("mass examples") {
    DiscreteMeasure zero(PixelGrid(4, 4));
    CHECK(mass(zero) == 0.0);

    DiscreteMeasure atom(PixelGrid(4, 4));
    atom.at(2, 1) = 2.5;
    CHECK(mass(atom) == 2.5);

    DiscreteMeasure ones(PixelGrid(3, 3), std::vector<double>(9, 1.0));
    CHECK(mass(ones) == 9.0);
}

TEST_CASE("normalize_mass examples and idempotence") {
    DiscreteMeasure ones(PixelGrid(2, 2), std::vector<double>(4, 1.0));
    DiscreteMeasure n = normalize_mass(ones, 1.0);
    for (double v : n.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    DiscreteMeasure m(PixelGrid(3, 2));
    m.at(0, 0) = 0.3;
    m.at(2, 1) = 1.9;
    DiscreteMeasure same = normalize_mass(m, mass(m));
    for (int i = 0; i < m.grid.cells(); ++i)
        CHECK(same.values[i] == doctest::Approx(m.values[i]).epsilon(1e-15));

    DiscreteMeasure atom(PixelGrid(3, 3));
    atom.at(1, 2) = 4.0;
    DiscreteMeasure unit = normalize_mass(atom, 1.0);
    CHECK(unit.at(1, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mass(unit) == doctest::Approx(1.0).epsilon(1e-12));

    // idempotent at its own target
    DiscreteMeasure once = normalize_mass(m, 7.5);
    DiscreteMeasure twice = normalize_mass(once, 7.5);
    for (int i = 0; i < m.grid.cells(); ++i)
        CHECK(twice.values[i] == doctest::Approx(once.values[i]).epsilon(1e-12));

    DiscreteMeasure zero(PixelGrid(2, 2));
    CHECK_THROWS_AS(normalize_mass(zero, 1.0), ContractError);
    CHECK_THROWS_AS(normalize_mass(m, 0.0), ContractError);
}

TEST_CASE("add_background examples and mass-ratio preservation") {
    DiscreteMeasure m(PixelGrid(3, 3), std::vector<double>(9, 1.0));
    DiscreteMeasure same = add_background(m, 0.0);
    for (int i = 0; i < 9; ++i) CHECK(same.values[i] == m.values[i]);

    DiscreteMeasure shifted = add_background(m, 9e-6);
    for (double v : shifted.values) CHECK(v == doctest::Approx(1.0 + 9e-6).epsilon(1e-15));

    DiscreteMeasure zero(PixelGrid(3, 3));
    DiscreteMeasure still_zero = add_background(zero, 0.5);
    CHECK(mass(still_zero) == 0.0);

    // equal masses stay equal
    SeededRng rng(11, 0);
    DiscreteMeasure a(PixelGrid(4, 4)), b(PixelGrid(4, 4));
    for (double& v : a.values) v = rng.uniform();
    for (double& v : b.values) v = rng.uniform();
    b = normalize_mass(b, mass(a));
    CHECK(mass(add_background(a, 0.37)) ==
          doctest::Approx(mass(add_background(b, 0.37))).epsilon(1e-12));

    CHECK_THROWS_AS(add_background(m, -1.0), ContractError);
}

TEST_CASE("grid invariants") {
    CHECK_THROWS_AS(PixelGrid(0, 4), ContractError);
    CHECK_THROWS_AS(PixelGrid(4, 4, 0.0), ContractError);
    PixelGrid g(5, 3, 2.0);
    CHECK(g.index(4, 2) == 14);
    CHECK(g.center_x(0) == doctest::Approx(1.0));
    CHECK(g.center_y(2) == doctest::Approx(5.0));
    CHECK_THROWS_AS(DiscreteMeasure(g, std::vector<double>(7, 0.0)), ContractError);
}

TEST_CASE("seeded rng determinism and stream independence") {
    SeededRng a(42, 7), b(42, 7), c(42, 8);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
        all_equal = all_equal && (x == y);
        any_diff = any_diff || (x != z);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("rng uniform and gaussian ranges") {
    SeededRng rng(3, 0);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sumsq += u * u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(sumsq / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12.0).epsilon(0.02));

    double gsum = 0.0, gsumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double g = rng.gaussian();
        gsum += g;
        gsumsq += g * g;
    }
    CHECK(std::abs(gsum / n) < 0.01);
    CHECK(gsumsq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rng next_below is exact and in range") {
    SeededRng rng(9, 1);
    int counts[7] = {0};
    for (int i = 0; i < 70000; ++i) ++counts[rng.next_below(7)];
    for (int k = 0; k < 7; ++k) CHECK(counts[k] == doctest::Approx(10000).epsilon(0.05));
}

TEST_CASE("raw measure round-trip is lossless") {
    SeededRng rng(5, 0);
    DiscreteMeasure m(PixelGrid(7, 5, 0.25));
    for (double& v : m.values) v = rng.uniform(-3.0, 3.0);
    std::string path = (std::filesystem::temp_directory_path() / "otr_test_roundtrip.otr").string();
    save_raw(m, path);
    DiscreteMeasure back = load_raw(path);
    CHECK(back.grid.width == 7);
    CHECK(back.grid.height == 5);
    CHECK(back.grid.spacing == 0.25);
    for (int i = 0; i < m.grid.cells(); ++i) CHECK(back.values[i] == m.values[i]);
    std::filesystem::remove(path);
}

TEST_CASE("pgm16 header and size") {
    DiscreteMeasure m(PixelGrid(4, 3));
    m.at(0, 0) = -1.0;
    m.at(3, 2) = 2.0;
    std::string path = (std::filesystem::temp_directory_path() / "otr_test.pgm").string();
    save_pgm16(m, path);
    std::ifstream is(path, std::ios::binary);
    std::string magic, dims;
    std::getline(is, magic);
    CHECK(magic == "P5");
    CHECK(std::filesystem::file_size(path) > 24u); // header + 24 bytes of samples
    std::filesystem::remove(path);
}

TEST_CASE("image moments of a symmetric blob") {
    DiscreteMeasure m(PixelGrid(9, 9));
    m.at(4, 4) = 2.0;
    m.at(3, 4) = 1.0;
    m.at(5, 4) = 1.0;
    m.at(4, 3) = 1.0;
    m.at(4, 5) = 1.0;
    Moments mo = image_moments(m);
    CHECK(mo.mass == doctest::Approx(6.0));
    CHECK(mo.cx == doctest::Approx(4.5));
    CHECK(mo.cy == doctest::Approx(4.5));
    CHECK(mo.spread == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
}
