#include "otrecon/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "binio.hpp"

namespace otrecon {

DiscreteMeasure::DiscreteMeasure(const PixelGrid& g, std::vector<double> v)
    : grid(g), values(std::move(v)) {
    if (values.size() != static_cast<std::size_t>(g.cells()))
        throw ContractError("DiscreteMeasure: value count does not match grid");
}

double mass(const DiscreteMeasure& m) {
    double s = 0.0;
    for (double v : m.values) s += v;
    return s;
}

DiscreteMeasure normalize_mass(const DiscreteMeasure& m, double target) {
    if (!(target > 0.0))
        throw ContractError("normalize_mass: target must be > 0");
    double total = mass(m);
    if (!(total > 0.0))
        throw ContractError("normalize_mass: degenerate input, mass(m) <= 0");
    DiscreteMeasure out = m;
    double f = target / total;
    for (double& v : out.values) v *= f;
    return out;
}

DiscreteMeasure add_background(const DiscreteMeasure& m, double rho) {
    if (rho < 0.0)
        throw ContractError("add_background: rho must be >= 0");
    DiscreteMeasure out = m;
    double shift = rho * mass(m) / static_cast<double>(m.grid.cells());
    for (double& v : out.values) v += shift;
    return out;
}

Moments image_moments(const DiscreteMeasure& m) {
    Moments mo;
    const PixelGrid& g = m.grid;
    double sx = 0.0, sy = 0.0;
    for (int j = 0; j < g.height; ++j)
        for (int i = 0; i < g.width; ++i) {
            double v = m.at(i, j);
            mo.mass += v;
            sx += v * g.center_x(i);
            sy += v * g.center_y(j);
        }
    if (mo.mass == 0.0) return mo;
    mo.cx = sx / mo.mass;
    mo.cy = sy / mo.mass;
    double acc = 0.0;
    for (int j = 0; j < g.height; ++j)
        for (int i = 0; i < g.width; ++i) {
            double dx = g.center_x(i) - mo.cx;
            double dy = g.center_y(j) - mo.cy;
            acc += m.at(i, j) * (dx * dx + dy * dy);
        }
    mo.spread = acc / mo.mass;
    return mo;
}

using binio::get_f64;
using binio::get_u32;
using binio::put_f64;
using binio::put_u32;

void save_raw(const DiscreteMeasure& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("save_raw: cannot open " + path);
    os.write("OTR1", 4);
    put_u32(os, static_cast<std::uint32_t>(m.grid.width));
    put_u32(os, static_cast<std::uint32_t>(m.grid.height));
    put_f64(os, m.grid.spacing);
    for (double v : m.values) put_f64(os, v);
    if (!os) throw ContractError("save_raw: write failed for " + path);
}

DiscreteMeasure load_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("load_raw: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::strncmp(magic, "OTR1", 4) != 0)
        throw ContractError("load_raw: bad magic in " + path);
    std::uint32_t w = get_u32(is), h = get_u32(is);
    double spacing = get_f64(is);
    if (!is || w == 0 || h == 0 || !(spacing > 0.0))
        throw ContractError("load_raw: corrupt header in " + path);
    PixelGrid grid(static_cast<int>(w), static_cast<int>(h), spacing);
    DiscreteMeasure m(grid);
    for (double& v : m.values) v = get_f64(is);
    if (!is) throw ContractError("load_raw: truncated file " + path);
    return m;
}

void save_pgm16(const DiscreteMeasure& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("save_pgm16: cannot open " + path);
    double lo = *std::min_element(m.values.begin(), m.values.end());
    double hi = *std::max_element(m.values.begin(), m.values.end());
    double scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;
    os << "P5\n" << m.grid.width << " " << m.grid.height << "\n65535\n";
    for (double v : m.values) {
        auto q = static_cast<std::uint32_t>(std::lround((v - lo) * scale));
        q = std::min<std::uint32_t>(q, 65535u);
        // PGM 16-bit samples are most-significant byte first
        unsigned char b[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!os) throw ContractError("save_pgm16: write failed for " + path);
}

} // namespace otrecon
