#include "otrecon/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binio.hpp"

namespace otrecon::tomo {

namespace {
constexpr double PI = 3.14159265358979323846;
}

RayTransform::RayTransform(const PixelGrid& grid, const ParallelBeamGeometry& geom)
    : grid_(grid), geom_(geom) {
    if (grid.width != grid.height)
        throw ContractError("RayTransform: grid must be square");
    if (geom.angles < 1 || geom.detectors < 1 || !(geom.det_spacing > 0.0))
        throw ContractError("RayTransform: invalid geometry");

    const int w = grid.width, h = grid.height;
    const double spacing = grid.spacing;
    const double cx = 0.5 * w * spacing, cy = 0.5 * h * spacing;
    const double step = 0.5 * spacing;
    const double radius = 0.5 * spacing * std::hypot(static_cast<double>(w), static_cast<double>(h));
    const int nsteps = static_cast<int>(std::ceil(2.0 * radius / step));

    row_ptr_.reserve(static_cast<std::size_t>(geom.rays()) + 1);
    row_ptr_.push_back(0);

    // scratch for accumulating one row without duplicate pixel entries
    std::vector<double> acc(static_cast<std::size_t>(grid.cells()), 0.0);
    std::vector<std::int32_t> touched;
    touched.reserve(1024);

    for (int a = 0; a < geom.angles; ++a) {
        double theta = static_cast<double>(a) * PI / static_cast<double>(geom.angles);
        double wx = std::cos(theta), wy = std::sin(theta);   // detector axis
        double dx = -std::sin(theta), dy = std::cos(theta);  // ray direction
        for (int d = 0; d < geom.detectors; ++d) {
            double s = (static_cast<double>(d) - 0.5 * (geom.detectors - 1)) * geom.det_spacing;
            double ox = cx + s * wx, oy = cy + s * wy;
            for (int k = 0; k < nsteps; ++k) {
                double t = -radius + (static_cast<double>(k) + 0.5) * step;
                double px = ox + t * dx, py = oy + t * dy;
                // bilinear weights on the pixel-center lattice
                double gx = px / spacing - 0.5, gy = py / spacing - 0.5;
                int i0 = static_cast<int>(std::floor(gx));
                int j0 = static_cast<int>(std::floor(gy));
                double fx = gx - i0, fy = gy - j0;
                const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
                const int pi[4] = {i0, i0 + 1, i0, i0 + 1};
                const int pj[4] = {j0, j0, j0 + 1, j0 + 1};
                for (int c = 0; c < 4; ++c) {
                    if (pi[c] < 0 || pi[c] >= w || pj[c] < 0 || pj[c] >= h) continue;
                    if (wgt[c] == 0.0) continue;
                    std::int32_t idx = static_cast<std::int32_t>(grid.index(pi[c], pj[c]));
                    if (acc[static_cast<std::size_t>(idx)] == 0.0) touched.push_back(idx);
                    acc[static_cast<std::size_t>(idx)] += wgt[c] * step;
                }
            }
            std::sort(touched.begin(), touched.end());
            for (std::int32_t idx : touched) {
                cols_.push_back(idx);
                weights_.push_back(acc[static_cast<std::size_t>(idx)]);
                acc[static_cast<std::size_t>(idx)] = 0.0;
            }
            touched.clear();
            row_ptr_.push_back(cols_.size());
        }
    }
}

void RayTransform::forward(const double* img, double* sino) const {
    const int rays = geom_.rays();
    for (int r = 0; r < rays; ++r) {
        double s = 0.0;
        for (std::size_t k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k)
            s += weights_[k] * img[cols_[k]];
        sino[r] = s;
    }
}

void RayTransform::adjoint(const double* sino, double* img) const {
    std::fill(img, img + grid_.cells(), 0.0);
    const int rays = geom_.rays();
    for (int r = 0; r < rays; ++r) {
        double v = sino[r];
        if (v == 0.0) continue;
        for (std::size_t k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k)
            img[cols_[k]] += weights_[k] * v;
    }
}

Sinogram ray_transform(const DiscreteMeasure& f, const ParallelBeamGeometry& geom) {
    RayTransform op(f.grid, geom);
    Sinogram s(geom);
    op.forward(f.values.data(), s.values.data());
    return s;
}

DiscreteMeasure backprojection(const Sinogram& s, const PixelGrid& grid) {
    RayTransform op(grid, s.geom);
    DiscreteMeasure m(grid);
    op.adjoint(s.values.data(), m.values.data());
    return m;
}

using binio::get_f64;
using binio::get_u32;
using binio::put_f64;
using binio::put_u32;

void save_raw(const Sinogram& s, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("save_raw: cannot open " + path);
    os.write("OTS1", 4);
    put_u32(os, static_cast<std::uint32_t>(s.geom.angles));
    put_u32(os, static_cast<std::uint32_t>(s.geom.detectors));
    put_f64(os, s.geom.det_spacing);
    for (double v : s.values) put_f64(os, v);
    if (!os) throw ContractError("save_raw: write failed for " + path);
}

Sinogram load_raw_sinogram(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ContractError("load_raw_sinogram: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::strncmp(magic, "OTS1", 4) != 0)
        throw ContractError("load_raw_sinogram: bad magic in " + path);
    ParallelBeamGeometry g;
    g.angles = static_cast<int>(get_u32(is));
    g.detectors = static_cast<int>(get_u32(is));
    g.det_spacing = get_f64(is);
    if (!is || g.angles < 1 || g.detectors < 1 || !(g.det_spacing > 0.0))
        throw ContractError("load_raw_sinogram: corrupt header in " + path);
    Sinogram s(g);
    for (double& v : s.values) v = get_f64(is);
    if (!is) throw ContractError("load_raw_sinogram: truncated file " + path);
    return s;
}

} // namespace otrecon::tomo
