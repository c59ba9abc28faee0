#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otrecon/grid.hpp"

namespace otrecon::tomo {

// Parallel-beam acquisition: angle k is theta_k = k*pi/angle_count, detector
// cells lie on the axis orthogonal to the ray direction, centered symmetric
// about the domain center.
struct ParallelBeamGeometry {
    int angles = 30;
    int detectors = 91;
    double det_spacing = 1.0;

    int rays() const { return angles * detectors; }
    bool operator==(const ParallelBeamGeometry& o) const {
        return angles == o.angles && detectors == o.detectors && det_spacing == o.det_spacing;
    }
};

// Line-integral data, angle-major layout (angles x detectors).
struct Sinogram {
    ParallelBeamGeometry geom;
    std::vector<double> values;

    Sinogram() = default;
    explicit Sinogram(const ParallelBeamGeometry& g, double fill = 0.0)
        : geom(g), values(static_cast<std::size_t>(g.rays()), fill) {}

    double& at(int angle, int det) { return values[static_cast<std::size_t>(angle) * geom.detectors + det]; }
    double at(int angle, int det) const { return values[static_cast<std::size_t>(angle) * geom.detectors + det]; }
};

// Discretized ray transform: each ray is sampled at steps of spacing/2 with
// bilinear interpolation at pixel centers and scaled by the step length.
// The rows of the resulting sparse operator are materialized once, so the
// adjoint is the exact algebraic transpose -- the property the unrolled
// network gradients rely on. Immutable after construction and shareable.
class RayTransform {
public:
    RayTransform(const PixelGrid& grid, const ParallelBeamGeometry& geom);

    const PixelGrid& grid() const { return grid_; }
    const ParallelBeamGeometry& geometry() const { return geom_; }

    // sino[r] = sum_p w[r,p] img[p]
    void forward(const double* img, double* sino) const;
    // img[p] += is replaced: img = W^T sino (overwrites)
    void adjoint(const double* sino, double* img) const;

    // row access for tests that rebuild the dense operator
    std::size_t row_begin(int ray) const { return row_ptr_[static_cast<std::size_t>(ray)]; }
    std::size_t row_end(int ray) const { return row_ptr_[static_cast<std::size_t>(ray) + 1]; }
    std::int32_t entry_pixel(std::size_t k) const { return cols_[k]; }
    double entry_weight(std::size_t k) const { return weights_[k]; }

private:
    PixelGrid grid_;
    ParallelBeamGeometry geom_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::int32_t> cols_;
    std::vector<double> weights_;
};

Sinogram ray_transform(const DiscreteMeasure& f, const ParallelBeamGeometry& geom);
DiscreteMeasure backprojection(const Sinogram& s, const PixelGrid& grid);

// Raw sinogram container: magic "OTS1", u32 angles, u32 detectors,
// f64 det_spacing, then angle-major f64 values, all little-endian.
void save_raw(const Sinogram& s, const std::string& path);
Sinogram load_raw_sinogram(const std::string& path);

} // namespace otrecon::tomo
