#pragma once

#include <string>
#include <vector>

#include "otrecon/errors.hpp"

namespace otrecon {

// Rectangular pixel grid. Index layout is row-major with
// (row j, column i) -> j*width + i, and pixel centers sit at
// ((i + 0.5)*spacing, (j + 0.5)*spacing) from the domain corner. Every
// module (transport, tomography, network) uses this one convention.
struct PixelGrid {
    int width = 0;
    int height = 0;
    double spacing = 1.0;

    PixelGrid() = default;
    PixelGrid(int w, int h, double s = 1.0) : width(w), height(h), spacing(s) {
        if (w < 1 || h < 1 || !(s > 0.0))
            throw ContractError("PixelGrid: width/height must be >= 1 and spacing > 0");
    }

    int cells() const { return width * height; }
    int index(int i, int j) const { return j * width + i; }
    double center_x(int i) const { return (i + 0.5) * spacing; }
    double center_y(int j) const { return (j + 0.5) * spacing; }

    bool operator==(const PixelGrid& o) const {
        return width == o.width && height == o.height && spacing == o.spacing;
    }
};

// Nonnegative pixel mass vector when used as a transport marginal; a plain
// real-valued image otherwise (network outputs may dip below zero).
struct DiscreteMeasure {
    PixelGrid grid;
    std::vector<double> values;

    DiscreteMeasure() = default;
    explicit DiscreteMeasure(const PixelGrid& g, double fill = 0.0)
        : grid(g), values(static_cast<std::size_t>(g.cells()), fill) {}
    DiscreteMeasure(const PixelGrid& g, std::vector<double> v);

    double& at(int i, int j) { return values[static_cast<std::size_t>(grid.index(i, j))]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(grid.index(i, j))]; }
};

double mass(const DiscreteMeasure& m);

// Scales m so its total mass equals target. Zero or negative input mass is
// a degenerate input, never a silent division.
DiscreteMeasure normalize_mass(const DiscreteMeasure& m, double target);

// Adds rho*mass(m)/n to every pixel. With rho > 0 and positive mass the
// result is strictly positive, which is what the Sinkhorn divisions need.
DiscreteMeasure add_background(const DiscreteMeasure& m, double rho);

// Centroid (mass-weighted mean position, in length units) and the trace of
// the second central moment matrix of the image treated as a density.
struct Moments {
    double mass = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double spread = 0.0; // trace of second central moment
};
Moments image_moments(const DiscreteMeasure& m);

// Lossless raw container: magic "OTR1", u32 width, u32 height (LE),
// f64 spacing, then width*height f64 values, all little-endian.
void save_raw(const DiscreteMeasure& m, const std::string& path);
DiscreteMeasure load_raw(const std::string& path);

// 16-bit binary PGM (P5) after affine rescaling of [min, max] to
// [0, 65535]; for figures only, not a round-trip format.
void save_pgm16(const DiscreteMeasure& m, const std::string& path);

} // namespace otrecon
