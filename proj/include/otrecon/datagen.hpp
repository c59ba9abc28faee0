#pragma once

#include <array>
#include <vector>

#include "otrecon/grid.hpp"
#include "otrecon/rng.hpp"
#include "otrecon/tomography.hpp"

namespace otrecon::datagen {

// One disk of the phantom, in pixel units relative to the grid corner.
struct Circle {
    double cx, cy, radius, intensity;
};

struct PhantomSpec {
    PixelGrid grid;
    int count_min = 2;
    int count_max = 6;
    double radius_min = 4.0;  // pixels
    double radius_max = 12.0; // pixels
    double intensity_min = 0.5;
    double intensity_max = 1.0;
    // border kept clear so every shifted circle stays inside the domain;
    // callers default this to radius_max + shift bound
    double margin = 17.0;

    void validate() const;
};

struct MisalignmentSpec {
    double bound = 5.0;     // pixels, per component, uniform on [-bound, bound]
    bool per_circle = true; // one independent shift per circle, else one global

    void validate() const;
};

struct NoiseSpec {
    double level = 0.05; // sigma = level * mean(clean sinogram entries)

    void validate() const;
};

// (g, f) with f the unshifted phantom and g the noisy sinogram of the
// shifted one; the shifted rendering and the applied shifts are kept for
// diagnostics and figures.
struct TrainingPair {
    DiscreteMeasure truth;
    DiscreteMeasure shifted_truth;
    tomo::Sinogram data;
    std::vector<std::array<double, 2>> shifts;
    int shift_redraws = 0;
};

// Anti-aliased rendering: pixel value = sum over circles of intensity times
// the 4x4-supersampled coverage fraction. Overlapping circles add.
DiscreteMeasure render_circles(const std::vector<Circle>& circles, const PixelGrid& grid);

std::vector<Circle> sample_circles(const PhantomSpec& spec, SeededRng& rng);

inline DiscreteMeasure sample_phantom(const PhantomSpec& spec, SeededRng& rng,
                                      std::vector<Circle>* out_circles = nullptr) {
    std::vector<Circle> c = sample_circles(spec, rng);
    if (out_circles) *out_circles = c;
    return render_circles(c, spec.grid);
}

// Draws the per-circle (or global) shifts and re-renders. A shift that would
// push a circle outside the domain is redrawn; the redraw count is reported.
struct ShiftedPhantom {
    DiscreteMeasure image;
    std::vector<std::array<double, 2>> shifts;
    int redraws = 0;
};
ShiftedPhantom shift_phantom(const std::vector<Circle>& circles, const MisalignmentSpec& mis,
                             SeededRng& rng, const PixelGrid& grid);

TrainingPair make_pair(const PhantomSpec& spec, const MisalignmentSpec& mis, const NoiseSpec& noise,
                       const tomo::ParallelBeamGeometry& geom, SeededRng& rng);

// Same, reusing a prebuilt operator for the hot training path.
TrainingPair make_pair(const PhantomSpec& spec, const MisalignmentSpec& mis, const NoiseSpec& noise,
                       const tomo::RayTransform& op, SeededRng& rng);

} // namespace otrecon::datagen
