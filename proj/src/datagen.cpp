#include "otrecon/datagen.hpp"

#include <cmath>

namespace otrecon::datagen {

void PhantomSpec::validate() const {
    if (count_min < 0 || count_max < count_min)
        throw ContractError("PhantomSpec: bad circle count range");
    if (!(radius_min > 0.0) || radius_max < radius_min)
        throw ContractError("PhantomSpec: bad radius range");
    if (intensity_max < intensity_min)
        throw ContractError("PhantomSpec: bad intensity range");
    if (margin < 0.0)
        throw ContractError("PhantomSpec: margin must be >= 0");
    if (2.0 * margin >= static_cast<double>(grid.width) ||
        2.0 * margin >= static_cast<double>(grid.height))
        throw ContractError("PhantomSpec: margin leaves no room for circle centers");
}

void MisalignmentSpec::validate() const {
    if (bound < 0.0) throw ContractError("MisalignmentSpec: bound must be >= 0");
}

void NoiseSpec::validate() const {
    if (level < 0.0) throw ContractError("NoiseSpec: level must be >= 0");
}

DiscreteMeasure render_circles(const std::vector<Circle>& circles, const PixelGrid& grid) {
    DiscreteMeasure img(grid);
    const int ss = 4; // supersampling factor per axis
    for (const Circle& c : circles) {
        double r2 = c.radius * c.radius;
        int i_lo = std::max(0, static_cast<int>(std::floor(c.cx - c.radius - 1.0)));
        int i_hi = std::min(grid.width - 1, static_cast<int>(std::ceil(c.cx + c.radius + 1.0)));
        int j_lo = std::max(0, static_cast<int>(std::floor(c.cy - c.radius - 1.0)));
        int j_hi = std::min(grid.height - 1, static_cast<int>(std::ceil(c.cy + c.radius + 1.0)));
        for (int j = j_lo; j <= j_hi; ++j) {
            for (int i = i_lo; i <= i_hi; ++i) {
                int inside = 0;
                for (int sy = 0; sy < ss; ++sy) {
                    double py = j + (sy + 0.5) / ss;
                    double dy = py - c.cy;
                    for (int sx = 0; sx < ss; ++sx) {
                        double px = i + (sx + 0.5) / ss;
                        double dx = px - c.cx;
                        if (dx * dx + dy * dy <= r2) ++inside;
                    }
                }
                if (inside > 0)
                    img.at(i, j) += c.intensity * static_cast<double>(inside) / (ss * ss);
            }
        }
    }
    return img;
}

std::vector<Circle> sample_circles(const PhantomSpec& spec, SeededRng& rng) {
    spec.validate();
    int count = spec.count_min;
    if (spec.count_max > spec.count_min)
        count += static_cast<int>(rng.next_below(
            static_cast<std::uint64_t>(spec.count_max - spec.count_min + 1)));
    std::vector<Circle> circles;
    circles.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        Circle c;
        c.cx = rng.uniform(spec.margin, static_cast<double>(spec.grid.width) - spec.margin);
        c.cy = rng.uniform(spec.margin, static_cast<double>(spec.grid.height) - spec.margin);
        c.radius = rng.uniform(spec.radius_min, spec.radius_max);
        c.intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
        circles.push_back(c);
    }
    return circles;
}

ShiftedPhantom shift_phantom(const std::vector<Circle>& circles, const MisalignmentSpec& mis,
                             SeededRng& rng, const PixelGrid& grid) {
    mis.validate();
    ShiftedPhantom out;
    out.shifts.reserve(circles.size());
    std::vector<Circle> shifted = circles;

    auto fits = [&](const Circle& c, double sx, double sy) {
        double x = c.cx + sx, y = c.cy + sy;
        return x - c.radius >= 0.0 && x + c.radius <= static_cast<double>(grid.width) &&
               y - c.radius >= 0.0 && y + c.radius <= static_cast<double>(grid.height);
    };

    const int max_redraws = 10000;
    if (mis.per_circle) {
        for (std::size_t k = 0; k < circles.size(); ++k) {
            double sx = 0.0, sy = 0.0;
            for (int attempt = 0;; ++attempt) {
                sx = rng.uniform(-mis.bound, mis.bound);
                sy = rng.uniform(-mis.bound, mis.bound);
                if (fits(circles[k], sx, sy)) break;
                ++out.redraws;
                if (attempt >= max_redraws)
                    throw ContractError("shift_phantom: no admissible shift after 10000 redraws");
            }
            shifted[k].cx += sx;
            shifted[k].cy += sy;
            out.shifts.push_back({sx, sy});
        }
    } else {
        double sx = 0.0, sy = 0.0;
        for (int attempt = 0;; ++attempt) {
            sx = rng.uniform(-mis.bound, mis.bound);
            sy = rng.uniform(-mis.bound, mis.bound);
            bool ok = true;
            for (const Circle& c : circles)
                if (!fits(c, sx, sy)) ok = false;
            if (ok) break;
            ++out.redraws;
            if (attempt >= max_redraws)
                throw ContractError("shift_phantom: no admissible shift after 10000 redraws");
        }
        for (std::size_t k = 0; k < circles.size(); ++k) {
            shifted[k].cx += sx;
            shifted[k].cy += sy;
            out.shifts.push_back({sx, sy});
        }
    }
    out.image = render_circles(shifted, grid);
    return out;
}

TrainingPair make_pair(const PhantomSpec& spec, const MisalignmentSpec& mis, const NoiseSpec& noise,
                       const tomo::RayTransform& op, SeededRng& rng) {
    noise.validate();
    std::vector<Circle> circles = sample_circles(spec, rng);
    TrainingPair pair;
    pair.truth = render_circles(circles, spec.grid);
    ShiftedPhantom shifted = shift_phantom(circles, mis, rng, spec.grid);
    pair.shifted_truth = shifted.image;
    pair.shifts = shifted.shifts;
    pair.shift_redraws = shifted.redraws;

    tomo::Sinogram clean(op.geometry());
    op.forward(pair.shifted_truth.values.data(), clean.values.data());
    double mean = 0.0;
    for (double v : clean.values) mean += v;
    mean /= static_cast<double>(clean.values.size());
    double sigma = noise.level * mean;

    pair.data = clean;
    if (sigma > 0.0)
        for (double& v : pair.data.values) v += sigma * rng.gaussian();
    return pair;
}

TrainingPair make_pair(const PhantomSpec& spec, const MisalignmentSpec& mis, const NoiseSpec& noise,
                       const tomo::ParallelBeamGeometry& geom, SeededRng& rng) {
    tomo::RayTransform op(spec.grid, geom);
    return make_pair(spec, mis, noise, op, rng);
}

} // namespace otrecon::datagen
