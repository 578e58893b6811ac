#pragma once

#include <vector>

#include "magtv/forward.hpp"
#include "magtv/grid.hpp"
#include "magtv/measure.hpp"
#include "magtv/rng.hpp"

namespace magtv::testing {

inline Box3 unit_slab() { return Box3{Vec3(0, 0, 0), Vec3(1, 1, 0.5)}; }

inline Vec3 random_unit(Rng& rng) {
    Vec3 v(rng.gaussian(), rng.gaussian(), rng.gaussian());
    while (v.norm() < 1e-6) v = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
    return v.normalized();
}

/// Regular sensor plane hovering `height` above the region top.
inline SensorGrid plane_sensors(const Box3& region, int nx, int ny,
                                double height, double margin = 0.15,
                                Vec3 direction = Vec3(0, 0, 1)) {
    SensorGrid g;
    g.direction = direction.normalized();
    const double x0 = region.lo.x() - margin, x1 = region.hi.x() + margin;
    const double y0 = region.lo.y() - margin, y1 = region.hi.y() + margin;
    const double z = region.hi.z() + height;
    const double dx = (x1 - x0) / nx, dy = (y1 - y0) / ny;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            g.points.emplace_back(x0 + (ix + 0.5) * dx, y0 + (iy + 0.5) * dy, z);
        }
    }
    g.weights = VectorXd::Constant(nx * ny, (x1 - x0) * (y1 - y0) / (nx * ny));
    return g;
}

/// Scattered sensors above the region with nonuniform weights.
inline SensorGrid random_sensors(Rng& rng, int n, const Box3& region,
                                 double min_height = 0.3) {
    SensorGrid g;
    g.direction = random_unit(rng);
    for (int i = 0; i < n; ++i) {
        g.points.emplace_back(rng.uniform(region.lo.x() - 0.3, region.hi.x() + 0.3),
                              rng.uniform(region.lo.y() - 0.3, region.hi.y() + 0.3),
                              region.hi.z() + min_height + rng.uniform(0.0, 0.8));
    }
    g.weights = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) g.weights[i] = rng.uniform(0.5, 1.5);
    return g;
}

inline DiscreteVectorMeasure random_measure(Rng& rng, const Box3& region,
                                            int atoms, double mscale = 1.0) {
    std::vector<Atom> list;
    for (int i = 0; i < atoms; ++i) {
        Vec3 p;
        for (int a = 0; a < 3; ++a) {
            p[a] = rng.uniform(region.lo[a], region.hi[a]);
        }
        list.push_back(Atom{p, mscale * Vec3(rng.gaussian(), rng.gaussian(),
                                             rng.gaussian())});
    }
    return DiscreteVectorMeasure::merged(list);
}

inline VectorXd random_vector(Rng& rng, int n, double scale = 1.0) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * rng.gaussian();
    return v;
}

inline AssembleOptions unit_options(double gap = 1e-6) {
    AssembleOptions opts;
    opts.scale = 1.0;
    opts.separation_gap = gap;
    return opts;
}

inline DipoleGsmSpace centers_space(const Box3& region,
                                    std::array<int, 3> res) {
    return DipoleGsmSpace::cell_centers(VoxelPartition(region, res));
}

}  // namespace magtv::testing
