#include "cbctcad/projector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cbctcad/errors.hpp"
#include "cbctcad/parallel.hpp"

namespace cbctcad {
namespace {

struct GridHull {
    Vec3 lo, hi;  // outermost voxel centers
};

GridHull grid_hull(const Volume& vol) {
    GridHull h;
    h.lo = {vol.origin_mm[0], vol.origin_mm[1], vol.origin_mm[2]};
    h.hi = {vol.origin_mm[0] + (vol.dims[0] - 1) * vol.spacing_mm[0],
            vol.origin_mm[1] + (vol.dims[1] - 1) * vol.spacing_mm[1],
            vol.origin_mm[2] + (vol.dims[2] - 1) * vol.spacing_mm[2]};
    return h;
}

// Slab clip of the parametric ray src + t * dir against the hull. Returns
// false when the ray misses.
bool clip_ray(const GridHull& hull, const Vec3& src, const Vec3& dir, double& t0, double& t1) {
    t0 = 0.0;
    t1 = std::numeric_limits<double>::infinity();
    const double lo[3] = {hull.lo.x, hull.lo.y, hull.lo.z};
    const double hi[3] = {hull.hi.x, hull.hi.y, hull.hi.z};
    const double s[3] = {src.x, src.y, src.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (s[a] < lo[a] || s[a] > hi[a]) return false;
            continue;
        }
        double ta = (lo[a] - s[a]) / d[a];
        double tb = (hi[a] - s[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t0 < t1;
}

// Trilinear sample at continuous voxel coordinates already inside
// [0, dims-1] per axis (callers guarantee this via the hull clip).
inline double sample_trilinear(const Volume& vol, double cx, double cy, double cz) {
    int ix = static_cast<int>(cx);
    int iy = static_cast<int>(cy);
    int iz = static_cast<int>(cz);
    ix = std::min(ix, vol.dims[0] - 2 >= 0 ? vol.dims[0] - 2 : 0);
    iy = std::min(iy, vol.dims[1] - 2 >= 0 ? vol.dims[1] - 2 : 0);
    iz = std::min(iz, vol.dims[2] - 2 >= 0 ? vol.dims[2] - 2 : 0);
    const double fx = cx - ix;
    const double fy = cy - iy;
    const double fz = cz - iz;
    const std::size_t base = vol.index(ix, iy, iz);
    const std::size_t sx = 1;
    const std::size_t sy = static_cast<std::size_t>(vol.dims[0]);
    const std::size_t sz = sy * static_cast<std::size_t>(vol.dims[1]);
    const float* p = vol.data.data() + base;
    const double c00 = p[0] + fx * (p[sx] - p[0]);
    const double c10 = p[sy] + fx * (p[sy + sx] - p[sy]);
    const double c01 = p[sz] + fx * (p[sz + sx] - p[sz]);
    const double c11 = p[sz + sy] + fx * (p[sz + sy + sx] - p[sz + sy]);
    const double c0 = c00 + fy * (c10 - c00);
    const double c1 = c01 + fy * (c11 - c01);
    return c0 + fz * (c1 - c0);
}

double integrate_clipped(const Volume& vol, const Vec3& src, const Vec3& unit_dir,
                         double t0, double t1, double step_mm) {
    const int n = std::max(1, static_cast<int>(std::ceil((t1 - t0) / step_mm)));
    const double dt = (t1 - t0) / n;
    // Per-step increment in continuous voxel coordinates.
    const double gx = unit_dir.x * dt / vol.spacing_mm[0];
    const double gy = unit_dir.y * dt / vol.spacing_mm[1];
    const double gz = unit_dir.z * dt / vol.spacing_mm[2];
    const double tmid = t0 + 0.5 * dt;
    double cx = (src.x + unit_dir.x * tmid - vol.origin_mm[0]) / vol.spacing_mm[0];
    double cy = (src.y + unit_dir.y * tmid - vol.origin_mm[1]) / vol.spacing_mm[1];
    double cz = (src.z + unit_dir.z * tmid - vol.origin_mm[2]) / vol.spacing_mm[2];
    const auto clampc = [](double c, int n_axis) {
        return std::min(std::max(c, 0.0), static_cast<double>(n_axis - 1));
    };
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        acc += sample_trilinear(vol, clampc(cx, vol.dims[0]), clampc(cy, vol.dims[1]),
                                clampc(cz, vol.dims[2]));
        cx += gx;
        cy += gy;
        cz += gz;
    }
    return acc * dt;
}

}  // namespace

void ProjectionSet::validate() const {
    geom.validate();
    if (views.size() != geom.angles_deg.size()) {
        throw std::invalid_argument("projections: view count does not match angle count");
    }
    for (const Image& v : views) {
        if (v.width != geom.detector_px || v.height != geom.detector_px) {
            throw std::invalid_argument("projections: view shape does not match detector");
        }
        if (v.data.size() != static_cast<std::size_t>(v.width) * v.height) {
            throw std::invalid_argument("projections: view buffer size mismatch");
        }
    }
}

double integrate_ray(const Volume& vol, const Vec3& src, const Vec3& dst, double step_mm) {
    if (!(step_mm > 0.0)) throw std::invalid_argument("integrate_ray: step must be > 0");
    const Vec3 d = dst - src;
    const double len = d.norm();
    if (len < 1e-12) return 0.0;
    const Vec3 u = d * (1.0 / len);
    double t0, t1;
    if (!clip_ray(grid_hull(vol), src, u, t0, t1)) return 0.0;
    t1 = std::min(t1, len);
    if (t0 >= t1) return 0.0;
    return integrate_clipped(vol, src, u, t0, t1, step_mm);
}

void check_field_of_view(const Volume& vol, const ConeBeamGeometry& geom) {
    const GridHull hull = grid_hull(vol);
    // Extend to the physical voxel boundary so the check covers all sampled
    // matter, not just voxel centers.
    const Vec3 lo = hull.lo - Vec3{vol.spacing_mm[0] / 2, vol.spacing_mm[1] / 2,
                                   vol.spacing_mm[2] / 2};
    const Vec3 hi = hull.hi + Vec3{vol.spacing_mm[0] / 2, vol.spacing_mm[1] / 2,
                                   vol.spacing_mm[2] / 2};
    const double half = geom.detector_mm / 2.0;
    const double sdd = geom.sdd_mm();
    for (const double angle : geom.angles_deg) {
        const double b = deg_to_rad(angle);
        const double cb = std::cos(b), sb = std::sin(b);
        for (int corner = 0; corner < 8; ++corner) {
            const double x = (corner & 1) ? hi.x : lo.x;
            const double y = (corner & 2) ? hi.y : lo.y;
            const double z = (corner & 4) ? hi.z : lo.z;
            const double d = geom.sod_mm - (x * cb + y * sb);
            if (d <= 0.0) {
                throw FieldOfViewError("volume reaches behind the source at angle " +
                                       std::to_string(angle) + " deg");
            }
            const double u = sdd * (-x * sb + y * cb) / d;
            const double v = sdd * z / d;
            if (std::abs(u) > half || std::abs(v) > half) {
                throw FieldOfViewError("volume projects outside the detector at angle " +
                                       std::to_string(angle) + " deg (|u|=" +
                                       std::to_string(std::abs(u)) + " mm, |v|=" +
                                       std::to_string(std::abs(v)) + " mm, half-size=" +
                                       std::to_string(half) + " mm)");
            }
        }
    }
}

ProjectionSet forward_project(const Volume& vol, const ConeBeamGeometry& geom) {
    vol.validate();
    geom.validate();
    check_field_of_view(vol, geom);

    const double step =
        std::min({vol.spacing_mm[0], vol.spacing_mm[1], vol.spacing_mm[2]}) / 2.0;
    const int px = geom.detector_px;
    const double pitch = geom.pixel_pitch_mm();
    const double half = geom.detector_mm / 2.0;
    const GridHull hull = grid_hull(vol);

    ProjectionSet out;
    out.geom = geom;
    out.views.assign(geom.angles_deg.size(), Image(px, px));

    const std::size_t n_views = geom.angles_deg.size();
    parallel_for(n_views * static_cast<std::size_t>(px), [&](std::size_t job) {
        const std::size_t view = job / px;
        const int row = static_cast<int>(job % px);
        const double angle = geom.angles_deg[view];
        const Vec3 src = geom.source_position(angle);
        const Vec3 center = geom.detector_center(angle);
        const Vec3 eu = geom.detector_u_axis(angle);
        const Vec3 ev = geom.detector_v_axis(angle);
        const double v_mm = (row + 0.5) * pitch - half;
        Image& img = out.views[view];
        for (int col = 0; col < px; ++col) {
            const double u_mm = (col + 0.5) * pitch - half;
            const Vec3 pix = center + eu * u_mm + ev * v_mm;
            const Vec3 d = pix - src;
            const Vec3 unit = d * (1.0 / d.norm());
            double t0, t1;
            if (!clip_ray(hull, src, unit, t0, t1)) continue;
            img.at(row, col) =
                static_cast<float>(integrate_clipped(vol, src, unit, t0, t1, step));
        }
    });
    return out;
}

}  // namespace cbctcad
