#include "cbctcad/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace cbctcad {

Vec3 ConeBeamGeometry::source_position(double angle_deg) const {
    const double b = deg_to_rad(angle_deg);
    return {sod_mm * std::cos(b), sod_mm * std::sin(b), 0.0};
}

Vec3 ConeBeamGeometry::detector_center(double angle_deg) const {
    const double b = deg_to_rad(angle_deg);
    return {-oid_mm * std::cos(b), -oid_mm * std::sin(b), 0.0};
}

Vec3 ConeBeamGeometry::detector_u_axis(double angle_deg) const {
    const double b = deg_to_rad(angle_deg);
    return {-std::sin(b), std::cos(b), 0.0};
}

Vec3 ConeBeamGeometry::detector_v_axis(double) const { return {0.0, 0.0, 1.0}; }

std::array<double, 2> ConeBeamGeometry::detector_coords(int row, int col) const {
    if (row < 0 || row >= detector_px || col < 0 || col >= detector_px) {
        throw std::invalid_argument("detector_coords: pixel (" + std::to_string(row) + ", " +
                                    std::to_string(col) + ") outside " +
                                    std::to_string(detector_px) + "x" +
                                    std::to_string(detector_px) + " detector");
    }
    const double pitch = pixel_pitch_mm();
    const double half = detector_mm / 2.0;
    return {(col + 0.5) * pitch - half, (row + 0.5) * pitch - half};
}

Vec3 ConeBeamGeometry::detector_pixel_position(double angle_deg, int row, int col) const {
    const auto uv = detector_coords(row, col);
    return detector_center(angle_deg) + detector_u_axis(angle_deg) * uv[0] +
           detector_v_axis(angle_deg) * uv[1];
}

double ConeBeamGeometry::coverage_deg() const {
    if (angles_deg.size() < 2) {
        throw std::invalid_argument("coverage_deg: need at least 2 angles");
    }
    const double step = angles_deg[1] - angles_deg[0];
    return angles_deg.back() - angles_deg.front() + step;
}

void ConeBeamGeometry::validate() const {
    if (!(sod_mm > 0.0)) throw std::invalid_argument("geometry: sod_mm must be > 0");
    if (!(oid_mm >= 0.0)) throw std::invalid_argument("geometry: oid_mm must be >= 0");
    if (!(detector_mm > 0.0)) throw std::invalid_argument("geometry: detector_mm must be > 0");
    if (detector_px < 2) throw std::invalid_argument("geometry: detector_px must be >= 2");
    if (angles_deg.empty()) throw std::invalid_argument("geometry: angle list is empty");
    for (std::size_t i = 0; i < angles_deg.size(); ++i) {
        const double a = angles_deg[i];
        if (!(a >= 0.0) || !(a < 360.0)) {
            throw std::invalid_argument("geometry: angle " + std::to_string(a) +
                                        " outside [0, 360)");
        }
        if (i > 0 && !(angles_deg[i] > angles_deg[i - 1])) {
            throw std::invalid_argument("geometry: angles must be strictly increasing");
        }
    }
}

std::vector<double> half_scan_angles(double step_deg, double arc_deg) {
    if (!(step_deg > 0.0)) throw std::invalid_argument("half_scan_angles: step must be > 0");
    if (!(arc_deg > 0.0)) throw std::invalid_argument("half_scan_angles: arc must be > 0");
    const double ratio = arc_deg / step_deg;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 || rounded < 1.0) {
        throw std::invalid_argument("half_scan_angles: step " + std::to_string(step_deg) +
                                    " does not evenly divide arc " + std::to_string(arc_deg));
    }
    const int n = static_cast<int>(rounded);
    std::vector<double> angles(n);
    for (int i = 0; i < n; ++i) angles[i] = i * step_deg;
    return angles;
}

ConeBeamGeometry make_default_geometry() {
    ConeBeamGeometry g;
    g.angles_deg = half_scan_angles(2.0, 180.0);
    g.validate();
    return g;
}

Volume Volume::centered(std::array<int, 3> dims, std::array<double, 3> spacing_mm, float fill) {
    Volume v;
    v.dims = dims;
    v.spacing_mm = spacing_mm;
    for (int a = 0; a < 3; ++a) {
        v.origin_mm[a] = -spacing_mm[a] * (dims[a] - 1) / 2.0;
    }
    v.data.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], fill);
    return v;
}

void Volume::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) throw std::invalid_argument("volume: dims must be >= 1");
        if (!(spacing_mm[a] > 0.0)) throw std::invalid_argument("volume: spacing must be > 0");
        if (!std::isfinite(origin_mm[a])) {
            throw std::invalid_argument("volume: origin must be finite");
        }
    }
    if (data.size() != voxel_count()) {
        throw std::invalid_argument("volume: data size does not match dims");
    }
    for (const float v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument("volume: non-finite voxel value");
    }
}

Image coronal_slice(const Volume& vol, int y) {
    if (y < 0 || y >= vol.dims[1]) {
        throw std::invalid_argument("coronal_slice: y index out of range");
    }
    Image img(vol.dims[0], vol.dims[2]);
    for (int z = 0; z < vol.dims[2]; ++z) {
        for (int x = 0; x < vol.dims[0]; ++x) {
            img.at(z, x) = vol.at(x, y, z);
        }
    }
    return img;
}

void set_coronal_slice(Volume& vol, int y, const Image& slice) {
    if (y < 0 || y >= vol.dims[1]) {
        throw std::invalid_argument("set_coronal_slice: y index out of range");
    }
    if (slice.width != vol.dims[0] || slice.height != vol.dims[2]) {
        throw std::invalid_argument("set_coronal_slice: slice shape mismatch");
    }
    for (int z = 0; z < vol.dims[2]; ++z) {
        for (int x = 0; x < vol.dims[0]; ++x) {
            vol.at(x, y, z) = slice.at(z, x);
        }
    }
}

}  // namespace cbctcad
