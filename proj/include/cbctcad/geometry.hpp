#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace cbctcad {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n};
    }
};

// Circular cone-beam acquisition about the z axis. At gantry angle beta
// (degrees) the source sits at sod_mm * (cos b, sin b, 0) and the flat
// detector is centered at -oid_mm * (cos b, sin b, 0), spanned by
//   e_u = (-sin b, cos b, 0)   (detector columns)
//   e_v = (0, 0, 1)            (detector rows).
// The detector is square: detector_mm on a side, detector_px pixels on a side.
struct ConeBeamGeometry {
    double sod_mm = 1200.0;     // source to isocenter
    double oid_mm = 200.0;      // isocenter to detector
    double detector_mm = 512.0; // physical side length
    int detector_px = 256;      // pixels per side
    std::vector<double> angles_deg;

    double sdd_mm() const { return sod_mm + oid_mm; }
    double pixel_pitch_mm() const { return detector_mm / detector_px; }

    Vec3 source_position(double angle_deg) const;
    Vec3 detector_center(double angle_deg) const;
    Vec3 detector_u_axis(double angle_deg) const;
    Vec3 detector_v_axis(double angle_deg) const;

    // Physical (u, v) offsets in mm of a pixel center from the detector
    // center; row indexes v, col indexes u. Throws std::invalid_argument when
    // the indices fall outside the detector.
    std::array<double, 2> detector_coords(int row, int col) const;

    // World position of a pixel center at the given gantry angle.
    Vec3 detector_pixel_position(double angle_deg, int row, int col) const;

    // Angular coverage in degrees: (max - min) + step, treating the angle
    // list as samples of a uniform arc. Requires >= 2 angles for a step.
    double coverage_deg() const;

    // Throws std::invalid_argument when any invariant fails.
    void validate() const;
};

// Uniform angles [0, arc_deg) with the given step: 0, step, ..., arc - step.
// Throws std::invalid_argument when step <= 0, arc <= 0, or step does not
// divide arc.
std::vector<double> half_scan_angles(double step_deg, double arc_deg = 180.0);

ConeBeamGeometry make_default_geometry();

inline double deg_to_rad(double d) { return d * 0.017453292519943295769236907684886; }

// Dense float32 voxel grid. data is x-fastest: index (x, y, z) lives at
// x + nx * (y + ny * z). origin is the world position of voxel (0, 0, 0)'s
// center; the grid is axis-aligned with per-axis spacing in mm.
struct Volume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::array<double, 3> origin_mm{0.0, 0.0, 0.0};
    std::vector<float> data;

    static Volume centered(std::array<int, 3> dims, std::array<double, 3> spacing_mm,
                           float fill = 0.0f);

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }
    float at(int x, int y, int z) const { return data[index(x, y, z)]; }
    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    Vec3 voxel_center(int x, int y, int z) const {
        return {origin_mm[0] + x * spacing_mm[0], origin_mm[1] + y * spacing_mm[1],
                origin_mm[2] + z * spacing_mm[2]};
    }
    std::array<double, 3> extent_mm() const {
        return {dims[0] * spacing_mm[0], dims[1] * spacing_mm[1], dims[2] * spacing_mm[2]};
    }

    // Shape/spacing sanity plus all-finite data. Throws std::invalid_argument.
    void validate() const;
};

// Single-channel float image, row-major: pixel (row, col) at row * width + col.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    float& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
    float at(int row, int col) const {
        return data[static_cast<std::size_t>(row) * width + col];
    }
};

// Coronal slice at fixed y: columns follow x, rows follow z.
Image coronal_slice(const Volume& vol, int y);
void set_coronal_slice(Volume& vol, int y, const Image& slice);

}  // namespace cbctcad
