#pragma once

#include <vector>

#include "cbctcad/geometry.hpp"

namespace cbctcad {

// One image per entry of geom.angles_deg; image rows index v, columns index
// u, both detector_px wide. Pixel values are line integrals in
// (attenuation unit) * mm.
struct ProjectionSet {
    ConeBeamGeometry geom;
    std::vector<Image> views;

    void validate() const;  // throws std::invalid_argument
};

// Line integral of trilinearly interpolated volume values along the segment
// from src toward dst, sampled at midpoints of step_mm intervals inside the
// grid hull (the box spanned by the outermost voxel centers).
double integrate_ray(const Volume& vol, const Vec3& src, const Vec3& dst, double step_mm);

// Ray-driven cone-beam forward projection with trilinear sampling at a fixed
// step of min(spacing)/2. Throws FieldOfViewError (naming the first offending
// angle) when any corner of the volume projects outside the detector.
ProjectionSet forward_project(const Volume& vol, const ConeBeamGeometry& geom);

// Throws FieldOfViewError if the volume's bounding box does not project
// inside the detector at every angle.
void check_field_of_view(const Volume& vol, const ConeBeamGeometry& geom);

}  // namespace cbctcad
