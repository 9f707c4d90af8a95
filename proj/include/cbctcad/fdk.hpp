#pragma once

#include <array>
#include <vector>

#include "cbctcad/geometry.hpp"
#include "cbctcad/projector.hpp"

namespace cbctcad {

enum class FilterWindow { RamLak, Hann };

FilterWindow filter_window_from_name(const std::string& name);
const char* filter_window_name(FilterWindow w);

// Discrete ramp (Ram-Lak) convolution kernel for detector pitch tau:
//   h(0)        = 1 / (4 tau^2)
//   h(n), n odd = -1 / (n pi tau)^2
//   h(n), n even, n != 0 = 0
double ramp_kernel(int n, double pitch_mm);

// Row-wise ramp filtering via FFT: rows are zero-padded to the next power of
// two >= 2 * width before circular convolution, so the linear convolution is
// exact. The Hann window apodizes the ramp response in frequency space.
// Output is the plain discrete convolution (no pitch quadrature factor).
void ramp_filter_rows(Image& img, double pitch_mm, FilterWindow window);

// In-place cone-beam pre-weight: each pixel is scaled by
// sdd / sqrt(sdd^2 + u^2 + v^2), the cosine of the ray angle against the
// central ray.
void cosine_weight_view(Image& view, const ConeBeamGeometry& geom);

struct FdkOptions {
    std::array<int, 3> dims{64, 64, 64};
    std::array<double, 3> spacing_mm{2.8125, 2.8125, 2.8125};
    FilterWindow window = FilterWindow::Hann;
    // Short-scan redundancy handling: uniform doubling by default, Parker
    // fan-angle weighting when enabled. Ignored for (near) full scans.
    bool parker = false;
};

// Feldkamp-Davis-Kress reconstruction onto a centered grid: cosine weighting,
// row-wise ramp filtering, then distance-weighted backprojection. Requires
// angular coverage >= 175 degrees (InsufficientCoverageError otherwise).
// Coverage below 350 degrees is treated as a short scan.
Volume fdk_reconstruct(const ProjectionSet& projections, const FdkOptions& options);

// Parker short-scan redundancy weights, one per (view, detector column).
// Requires >= 2 views. Exposed for tests.
std::vector<std::vector<double>> parker_weights(const ConeBeamGeometry& geom);

// Forward projection followed by FDK back onto the source grid: the
// pseudo-acquisition used to inject sparse-view cone-beam artifacts into a
// clean volume.
Volume synthesize_pcbct(const Volume& clean, const ConeBeamGeometry& geom,
                        FilterWindow window = FilterWindow::Hann, bool parker = false);

}  // namespace cbctcad
