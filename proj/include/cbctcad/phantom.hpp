#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cbctcad/geometry.hpp"

namespace cbctcad {

// Per-side diagnosis classes. Order is part of every serialized artifact
// (model class order, confusion matrices, report rows); never reorder.
enum class DiagnosisLabel : int { Healthy = 0, Chronic = 1, FungalBall = 2 };

inline const char* label_name(DiagnosisLabel l) {
    switch (l) {
        case DiagnosisLabel::Healthy: return "healthy";
        case DiagnosisLabel::Chronic: return "chronic";
        case DiagnosisLabel::FungalBall: return "fungal_ball";
    }
    return "unknown";
}

DiagnosisLabel label_from_name(const std::string& name);

// Axis-aligned ellipsoid in voxel-index coordinates (continuous).
struct Ellipsoid {
    std::array<double, 3> center{0, 0, 0};
    std::array<double, 3> semi{1, 1, 1};

    double radial(double x, double y, double z) const {
        const double dx = (x - center[0]) / semi[0];
        const double dy = (y - center[1]) / semi[1];
        const double dz = (z - center[2]) / semi[2];
        return dx * dx + dy * dy + dz * dz;
    }
    bool contains(double x, double y, double z) const { return radial(x, y, z) <= 1.0; }
};

// Geometric layout of one synthetic head, in voxel-index coordinates.
// side 0 is the left half (lower x), side 1 the right half. Cavity placement
// is mirrored exactly about the volume midplane x = (nx - 1) / 2; only the
// cavity contents differ between sides.
struct CaseLayout {
    Ellipsoid head;        // outer skin surface
    Ellipsoid head_inner;  // inner surface of the skull shell
    std::array<Ellipsoid, 2> cavity;
    std::array<Ellipsoid, 2> cavity_wall;  // thin bone rim just outside each cavity
    // Compact dense-bone masses flanking each sinus at sinus height (lateral
    // and posterior buttress analogues); indices {side*2, side*2+1}. They sit
    // outside the cavities and are the dominant transaxial streak sources
    // under sparse-view reconstruction.
    std::array<Ellipsoid, 4> buttress;

    bool inside_cavity(int side, double x, double y, double z) const {
        return cavity[side].contains(x, y, z);
    }
};

struct LabeledCase {
    std::string id;
    std::uint64_t seed = 0;
    std::array<DiagnosisLabel, 2> labels{DiagnosisLabel::Healthy, DiagnosisLabel::Healthy};
    std::array<int, 2> key_slice_range{0, 0};  // inclusive y range covering the cavities
    Volume volume;
};

struct GeneratedCase {
    LabeledCase labeled;
    CaseLayout layout;
};

// Nominal attenuation values (relative units) before the per-case +-10%
// jitter: background/cavity air, soft tissue, cortical bone, fungal core.
struct PhantomValues {
    static constexpr double air = 0.02;
    static constexpr double soft = 0.3;
    static constexpr double bone = 0.9;
    static constexpr double core = 0.85;
    static constexpr double jitter_frac = 0.10;
};

// Deterministic head phantom: ellipsoidal head with a bone shell, two
// mirrored air cavities with thin bone rims, per-side contents selected by
// label. dims must be >= 32 per axis. extent_mm is the physical size of the
// cube the volume spans (isotropic voxels). Identical (seed, labels, dims,
// extent) always produce identical volumes.
GeneratedCase generate_case(std::uint64_t seed, DiagnosisLabel left, DiagnosisLabel right,
                            std::array<int, 3> dims, double extent_mm = 180.0);

struct DatasetSpec {
    int n_cases = 0;
    // Cases per label for each side's marginal distribution (healthy,
    // chronic, fungal_ball); each must sum to n_cases. Left and right label
    // sequences are shuffled independently and paired by index.
    std::array<int, 3> side_counts{0, 0, 0};
    std::array<int, 3> dims{64, 64, 64};
    double extent_mm = 180.0;
    std::uint64_t seed = 0;
    std::string id_prefix = "case";
};

std::vector<GeneratedCase> generate_dataset(const DatasetSpec& spec);

// Mean attenuation / max attenuation over the interior voxels of one cavity.
struct CavityStats {
    double mean = 0.0;
    double max = 0.0;
    std::int64_t voxels = 0;
};
CavityStats cavity_stats(const Volume& vol, const CaseLayout& layout, int side);

}  // namespace cbctcad
