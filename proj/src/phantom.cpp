#include "cbctcad/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cbctcad/rng.hpp"

namespace cbctcad {
namespace {

// Smooth direction-dependent radius modulation used for organic-looking
// boundaries: a fixed random quadratic form over the unit direction, scaled
// so |modulation| <= amp.
struct BoundaryWobble {
    std::array<double, 6> coeff{};  // xx, yy, zz, xy, yz, zx
    double amp = 0.0;

    static BoundaryWobble make(Rng& rng, double amp) {
        BoundaryWobble w;
        double norm = 0.0;
        for (auto& c : w.coeff) {
            c = rng.uniform(-1.0, 1.0);
            norm += std::abs(c);
        }
        if (norm > 0.0) {
            for (auto& c : w.coeff) c /= norm;
        }
        w.amp = amp;
        return w;
    }

    // d must be a unit direction vector; result is in [-amp, amp].
    double operator()(double dx, double dy, double dz) const {
        const double q = coeff[0] * dx * dx + coeff[1] * dy * dy + coeff[2] * dz * dz +
                         coeff[3] * dx * dy + coeff[4] * dy * dz + coeff[5] * dz * dx;
        return amp * q;
    }
};

// Normalized offset of (x,y,z) from ellipsoid e: radius rho (1 = boundary)
// and unit direction in the ellipsoid's normalized frame.
struct RadialPos {
    double rho;
    double dx, dy, dz;
};

RadialPos radial_pos(const Ellipsoid& e, double x, double y, double z) {
    const double ux = (x - e.center[0]) / e.semi[0];
    const double uy = (y - e.center[1]) / e.semi[1];
    const double uz = (z - e.center[2]) / e.semi[2];
    const double r = std::sqrt(ux * ux + uy * uy + uz * uz);
    if (r < 1e-12) return {0.0, 1.0, 0.0, 0.0};
    return {r, ux / r, uy / r, uz / r};
}

// One component of the fungal core, in cavity-normalized coordinates (the
// frame where the cavity is the unit ball).
struct CoreLump {
    std::array<double, 3> center{0, 0, 0};
    double rho = 0.0;
};

struct SideContent {
    DiagnosisLabel label;
    double fill_value = 0.0;        // opacification value
    double core_value = 0.0;        // fungal core value
    double fill_rho = 0.0;          // fill boundary radius (fraction of cavity)
    BoundaryWobble wobble;          // fill boundary undulation
    std::vector<CoreLump> lumps;    // fungal only: connected hyperdense chain
};

// min_cavity_semi_vox: smallest cavity semi-axis in voxels, used to size core
// lumps in absolute voxel units regardless of grid resolution.
SideContent make_side_content(DiagnosisLabel label, Rng rng, double min_cavity_semi_vox) {
    SideContent c;
    c.label = label;
    switch (label) {
        case DiagnosisLabel::Healthy:
            break;
        case DiagnosisLabel::Chronic:
            c.fill_value = PhantomValues::soft * rng.jitter(PhantomValues::jitter_frac);
            // Opacification extent varies case to case (mild mucosal disease
            // to near-total opacification); its outer boundary undulates
            // smoothly, leaving a varying air rim. The mild tail is sized so
            // its reconstructed signature competes with half-scan ghosting,
            // which is what makes artifact removal diagnostically relevant.
            c.fill_rho = rng.uniform(0.28, 0.95);
            c.wobble = BoundaryWobble::make(rng, 0.06);
            break;
        case DiagnosisLabel::FungalBall: {
            // Opacification (near-total: the ball sits in a filled sinus)
            // containing an irregular hyperdense core totaling ~10-30% of the
            // cavity volume. The core is a folded chain of overlapping
            // voxel-scale specks (calcification texture) threading through
            // the fill: one connected irregular mass in the clean volume
            // whose peak value is genuinely fragile at reconstruction
            // resolution.
            c.fill_value = PhantomValues::soft * rng.jitter(PhantomValues::jitter_frac);
            c.fill_rho = rng.uniform(0.70, 0.95);
            c.wobble = BoundaryWobble::make(rng, 0.06);
            c.core_value = PhantomValues::core * rng.jitter(PhantomValues::jitter_frac);
            const double vol_frac = rng.uniform(0.10, 0.30);
            // Speck minor semi-axis 1.0-1.6 voxels, expressed in the
            // cavity-normalized frame.
            const double lump_rho =
                rng.uniform(1.0, 1.6) / std::max(min_cavity_semi_vox, 2.0);
            // Chain self-overlap eats part of the nominal volume; the 1.45
            // factor compensates (calibrated on generated volumes).
            const int n_lumps = std::clamp(
                static_cast<int>(std::lround(1.45 * vol_frac / std::pow(lump_rho, 3))), 6,
                400);
            const double reach = std::max(0.10, c.fill_rho * 0.92 - lump_rho);
            std::array<double, 3> pos;
            for (auto& p : pos) p = rng.uniform(-0.2, 0.2);
            for (int i = 0; i < n_lumps; ++i) {
                const double r =
                    std::sqrt(pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]);
                if (r > reach) {
                    for (auto& p : pos) p *= reach / r;
                }
                c.lumps.push_back({pos, lump_rho * rng.jitter(0.2)});
                std::array<double, 3> dir;
                double norm = 0.0;
                for (auto& d : dir) {
                    d = rng.uniform(-1.0, 1.0);
                    norm += d * d;
                }
                norm = std::sqrt(std::max(norm, 1e-9));
                // Step less than two radii: consecutive specks overlap, so
                // the chain stays connected.
                const double step = lump_rho * rng.uniform(1.2, 1.7);
                for (int k = 0; k < 3; ++k) pos[k] += dir[k] / norm * step;
            }
            break;
        }
    }
    return c;
}

float content_value(const SideContent& c, const Ellipsoid& cavity, double x, double y,
                    double z, double air_value) {
    switch (c.label) {
        case DiagnosisLabel::Healthy:
            return static_cast<float>(air_value);
        case DiagnosisLabel::Chronic: {
            const RadialPos p = radial_pos(cavity, x, y, z);
            const double boundary = c.fill_rho * (1.0 + c.wobble(p.dx, p.dy, p.dz));
            return static_cast<float>(p.rho <= boundary ? c.fill_value : air_value);
        }
        case DiagnosisLabel::FungalBall: {
            const double ux = (x - cavity.center[0]) / cavity.semi[0];
            const double uy = (y - cavity.center[1]) / cavity.semi[1];
            const double uz = (z - cavity.center[2]) / cavity.semi[2];
            for (const auto& l : c.lumps) {
                const double dx = (ux - l.center[0]) / l.rho;
                const double dy = (uy - l.center[1]) / l.rho;
                const double dz = (uz - l.center[2]) / l.rho;
                if (dx * dx + dy * dy + dz * dz <= 1.0) {
                    return static_cast<float>(c.core_value);
                }
            }
            const RadialPos p = radial_pos(cavity, x, y, z);
            const double fill_boundary = c.fill_rho * (1.0 + c.wobble(p.dx, p.dy, p.dz));
            return static_cast<float>(p.rho <= fill_boundary ? c.fill_value : air_value);
        }
    }
    return static_cast<float>(air_value);
}

}  // namespace

DiagnosisLabel label_from_name(const std::string& name) {
    if (name == "healthy") return DiagnosisLabel::Healthy;
    if (name == "chronic") return DiagnosisLabel::Chronic;
    if (name == "fungal_ball") return DiagnosisLabel::FungalBall;
    throw std::invalid_argument("unknown diagnosis label: " + name);
}

GeneratedCase generate_case(std::uint64_t seed, DiagnosisLabel left, DiagnosisLabel right,
                            std::array<int, 3> dims, double extent_mm) {
    for (const int d : dims) {
        if (d < 32) throw std::invalid_argument("generate_case: dims must be >= 32 per axis");
    }
    if (!(extent_mm > 0.0)) throw std::invalid_argument("generate_case: extent_mm must be > 0");

    Rng root(seed);
    Rng shape_rng = root.fork("shape");
    Rng value_rng = root.fork("values");

    const double nx = dims[0], ny = dims[1], nz = dims[2];
    const double mid_x = (nx - 1) / 2.0;

    CaseLayout layout;
    // Head: centered in x (cavity mirroring is about the volume midplane),
    // slightly jittered in y/z. The y semi-axis stays <= 0.42 * ny so the
    // anterior/posterior margins remain pure air.
    layout.head.center = {mid_x, (ny - 1) / 2.0 + shape_rng.uniform(-0.02, 0.02) * ny,
                          (nz - 1) / 2.0 + shape_rng.uniform(-0.02, 0.02) * nz};
    layout.head.semi = {0.42 * nx * shape_rng.jitter(0.05), 0.38 * ny * shape_rng.jitter(0.05),
                        0.40 * nz * shape_rng.jitter(0.05)};
    layout.head_inner = layout.head;
    const double shell = shape_rng.uniform(0.88, 0.92);
    for (auto& s : layout.head_inner.semi) s *= shell;

    // Cavities: mirrored placement, identical shape. Offsets keep a clear
    // soft-tissue gap at the midline and keep the wall inside the skull.
    const double cav_dx = 0.20 * nx * shape_rng.jitter(0.1);
    const double cav_cy = layout.head.center[1] + shape_rng.uniform(-0.03, 0.03) * ny;
    const double cav_cz = layout.head.center[2] + shape_rng.uniform(-0.05, 0.02) * nz;
    const std::array<double, 3> cav_semi = {0.105 * nx * shape_rng.jitter(0.1),
                                            0.14 * ny * shape_rng.jitter(0.1),
                                            0.13 * nz * shape_rng.jitter(0.1)};
    // Dense peri-sinus bone (lateral and posterior buttress analogues):
    // compact masses beside each cavity at sinus height. Under sparse-view
    // FDK these are the dominant streak sources crossing the sinus region;
    // placement jitter is drawn once so the two sides stay mirrored.
    const double lat_dx = cav_semi[0] * shape_rng.uniform(1.30, 1.50);
    const std::array<double, 3> lat_semi = {0.040 * nx * shape_rng.jitter(0.1),
                                            0.055 * ny * shape_rng.jitter(0.1),
                                            0.050 * nz * shape_rng.jitter(0.1)};
    const double post_dy = cav_semi[1] * shape_rng.uniform(1.35, 1.55);
    const std::array<double, 3> post_semi = {0.050 * nx * shape_rng.jitter(0.1),
                                             0.045 * ny * shape_rng.jitter(0.1),
                                             0.050 * nz * shape_rng.jitter(0.1)};
    const double butt_cz = cav_cz + shape_rng.uniform(-0.02, 0.02) * nz;
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        layout.cavity[side].center = {mid_x + sign * cav_dx, cav_cy, cav_cz};
        layout.cavity[side].semi = cav_semi;
        layout.cavity_wall[side] = layout.cavity[side];
        for (auto& s : layout.cavity_wall[side].semi) s *= 1.14;
        layout.buttress[side * 2 + 0] = {{mid_x + sign * (cav_dx + lat_dx), cav_cy, butt_cz},
                                         lat_semi};
        layout.buttress[side * 2 + 1] = {{mid_x + sign * cav_dx, cav_cy + post_dy, butt_cz},
                                         post_semi};
    }

    const double air = PhantomValues::air * value_rng.jitter(PhantomValues::jitter_frac);
    const double soft = PhantomValues::soft * value_rng.jitter(PhantomValues::jitter_frac);
    const double bone = PhantomValues::bone * value_rng.jitter(PhantomValues::jitter_frac);

    const double min_cav_semi = std::min({cav_semi[0], cav_semi[1], cav_semi[2]});
    const std::array<SideContent, 2> content = {
        make_side_content(left, root.fork("content_left"), min_cav_semi),
        make_side_content(right, root.fork("content_right"), min_cav_semi)};

    GeneratedCase out;
    out.layout = layout;
    out.labeled.seed = seed;
    out.labeled.labels = {left, right};
    out.labeled.volume = Volume::centered(
        dims, {extent_mm / dims[0], extent_mm / dims[1], extent_mm / dims[2]},
        static_cast<float>(air));

    Volume& vol = out.labeled.volume;
    for (int z = 0; z < dims[2]; ++z) {
        for (int y = 0; y < dims[1]; ++y) {
            for (int x = 0; x < dims[0]; ++x) {
                const double fx = x, fy = y, fz = z;
                if (!layout.head.contains(fx, fy, fz)) continue;
                float v;
                if (!layout.head_inner.contains(fx, fy, fz)) {
                    v = static_cast<float>(bone);  // skull shell
                } else {
                    v = static_cast<float>(soft);
                    bool assigned = false;
                    for (int side = 0; side < 2; ++side) {
                        if (layout.cavity[side].contains(fx, fy, fz)) {
                            v = content_value(content[side], layout.cavity[side], fx, fy, fz,
                                              air);
                            assigned = true;
                            break;
                        }
                        if (layout.cavity_wall[side].contains(fx, fy, fz)) {
                            v = static_cast<float>(bone);  // cavity rim
                            assigned = true;
                            break;
                        }
                    }
                    if (!assigned) {
                        for (const auto& b : layout.buttress) {
                            if (b.contains(fx, fy, fz)) {
                                v = static_cast<float>(bone);
                                break;
                            }
                        }
                    }
                }
                vol.at(x, y, z) = v;
            }
        }
    }

    const int y_lo = std::max(0, static_cast<int>(std::floor(cav_cy - cav_semi[1])));
    const int y_hi =
        std::min(dims[1] - 1, static_cast<int>(std::ceil(cav_cy + cav_semi[1])));
    if (y_lo > y_hi) throw std::runtime_error("generate_case: degenerate key slice range");
    out.labeled.key_slice_range = {y_lo, y_hi};
    return out;
}

std::vector<GeneratedCase> generate_dataset(const DatasetSpec& spec) {
    if (spec.n_cases < 1) throw std::invalid_argument("generate_dataset: n_cases must be >= 1");
    const int total = spec.side_counts[0] + spec.side_counts[1] + spec.side_counts[2];
    if (total != spec.n_cases) {
        throw std::invalid_argument("generate_dataset: side_counts must sum to n_cases");
    }
    for (const int c : spec.side_counts) {
        if (c < 0) throw std::invalid_argument("generate_dataset: negative side count");
    }

    Rng root(spec.seed);
    // Independent per-side label sequences with the requested marginal
    // counts, paired by index.
    std::array<std::vector<DiagnosisLabel>, 2> side_labels;
    for (int side = 0; side < 2; ++side) {
        auto& labels = side_labels[side];
        labels.reserve(spec.n_cases);
        for (int k = 0; k < 3; ++k) {
            labels.insert(labels.end(), spec.side_counts[k], static_cast<DiagnosisLabel>(k));
        }
        Rng shuffler = root.fork(side == 0 ? "labels_left" : "labels_right");
        shuffler.shuffle(labels);
    }

    std::vector<GeneratedCase> cases(spec.n_cases);
    for (int i = 0; i < spec.n_cases; ++i) {
        const std::uint64_t case_seed = root.fork("case_" + std::to_string(i)).seed();
        cases[i] = generate_case(case_seed, side_labels[0][i], side_labels[1][i], spec.dims,
                                 spec.extent_mm);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s_%04d", spec.id_prefix.c_str(), i);
        cases[i].labeled.id = buf;
    }
    return cases;
}

CavityStats cavity_stats(const Volume& vol, const CaseLayout& layout, int side) {
    if (side < 0 || side > 1) throw std::invalid_argument("cavity_stats: side must be 0 or 1");
    CavityStats s;
    double sum = 0.0;
    float mx = -1e30f;
    for (int z = 0; z < vol.dims[2]; ++z) {
        for (int y = 0; y < vol.dims[1]; ++y) {
            for (int x = 0; x < vol.dims[0]; ++x) {
                if (!layout.inside_cavity(side, x, y, z)) continue;
                const float v = vol.at(x, y, z);
                sum += v;
                mx = std::max(mx, v);
                ++s.voxels;
            }
        }
    }
    if (s.voxels == 0) throw std::invalid_argument("cavity_stats: empty cavity mask");
    s.mean = sum / static_cast<double>(s.voxels);
    s.max = mx;
    return s;
}

}  // namespace cbctcad
