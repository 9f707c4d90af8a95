#include "cbctcad/fdk.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "cbctcad/errors.hpp"
#include "cbctcad/parallel.hpp"

namespace cbctcad {
namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

// FFTW planning is not thread-safe; executions on distinct buffers are.
std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

// Shared per-width row filter: the real spectrum of the padded ramp kernel
// (windowed), plus FFTW plans reused across rows via the new-array interface.
class RowRampFilter {
public:
    RowRampFilter(int width, double pitch_mm, FilterWindow window)
        : width_(width), padded_(next_pow2(2 * width)) {
        const int p = padded_;
        std::vector<double> kernel(p, 0.0);
        kernel[0] = ramp_kernel(0, pitch_mm);
        for (int n = 1; n <= p / 2; ++n) {
            const double h = ramp_kernel(n, pitch_mm);
            kernel[n] = h;
            kernel[p - n] = h;  // n == p/2 writes the same slot twice
        }

        spectrum_.resize(p / 2 + 1);
        std::vector<fftw_complex> freq(p / 2 + 1);
        std::vector<double> buf = kernel;
        {
            std::lock_guard<std::mutex> lock(fftw_plan_mutex());
            fftw_plan plan =
                fftw_plan_dft_r2c_1d(p, buf.data(), freq.data(), FFTW_ESTIMATE);
            fftw_execute(plan);
            fftw_destroy_plan(plan);
        }
        for (int k = 0; k <= p / 2; ++k) {
            // The kernel is real and even, so its spectrum is real.
            double s = freq[k][0];
            if (window == FilterWindow::Hann) {
                s *= 0.5 * (1.0 + std::cos(kPi * k / (p / 2.0)));
            }
            spectrum_[k] = s / p;  // fold in the inverse-FFT normalization
        }

        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        template_in_ = fftw_alloc_real(p);
        template_freq_ = fftw_alloc_complex(p / 2 + 1);
        forward_ = fftw_plan_dft_r2c_1d(p, template_in_, template_freq_, FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_1d(p, template_freq_, template_in_, FFTW_ESTIMATE);
    }

    ~RowRampFilter() {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
        fftw_free(template_in_);
        fftw_free(template_freq_);
    }

    RowRampFilter(const RowRampFilter&) = delete;
    RowRampFilter& operator=(const RowRampFilter&) = delete;

    struct Workspace {
        double* real = nullptr;
        fftw_complex* freq = nullptr;
        explicit Workspace(int padded) {
            real = fftw_alloc_real(padded);
            freq = fftw_alloc_complex(padded / 2 + 1);
        }
        ~Workspace() {
            fftw_free(real);
            fftw_free(freq);
        }
        Workspace(const Workspace&) = delete;
        Workspace& operator=(const Workspace&) = delete;
    };

    std::unique_ptr<Workspace> make_workspace() const {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        return std::make_unique<Workspace>(padded_);
    }

    void filter_row(float* row, Workspace& ws) const {
        for (int i = 0; i < width_; ++i) ws.real[i] = row[i];
        std::memset(ws.real + width_, 0, sizeof(double) * (padded_ - width_));
        fftw_execute_dft_r2c(forward_, ws.real, ws.freq);
        for (int k = 0; k <= padded_ / 2; ++k) {
            ws.freq[k][0] *= spectrum_[k];
            ws.freq[k][1] *= spectrum_[k];
        }
        fftw_execute_dft_c2r(inverse_, ws.freq, ws.real);
        for (int i = 0; i < width_; ++i) row[i] = static_cast<float>(ws.real[i]);
    }

private:
    int width_;
    int padded_;
    std::vector<double> spectrum_;
    double* template_in_ = nullptr;
    fftw_complex* template_freq_ = nullptr;
    fftw_plan forward_;
    fftw_plan inverse_;
};

}  // namespace

FilterWindow filter_window_from_name(const std::string& name) {
    if (name == "ram-lak" || name == "ramlak") return FilterWindow::RamLak;
    if (name == "hann") return FilterWindow::Hann;
    throw std::invalid_argument("unknown filter window: " + name);
}

const char* filter_window_name(FilterWindow w) {
    return w == FilterWindow::RamLak ? "ram-lak" : "hann";
}

double ramp_kernel(int n, double pitch_mm) {
    if (!(pitch_mm > 0.0)) throw std::invalid_argument("ramp_kernel: pitch must be > 0");
    if (n == 0) return 1.0 / (4.0 * pitch_mm * pitch_mm);
    if (n % 2 == 0) return 0.0;
    const double npt = n * kPi * pitch_mm;
    return -1.0 / (npt * npt);
}

void ramp_filter_rows(Image& img, double pitch_mm, FilterWindow window) {
    if (img.width < 2) throw std::invalid_argument("ramp_filter_rows: width must be >= 2");
    RowRampFilter filter(img.width, pitch_mm, window);
    auto ws = filter.make_workspace();
    for (int r = 0; r < img.height; ++r) {
        filter.filter_row(&img.at(r, 0), *ws);
    }
}

void cosine_weight_view(Image& view, const ConeBeamGeometry& geom) {
    if (view.width != geom.detector_px || view.height != geom.detector_px) {
        throw std::invalid_argument("cosine_weight_view: view shape mismatch");
    }
    const double sdd = geom.sdd_mm();
    const double pitch = geom.pixel_pitch_mm();
    const double half = geom.detector_mm / 2.0;
    for (int r = 0; r < view.height; ++r) {
        const double v = (r + 0.5) * pitch - half;
        for (int c = 0; c < view.width; ++c) {
            const double u = (c + 0.5) * pitch - half;
            view.at(r, c) *= static_cast<float>(sdd / std::sqrt(sdd * sdd + u * u + v * v));
        }
    }
}

std::vector<std::vector<double>> parker_weights(const ConeBeamGeometry& geom) {
    if (geom.angles_deg.size() < 2) {
        throw std::invalid_argument("parker_weights: need at least 2 views");
    }
    const double arc = deg_to_rad(geom.coverage_deg());
    // Half-overscan beyond pi; clamped at zero for an exact half scan, where
    // the ramps degenerate to the measured-once/measured-twice split.
    const double delta = std::max(0.0, (arc - kPi) / 2.0);
    const double sdd = geom.sdd_mm();
    const double pitch = geom.pixel_pitch_mm();
    const double half = geom.detector_mm / 2.0;
    const double beta0 = deg_to_rad(geom.angles_deg.front());
    const double eps = 1e-9;

    std::vector<std::vector<double>> weights(geom.angles_deg.size(),
                                             std::vector<double>(geom.detector_px, 1.0));
    for (std::size_t i = 0; i < geom.angles_deg.size(); ++i) {
        const double beta = deg_to_rad(geom.angles_deg[i]) - beta0;
        for (int c = 0; c < geom.detector_px; ++c) {
            const double u = (c + 0.5) * pitch - half;
            // Fan angle of this column's ray; positive gamma leads the
            // rotation so conjugates pair as (beta, g) and (beta+pi-2g, -g).
            const double gamma = std::atan2(-u, sdd);
            double w = 1.0;
            if (beta < 2.0 * (delta + gamma)) {
                const double den = std::max(delta + gamma, eps);
                const double s = std::sin(kPi / 4.0 * beta / den);
                w = s * s;
            } else if (beta > kPi + 2.0 * delta - 2.0 * (delta - gamma)) {
                const double den = std::max(delta - gamma, eps);
                const double s = std::sin(kPi / 4.0 * (kPi + 2.0 * delta - beta) / den);
                w = s * s;
            }
            weights[i][c] = std::min(std::max(w, 0.0), 1.0) * 2.0;
        }
    }
    return weights;
}

Volume fdk_reconstruct(const ProjectionSet& projections, const FdkOptions& options) {
    projections.validate();
    const ConeBeamGeometry& geom = projections.geom;
    if (geom.angles_deg.size() < 2) {
        throw InsufficientCoverageError("fdk: need at least 2 views");
    }
    const double coverage = geom.coverage_deg();
    if (coverage < 175.0) {
        throw InsufficientCoverageError("fdk: angular coverage " + std::to_string(coverage) +
                                        " deg is below the 175 deg minimum");
    }
    const bool short_scan = coverage < 350.0;

    const int px = geom.detector_px;
    const double pitch = geom.pixel_pitch_mm();
    const double half = geom.detector_mm / 2.0;
    const double sod = geom.sod_mm;
    const double sdd = geom.sdd_mm();
    const std::size_t n_views = projections.views.size();

    // Stage 1+2: cosine weight and ramp-filter every view (working copies).
    std::vector<Image> filtered = projections.views;
    RowRampFilter filter(px, pitch, options.window);
    parallel_for(n_views, [&](std::size_t i) {
        cosine_weight_view(filtered[i], geom);
        auto ws = filter.make_workspace();
        for (int r = 0; r < px; ++r) filter.filter_row(&filtered[i].at(r, 0), *ws);
    });

    std::vector<std::vector<double>> redundancy;
    if (short_scan && options.parker) redundancy = parker_weights(geom);

    // Per-view trig tables.
    std::vector<double> cosb(n_views), sinb(n_views);
    for (std::size_t i = 0; i < n_views; ++i) {
        const double b = deg_to_rad(geom.angles_deg[i]);
        cosb[i] = std::cos(b);
        sinb[i] = std::sin(b);
    }

    Volume out = Volume::centered(options.dims, options.spacing_mm);
    const double step_rad = deg_to_rad(coverage) / static_cast<double>(n_views);
    // Backprojection scale: quadrature pitch from the convolution, the
    // sod*sdd/2 cone-beam factor, the view spacing, and the uniform 2x
    // short-scan redundancy weight unless Parker weights carry it.
    double scale = step_rad * pitch * sod * sdd / 2.0;
    if (short_scan && !options.parker) scale *= 2.0;

    const int nx = out.dims[0], ny = out.dims[1], nz = out.dims[2];
    parallel_for(static_cast<std::size_t>(nz), [&](std::size_t zi) {
        const int z = static_cast<int>(zi);
        const double wz = out.origin_mm[2] + z * out.spacing_mm[2];
        for (int y = 0; y < ny; ++y) {
            const double wy = out.origin_mm[1] + y * out.spacing_mm[1];
            for (int x = 0; x < nx; ++x) {
                const double wx = out.origin_mm[0] + x * out.spacing_mm[0];
                double acc = 0.0;
                for (std::size_t i = 0; i < n_views; ++i) {
                    const double d = sod - (wx * cosb[i] + wy * sinb[i]);
                    if (d <= 1e-6) continue;
                    const double inv_d = 1.0 / d;
                    const double u = sdd * (-wx * sinb[i] + wy * cosb[i]) * inv_d;
                    const double v = sdd * wz * inv_d;
                    const double cf = (u + half) / pitch - 0.5;
                    const double rf = (v + half) / pitch - 0.5;
                    if (cf < 0.0 || cf > px - 1 || rf < 0.0 || rf > px - 1) continue;
                    int c0 = static_cast<int>(cf);
                    int r0 = static_cast<int>(rf);
                    c0 = std::min(c0, px - 2);
                    r0 = std::min(r0, px - 2);
                    const double fc = cf - c0;
                    const double fr = rf - r0;
                    const Image& img = filtered[i];
                    const double q00 = img.at(r0, c0);
                    const double q01 = img.at(r0, c0 + 1);
                    const double q10 = img.at(r0 + 1, c0);
                    const double q11 = img.at(r0 + 1, c0 + 1);
                    double q = q00 + fc * (q01 - q00) + fr * (q10 - q00) +
                               fc * fr * (q11 - q10 - q01 + q00);
                    if (!redundancy.empty()) {
                        // Column weight interpolated to the sample position.
                        const auto& wrow = redundancy[i];
                        q *= wrow[c0] + fc * (wrow[c0 + 1] - wrow[c0]);
                    }
                    acc += q * inv_d * inv_d;
                }
                out.at(x, y, z) = static_cast<float>(acc * scale);
            }
        }
    });
    return out;
}

Volume synthesize_pcbct(const Volume& clean, const ConeBeamGeometry& geom,
                        FilterWindow window, bool parker) {
    const ProjectionSet projections = forward_project(clean, geom);
    FdkOptions opt;
    opt.dims = clean.dims;
    opt.spacing_mm = clean.spacing_mm;
    opt.window = window;
    opt.parker = parker;
    return fdk_reconstruct(projections, opt);
}

}  // namespace cbctcad
