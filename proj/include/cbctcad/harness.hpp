#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cbctcad/denoise.hpp"
#include "cbctcad/diagnosis.hpp"
#include "cbctcad/fdk.hpp"
#include "cbctcad/io.hpp"
#include "cbctcad/metrics.hpp"
#include "cbctcad/phantom.hpp"

namespace cbctcad {

// Desk-scale experiment defaults: small volumes and a sparse half scan keep
// the full two-arm study tractable on a laptop while preserving the artifact
// character of the full-size protocol.
struct ExperimentConfig {
    std::uint64_t seed = 1234;

    int internal_cases = 100;
    int external_cases = 20;
    std::array<int, 3> internal_counts{25, 25, 50};  // healthy, chronic, fungal_ball
    std::array<int, 3> external_counts{5, 5, 10};

    std::array<int, 3> dims{64, 64, 64};
    double extent_mm = 180.0;

    double sod_mm = 1200.0;
    double oid_mm = 200.0;
    double detector_mm = 512.0;
    int detector_px = 128;
    double angle_step_deg = 2.0;
    double arc_deg = 180.0;
    std::string window = "hann";

    int folds = 5;

    std::string denoiser = "learned";  // identity | tv | learned (the proposed arm)
    int denoiser_epochs = 40;
    double denoiser_lr = 1e-3;
    int denoiser_batch = 18;
    int denoiser_channels = 8;
    int denoiser_slices_per_case = 4;
    double tv_weight = 0.08;
    int tv_iterations = 30;

    GdConfig selector_gd;
    GdConfig classifier_gd;

    std::string out_dir = "runs/desk";
    bool write_volumes = true;

    void validate() const;  // throws std::invalid_argument
};

Json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const Json& j);

struct FoldMetrics {
    int fold = 0;
    ConfusionMatrix confusion{3};
    double accuracy = 0.0;
    std::vector<PrfEntry> per_class;  // DiagnosisLabel order
    PrfAverages averages;
    MulticlassAuc auc;
    DenoiseQuality quality;  // against clean key slices of the external set
    int no_sinus_count = 0;
};

struct MetricsReport {
    std::string arm;  // "baseline" or "proposed"
    std::vector<FoldMetrics> folds;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

struct ReportAggregate {
    MeanSd accuracy, precision_macro, recall_macro, f1_macro;
    MeanSd auc_macro, auc_micro;
    MeanSd psnr, ssim;
    std::array<MeanSd, 3> f1_per_class;
};
ReportAggregate aggregate_report(const MetricsReport& report);

// JSON/CSV serialization. Byte-identical across repeated runs of the same
// config: ordered keys, no timestamps, fully deterministic numbers.
Json report_to_json(const MetricsReport& report, const ExperimentConfig& cfg,
                    const std::vector<std::string>& internal_ids,
                    const std::vector<std::string>& external_ids,
                    const std::vector<int>& fold_of_case);
std::string report_to_csv(const MetricsReport& report);

struct ArmComparison {
    std::string metric;
    double baseline = 0.0;
    double proposed = 0.0;
    double delta = 0.0;
};
// Per-aggregate-metric deltas (proposed - baseline). Throws
// std::invalid_argument when fold counts differ.
std::vector<ArmComparison> compare_arms(const MetricsReport& baseline,
                                        const MetricsReport& proposed);
Json comparison_to_json(const std::vector<ArmComparison>& rows);
std::string comparison_to_csv(const std::vector<ArmComparison>& rows);
std::string comparison_to_table(const std::vector<ArmComparison>& rows);

struct ExperimentResult {
    MetricsReport baseline;
    MetricsReport proposed;
    std::vector<ArmComparison> comparison;
    std::filesystem::path out_dir;  // resolved output root
};

// Runs the full two-arm study: synthesize internal/external datasets, inject
// sparse-view artifacts, then per fold train the proposed-arm denoiser and
// both arms' selector+classifier on the fold's training cases and score both
// arms on the held-out external set. Writes datasets, models, reports, and
// the comparison under cfg.out_dir (resolved against CBCTCAD_OUTPUT_ROOT).
// Stage failures are rethrown nested inside a runtime_error naming the stage;
// artifacts written before the failure are left on disk.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Re-reads report_baseline.json / report_proposed.json from a run directory,
// verifies the stored aggregates match the per-fold values, and renders the
// comparison table. Throws IoError on missing/inconsistent reports.
std::string render_run_summary(const std::filesystem::path& run_dir);

}  // namespace cbctcad
