#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cbctcad/geometry.hpp"
#include "cbctcad/phantom.hpp"

namespace cbctcad {

// ---------------------------------------------------------------------------
// Hand-crafted features. Feature order is frozen and recorded in model file
// headers via the spec strings below; changing the order is a format break.
// ---------------------------------------------------------------------------

// Per-slice features, in order: 16-bin intensity histogram over [0, 1)
// (fractions, values clamped into the range), mean, population variance,
// fraction of pixels < 0.1, and the mean central-difference gradient
// magnitude over interior pixels. All are invariant to left-right mirroring.
inline constexpr const char* kSliceFeatureSpec =
    "slice-v1:hist16[0,1),mean,var,lowfrac<0.1,gradmagmean";
inline constexpr int kSliceFeatureCount = 20;
std::vector<double> slice_features(const Image& slice);

// Per-side sub-volume features over the sinus region: the ellipsoid inscribed
// in the fractional box x in [0.44, 0.76) of the side width (x = 0 is the
// lateral edge, x = 1 touches the midline; sides from split_sides share this
// convention), y in [0.18, 0.82) of the depth (the input is the key-slice
// sub-stack, whose y extent tracks the cavity), z in [0.43, 0.55) of the
// height. The ellipsoid sits inside the cavity across its placement jitter —
// an axis-aligned box would poke its corners into the bright bony wall — so
// the features read cavity content: aeration (low mean), opacification
// (mid-value mass), hyperdense core (high fraction / max / upper histogram).
// Order: mean, population variance, max, fraction of voxels > high_threshold,
// 16-bin histogram over [0, 1).
inline constexpr const char* kSideFeatureSpec =
    "side-v4:mean,var,max,highfrac,hist16[0,1);"
    "sinus_ellipsoid(x0.44-0.76,y0.18-0.82,z0.43-0.55)";
inline constexpr int kSideFeatureCount = 20;
inline constexpr double kSinusBoxX0 = 0.44, kSinusBoxX1 = 0.76;
inline constexpr double kSinusBoxY0 = 0.18, kSinusBoxY1 = 0.82;
inline constexpr double kSinusBoxZ0 = 0.43, kSinusBoxZ1 = 0.55;
std::vector<double> side_features(const Volume& side_volume, double high_threshold);

// ---------------------------------------------------------------------------
// Shared building blocks.
// ---------------------------------------------------------------------------

// Per-feature z-score standardization; constants are fitted on training data
// and stored with the model weights.
struct StandardScaler {
    std::vector<double> mean;
    std::vector<double> sd;  // floored at 1e-8

    void fit(const std::vector<std::vector<double>>& samples);
    std::vector<double> transform(const std::vector<double>& x) const;
};

struct GdConfig {
    int iterations = 400;
    double learning_rate = 0.5;
    double l2 = 1e-3;  // keeps weights finite on separable data
};

// ---------------------------------------------------------------------------
// Stage 1: key-slice selector (logistic regression over slice features).
// ---------------------------------------------------------------------------

struct SelectorCase {
    const Volume* volume = nullptr;
    std::array<int, 2> key_range{0, 0};  // inclusive ground-truth y interval
};

struct SelectorTrainConfig {
    GdConfig gd;
    std::uint64_t seed = 11;  // reserved; training itself is order-canonical
};

class KeySliceSelector {
public:
    KeySliceSelector() = default;
    KeySliceSelector(StandardScaler scaler, std::vector<double> weights, double bias,
                     double threshold);

    double slice_probability(const Image& slice) const;
    std::vector<double> probabilities(const Volume& vol) const;  // one per y slice

    // Decision threshold chosen during training by maximizing F1.
    double threshold() const { return threshold_; }

    // Longest run of consecutive slices with probability >= threshold; ties
    // broken by higher mean probability. Throws NoSinusFoundError when no
    // slice is positive.
    std::array<int, 2> select(const Volume& vol) const;

    const StandardScaler& scaler() const { return scaler_; }
    const std::vector<double>& weights() const { return weights_; }
    double bias() const { return bias_; }

private:
    StandardScaler scaler_;
    std::vector<double> weights_;
    double bias_ = 0.0;
    double threshold_ = 0.5;
};

// Trains on every slice of every case, labeling slices inside the key range
// positive. Throws std::invalid_argument on empty input and
// TrainingFailureError when only one class is present. Results are invariant
// to the order of the cases (samples are canonically sorted internally).
KeySliceSelector train_key_slice_selector(const std::vector<SelectorCase>& cases,
                                          const SelectorTrainConfig& config = {});

// Per-slice binary accuracy of the selector's threshold decision.
double selector_slice_accuracy(const KeySliceSelector& selector,
                               const std::vector<SelectorCase>& cases);

// ---------------------------------------------------------------------------
// Stage 2: per-side softmax classifier over sub-volume features.
// ---------------------------------------------------------------------------

struct SideSample {
    const Volume* side_volume = nullptr;  // one side of the key-slice sub-stack
    DiagnosisLabel label = DiagnosisLabel::Healthy;
};

struct SideClassifierConfig {
    GdConfig gd;
    double high_threshold = 0.6;
    std::uint64_t seed = 13;  // reserved; training itself is order-canonical
};

class SideClassifier {
public:
    SideClassifier() = default;
    SideClassifier(StandardScaler scaler, std::vector<double> weights, std::vector<double> bias,
                   double high_threshold);

    // Probabilities in DiagnosisLabel order (healthy, chronic, fungal_ball).
    std::vector<double> predict_proba(const Volume& side_volume) const;
    DiagnosisLabel predict(const Volume& side_volume) const;

    double high_threshold() const { return high_threshold_; }
    const StandardScaler& scaler() const { return scaler_; }
    const std::vector<double>& weights() const { return weights_; }  // 3 x F row-major
    const std::vector<double>& bias() const { return bias_; }

private:
    StandardScaler scaler_;
    std::vector<double> weights_;
    std::vector<double> bias_;
    double high_threshold_ = 0.6;
};

// Throws std::invalid_argument on empty input, TrainingFailureError when any
// class is missing from the training set. Order-canonical like the selector.
SideClassifier train_side_classifier(const std::vector<SideSample>& samples,
                                     const SideClassifierConfig& config = {});

// Multinomial cross-entropy (plus L2 term) and its analytic gradient for the
// flat parameter vector [W row-major (n_classes x n_features), b]; exposed
// for finite-difference checks. features are already standardized.
double softmax_loss_and_gradient(const std::vector<std::vector<double>>& features,
                                 const std::vector<int>& labels, int n_classes,
                                 const std::vector<double>& params, double l2,
                                 std::vector<double>& gradient);

// ---------------------------------------------------------------------------
// Pipeline: selector -> sub-stack -> split -> per-side classification.
// ---------------------------------------------------------------------------

// Copies the inclusive y interval into a new volume (origin preserved).
Volume extract_substack(const Volume& vol, std::array<int, 2> y_range);

// Splits at the x midline into (left, right); the right half is mirrored so
// both use the same local convention (x = 0 lateral, x = nx/2 - 1 at the
// midline) and one classifier serves both sides. Each half's origin is
// re-centered so the half is symmetric about x = 0. Requires nx >= 4.
std::pair<Volume, Volume> split_sides(const Volume& vol);

struct SideResult {
    DiagnosisLabel label = DiagnosisLabel::Healthy;
    std::vector<double> probabilities;
};

struct Diagnosis {
    std::array<int, 2> slice_interval{0, 0};
    std::array<SideResult, 2> sides;  // left, right; ties go to the severer label
};

// Full two-stage read of one volume. Propagates NoSinusFoundError from the
// selector.
Diagnosis diagnose(const KeySliceSelector& selector, const SideClassifier& classifier,
                   const Volume& vol);

// Occlusion saliency for the classifier's predicted class on one side
// sub-volume: a cube of patch voxels (stride-stepped) is replaced by the
// sub-volume mean and the drop in predicted-class probability is spread over
// the patch; overlaps are averaged and the map is min-max normalized to
// [0, 1] (a constant map becomes all zeros). High values mark evidence
// supporting the prediction.
Volume occlusion_saliency(const SideClassifier& classifier, const Volume& side_volume,
                          int patch = 8, int stride = 4);

// ---------------------------------------------------------------------------
// Persistence: both stages in one versioned model file.
// ---------------------------------------------------------------------------

struct DiagnosisModel {
    KeySliceSelector selector;
    SideClassifier classifier;
};

void save_diagnosis_model(const std::filesystem::path& path, const DiagnosisModel& model);
DiagnosisModel load_diagnosis_model(const std::filesystem::path& path);

}  // namespace cbctcad
