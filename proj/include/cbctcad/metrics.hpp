#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cbctcad/geometry.hpp"

namespace cbctcad {

// Square confusion matrix; rows index the true class, columns the predicted
// class, in a fixed externally-documented class order.
struct ConfusionMatrix {
    explicit ConfusionMatrix(int n_classes = 3)
        : n(n_classes), counts(static_cast<std::size_t>(n_classes) * n_classes, 0) {}

    int n;
    std::vector<std::int64_t> counts;

    std::int64_t& at(int truth, int predicted) {
        return counts[static_cast<std::size_t>(truth) * n + predicted];
    }
    std::int64_t at(int truth, int predicted) const {
        return counts[static_cast<std::size_t>(truth) * n + predicted];
    }
    void add(int truth, int predicted);
    std::int64_t total() const;
};

double accuracy(const ConfusionMatrix& cm);

// Precision = TP/(TP+FP), recall = TP/(TP+FN), F1 harmonic mean; any 0/0
// is reported as 0.
struct PrfEntry {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};
std::vector<PrfEntry> per_class_prf(const ConfusionMatrix& cm);

struct PrfAverages {
    PrfEntry macro;     // unweighted mean over classes
    PrfEntry weighted;  // support-weighted mean
};
PrfAverages average_prf(const ConfusionMatrix& cm);

// Binary ROC AUC via the Mann-Whitney statistic with midranks, so ties
// contribute 1/2. labels are 0/1; scores are the positive-class scores.
// Throws UndefinedAucError when either class is absent.
double roc_auc(const std::vector<int>& labels, const std::vector<double>& scores);

struct MulticlassAuc {
    double macro = 0.0;  // unweighted mean of one-vs-rest AUCs
    double micro = 0.0;  // AUC over the pooled binarized (sample, class) pairs
    std::vector<double> one_vs_rest;
};
// probabilities[i][k] is the score of sample i for class k. Throws
// UndefinedAucError when some class has no positive or no negative samples.
MulticlassAuc multiclass_auc(const std::vector<int>& labels,
                             const std::vector<std::vector<double>>& probabilities);

// PSNR in dB against the given data range; identical images give +infinity.
double psnr(const Image& reference, const Image& test, double data_range);

struct SsimOptions {
    double data_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
    double sigma = 1.5;  // Gaussian weighting, 11x11 taps
};
// Mean local SSIM over the valid (fully-overlapping) window positions.
// Images must be at least 11 pixels on each side.
double ssim(const Image& reference, const Image& test, const SsimOptions& options = {});

// Mean SSIM over a dyadic pyramid (2x2 mean pooling between levels); levels
// that become smaller than the window stop the recursion.
double multiscale_ssim(const Image& reference, const Image& test, int levels = 3,
                       const SsimOptions& options = {});

double mse(const Image& a, const Image& b);
double volume_rmse(const Volume& a, const Volume& b);

}  // namespace cbctcad
